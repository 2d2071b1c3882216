#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sweep/energy.hpp"
#include "sweep/errors.hpp"
#include "sweep/kernels.hpp"
#include "sweep/measures.hpp"

namespace sweep {

// minimize  1/2 w'Qw - b'w   over  w >= 0  [, 1'w <= mass_cap]
//
// Q is a principal submatrix of a kernel matrix (strictly PD); the optional
// cap realizes the total-mass bound H = h*omega(X) of the capped sweeping
// problem. Stationarity convention for the cap multiplier eta >= 0:
// (Qw - b + eta*1)_i >= 0 with equality on the support, eta*(H - 1'w) = 0.
struct NNQPProblem {
    Eigen::MatrixXd Q;
    Eigen::VectorXd b;
    std::optional<double> mass_cap;

    NNQPProblem(Eigen::MatrixXd q, Eigen::VectorXd lin,
                std::optional<double> cap = std::nullopt)
        : Q(std::move(q)), b(std::move(lin)), mass_cap(cap) {
        if (Q.rows() != Q.cols())
            throw ParameterError("NNQPProblem: Q must be square");
        if (Q.rows() < 1)
            throw ParameterError("NNQPProblem: empty problem");
        if (b.size() != Q.rows())
            throw ParameterError("NNQPProblem: b size != Q dimension");
        if (!Q.allFinite() || !b.allFinite())
            throw ParameterError("NNQPProblem: non-finite data");
        const double scale = std::max(1e-300, Q.cwiseAbs().maxCoeff());
        if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw ParameterError("NNQPProblem: Q must be symmetric");
        if (mass_cap && !(*mass_cap > 0.0))
            throw ParameterError("NNQPProblem: mass_cap must be > 0");
    }

    [[nodiscard]] Eigen::Index size() const { return Q.rows(); }
};

[[nodiscard]] inline double qp_objective(const NNQPProblem& p, const Eigen::VectorXd& w) {
    return 0.5 * w.dot(p.Q * w) - p.b.dot(w);
}

struct KKTReport {
    double stationarity_residual = 0.0;   // max_i violation of the sign/equality pattern
    double complementarity_residual = 0.0;// max_i |w_i (Qw - b + eta)_i|, plus eta*(H - 1'w)
    double feasibility_violation = 0.0;   // max(0, -min w, 1'w - H)
    std::vector<Eigen::Index> active_set; // indices with w_i above the tie-break threshold
    int iterations = 0;                   // gradient steps + polish moves
    double mass_cap_multiplier = 0.0;     // eta
    bool cap_binding = false;
    bool converged = false;
    double objective = 0.0;
    double tolerance = 0.0;               // absolute stationarity tolerance used
    double active_threshold = 0.0;        // w_i <= this counts as inactive
    std::vector<double> objective_trace;  // accepted objectives of the final gradient stage
};

struct NNQPSolution {
    Eigen::VectorXd weights;
    KKTReport report;
};

// Raised when the iteration budget runs out before certification; carries
// the best iterate so callers can inspect or report it.
class ConvergenceError : public SolverError {
public:
    ConvergenceError(const std::string& msg, NNQPSolution best_iterate)
        : SolverError(msg), best(std::move(best_iterate)) {}
    NNQPSolution best;
};

namespace detail {

inline double qp_objective_grad(const Eigen::MatrixXd& Q, const Eigen::VectorXd& b,
                                const Eigen::VectorXd& w, Eigen::VectorXd& grad) {
    const Eigen::VectorXd Qw = Q * w;
    grad = Qw - b;
    return 0.5 * w.dot(Qw) - b.dot(w);
}

struct PGOut {
    Eigen::VectorXd w;
    int iterations = 0;
    bool hit_tol = false;
    std::vector<double> trace;
};

// Monotone projected gradient with a Barzilai-Borwein step. The BB step is
// safeguarded by Armijo backtracking along the projected arc, so accepted
// objectives decrease strictly; strict convexity then identifies the
// support in finitely many steps.
inline PGOut projected_gradient(const Eigen::MatrixXd& Q, const Eigen::VectorXd& b,
                                Eigen::VectorXd w0, double stop_tol, int max_iter,
                                bool record_trace) {
    PGOut out;
    Eigen::VectorXd w = w0.cwiseMax(0.0);
    Eigen::VectorXd g;
    double f = qp_objective_grad(Q, b, w, g);
    if (record_trace) out.trace.push_back(f);

    const double base_step = 1.0 / std::max(Q.diagonal().maxCoeff(), 1e-300);
    double alpha = base_step;
    Eigen::VectorXd w_prev, g_prev;

    for (int it = 0; it < max_iter; ++it) {
        double pg = 0.0;
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            const double v = (w[i] > 0.0) ? std::abs(g[i]) : std::max(0.0, -g[i]);
            pg = std::max(pg, v);
        }
        if (pg <= stop_tol) {
            out.hit_tol = true;
            break;
        }

        if (it > 0) {
            const Eigen::VectorXd s = w - w_prev;
            const Eigen::VectorXd y = g - g_prev;
            const double sy = s.dot(y);
            alpha = (sy > 1e-300) ? s.squaredNorm() / sy : alpha * 2.0;
            alpha = std::min(std::max(alpha, 1e-12 * base_step), 1e12 * base_step);
        }
        w_prev = w;
        g_prev = g;

        const double f_old = f;
        double a = alpha;
        bool accepted = false;
        for (int bt = 0; bt < 64; ++bt) {
            Eigen::VectorXd wt = (w - a * g).cwiseMax(0.0);
            const Eigen::VectorXd d = wt - w;
            if (d.lpNorm<Eigen::Infinity>() == 0.0) break;
            const double gd = g.dot(d); // < 0 on the projected arc
            Eigen::VectorXd gt;
            const double ft = qp_objective_grad(Q, b, wt, gt);
            if (ft <= f_old + 1e-4 * gd) {
                w = std::move(wt);
                g = std::move(gt);
                f = ft;
                accepted = true;
                break;
            }
            a *= 0.5;
        }
        ++out.iterations;
        if (!accepted) break; // floating-point floor: no strictly decreasing step left
        if (record_trace) out.trace.push_back(f);
    }
    out.w = std::move(w);
    return out;
}

struct PolishOut {
    Eigen::VectorXd w;
    double eta = 0.0;
    bool cap_binding = false;
    int moves = 0;
    bool ok = false;
};

// Primal active-set refinement from a detected support: equality solves on
// the support (bordered with 1'w = H when the cap binds), dropping negative
// weights and admitting the worst gradient violator until the KKT pattern
// holds at solve precision.
inline PolishOut active_set_polish(const Eigen::MatrixXd& Q, const Eigen::VectorXd& b,
                                   const std::optional<double>& cap,
                                   std::vector<Eigen::Index> S, bool bind_cap,
                                   int move_cap) {
    const Eigen::Index m = Q.rows();
    const double bscale = std::max(b.cwiseAbs().maxCoeff(), 1e-300);
    const double grad_tol = 1e-13 * bscale;

    std::vector<char> in_set(static_cast<size_t>(m), 0);
    for (Eigen::Index i : S) in_set[static_cast<size_t>(i)] = 1;

    PolishOut out;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
    double eta = 0.0;

    for (int move = 0; move < move_cap; ++move) {
        out.moves = move + 1;
        const auto s = static_cast<Eigen::Index>(S.size());

        if (s == 0) {
            w.setZero();
            eta = 0.0;
            bind_cap = false;
        } else {
            Eigen::MatrixXd QSS(s, s);
            Eigen::VectorXd bS(s);
            for (Eigen::Index i = 0; i < s; ++i) {
                bS[i] = b[S[static_cast<size_t>(i)]];
                for (Eigen::Index j = 0; j < s; ++j)
                    QSS(i, j) = Q(S[static_cast<size_t>(i)], S[static_cast<size_t>(j)]);
            }

            Eigen::VectorXd wS;
            if (bind_cap) {
                Eigen::MatrixXd K = Eigen::MatrixXd::Zero(s + 1, s + 1);
                K.topLeftCorner(s, s) = QSS;
                K.topRightCorner(s, 1).setOnes();
                K.bottomLeftCorner(1, s).setOnes();
                Eigen::VectorXd rhs(s + 1);
                rhs.head(s) = bS;
                rhs[s] = *cap;
                const Eigen::VectorXd z = Eigen::PartialPivLU<Eigen::MatrixXd>(K).solve(rhs);
                if (!z.allFinite())
                    throw SolverError("solve_nnqp: singular bordered KKT system");
                wS = z.head(s);
                eta = z[s];
                if (eta < 0.0) {
                    // Cap not actually binding; a barely negative multiplier is
                    // a degenerate tight-but-inactive cap and is clamped.
                    if (eta < -1e-12 * bscale) {
                        bind_cap = false;
                        continue;
                    }
                    eta = 0.0;
                    bind_cap = false;
                }
            } else {
                Eigen::LLT<Eigen::MatrixXd> llt(QSS);
                if (llt.info() == Eigen::Success) {
                    wS = llt.solve(bS);
                } else {
                    Eigen::LDLT<Eigen::MatrixXd> ldlt(QSS);
                    if (ldlt.info() != Eigen::Success)
                        throw SolverError("solve_nnqp: support factorization failed");
                    wS = ldlt.solve(bS);
                }
                if (!wS.allFinite())
                    throw SolverError("solve_nnqp: non-finite support solve");
                eta = 0.0;
            }

            Eigen::Index drop = -1;
            double worst = -1e-13 * std::max(1.0, wS.cwiseAbs().maxCoeff());
            for (Eigen::Index i = 0; i < s; ++i) {
                if (wS[i] < worst) {
                    worst = wS[i];
                    drop = i;
                }
            }
            if (drop >= 0) {
                in_set[static_cast<size_t>(S[static_cast<size_t>(drop)])] = 0;
                S.erase(S.begin() + drop);
                continue;
            }

            w.setZero();
            for (Eigen::Index i = 0; i < s; ++i)
                w[S[static_cast<size_t>(i)]] = std::max(0.0, wS[i]);

            if (cap && !bind_cap && w.sum() > *cap * (1.0 + 1e-15)) {
                bind_cap = true;
                continue;
            }
        }

        Eigen::VectorXd d = Q * w - b;
        if (eta != 0.0) d.array() += eta;
        Eigen::Index add = -1;
        double worst_g = -grad_tol;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (in_set[static_cast<size_t>(i)]) continue;
            if (d[i] < worst_g) {
                worst_g = d[i];
                add = i;
            }
        }
        if (add >= 0) {
            in_set[static_cast<size_t>(add)] = 1;
            S.push_back(add);
            continue;
        }
        out.ok = true;
        break;
    }

    out.w = std::move(w);
    out.eta = eta;
    out.cap_binding = bind_cap && eta > 0.0;
    return out;
}

inline std::vector<Eigen::Index> positive_support(const Eigen::VectorXd& w) {
    std::vector<Eigen::Index> s;
    for (Eigen::Index i = 0; i < w.size(); ++i)
        if (w[i] > 0.0) s.push_back(i);
    return s;
}

inline KKTReport certify(const NNQPProblem& p, const Eigen::VectorXd& w, double eta,
                         bool cap_binding, double tol_rel, double tol_abs,
                         int iterations, std::vector<double> trace) {
    KKTReport rep;
    rep.iterations = iterations;
    rep.mass_cap_multiplier = eta;
    rep.cap_binding = cap_binding;
    rep.tolerance = tol_abs;
    rep.objective = qp_objective(p, w);
    rep.objective_trace = std::move(trace);

    Eigen::VectorXd d = p.Q * w - p.b;
    if (eta != 0.0) d.array() += eta;

    const double wmax = w.size() ? w.maxCoeff() : 0.0;
    rep.active_threshold = tol_rel * std::max(wmax, 0.0);

    double stat = 0.0, comp = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w[i] > rep.active_threshold) {
            rep.active_set.push_back(i);
            stat = std::max(stat, std::abs(d[i]));
        } else {
            stat = std::max(stat, std::max(0.0, -d[i]));
        }
        comp = std::max(comp, std::abs(w[i] * d[i]));
    }
    double feas = std::max(0.0, -w.minCoeff());
    if (p.mass_cap) {
        const double sum = w.sum();
        feas = std::max(feas, sum - *p.mass_cap);
        comp = std::max(comp, std::abs(eta * (*p.mass_cap - sum)));
    }
    rep.stationarity_residual = stat;
    rep.complementarity_residual = comp;
    rep.feasibility_violation = feas;
    rep.converged = stat <= tol_abs && feas <= tol_abs;
    return rep;
}

} // namespace detail

// Projected Barzilai-Borwein gradient descent with dual bisection for the
// mass cap and a final active-set polish. tol is relative to ||b||_inf;
// max_iter <= 0 selects the default 50*m. The zero vector is the default
// start (always feasible); an explicit start is accepted for uniqueness
// experiments.
inline NNQPSolution solve_nnqp(const NNQPProblem& p, double tol = 1e-9, int max_iter = 0,
                               const std::optional<Eigen::VectorXd>& start = std::nullopt) {
    if (!(tol > 0.0))
        throw ParameterError("solve_nnqp: tol must be > 0");
    const auto m = p.size();
    if ((p.Q.diagonal().array() <= 0.0).any())
        throw SolverError("solve_nnqp: Q has a non-positive diagonal entry (not PD)");
    if (max_iter <= 0) max_iter = 50 * static_cast<int>(m);

    const double bscale = p.b.cwiseAbs().maxCoeff();
    const double tol_abs = tol * bscale;

    Eigen::VectorXd w0 = Eigen::VectorXd::Zero(m);
    if (start) {
        if (start->size() != m)
            throw ParameterError("solve_nnqp: start size != problem size");
        w0 = start->cwiseMax(0.0);
    }

    // Stage 1: uncapped solve (also decides whether the cap is active).
    detail::PGOut pg = detail::projected_gradient(p.Q, p.b, w0, 0.5 * tol_abs, max_iter, true);
    int iterations = pg.iterations;
    std::vector<double> trace = std::move(pg.trace);

    detail::PolishOut pol =
        detail::active_set_polish(p.Q, p.b, p.mass_cap, detail::positive_support(pg.w),
                                  /*bind_cap=*/false, /*move_cap=*/300);
    iterations += pol.moves;

    // Stage 2: dual bisection on eta when the uncapped optimum violates the cap.
    if (p.mass_cap && pol.w.sum() > *p.mass_cap) {
        const double H = *p.mass_cap;
        double lo = 0.0;
        double hi = std::max(p.b.maxCoeff(), 0.0); // b - hi*1 <= 0 forces w = 0
        Eigen::VectorXd warm = pol.w;
        std::vector<Eigen::Index> s_last;
        int stable = 0;
        for (int k = 0; k < 128; ++k) {
            const double mid = 0.5 * (lo + hi);
            const Eigen::VectorXd b_eff = p.b.array() - mid;
            detail::PGOut r =
                detail::projected_gradient(p.Q, b_eff, warm, 0.5 * tol_abs, max_iter, k == 0);
            iterations += r.iterations;
            warm = std::move(r.w);
            if (k == 0) trace = std::move(r.trace);
            auto s_mid = detail::positive_support(warm);
            if (s_mid == s_last) ++stable; else { stable = 0; s_last = std::move(s_mid); }
            if (warm.sum() > H) lo = mid; else hi = mid;
            if (stable >= 4 || (hi - lo) <= 1e-13 * (1.0 + hi)) break;
        }
        pol = detail::active_set_polish(p.Q, p.b, p.mass_cap, detail::positive_support(warm),
                                        /*bind_cap=*/true, /*move_cap=*/300);
        iterations += pol.moves;
    }

    Eigen::VectorXd w = std::move(pol.w);

    // Hard mass feasibility: scale out factorization dust so 1'w <= H exactly.
    if (p.mass_cap) {
        const double sum = w.sum();
        if (sum > *p.mass_cap) w *= *p.mass_cap / sum;
    }

    KKTReport rep = detail::certify(p, w, pol.eta, pol.cap_binding, tol, tol_abs,
                                    iterations, std::move(trace));
    NNQPSolution sol{std::move(w), std::move(rep)};
    if (!sol.report.converged)
        throw ConvergenceError("solve_nnqp: tolerance not reached within iteration budget",
                               std::move(sol));
    return sol;
}

struct BruteForceResult {
    Eigen::VectorXd weights;
    double objective = 0.0;
};

// Independent oracle: enumerate every active set (2^m candidates, m <= 14);
// for each, solve the equality-constrained system (plus the cap-tight
// bordered variant when a cap is present) and keep the feasible candidate
// with the smallest objective. No KKT logic is shared with solve_nnqp.
inline BruteForceResult brute_force_active_set(const NNQPProblem& p) {
    const auto m = p.size();
    if (m > 14)
        throw ResourceLimitError("brute_force_active_set: m > 14 enumeration refused");

    const double H = p.mass_cap.value_or(0.0);
    BruteForceResult best;
    best.weights = Eigen::VectorXd::Zero(m);
    best.objective = 0.0; // the empty active set (w = 0) is always feasible

    std::vector<Eigen::Index> S;
    S.reserve(static_cast<size_t>(m));
    for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
        S.clear();
        for (Eigen::Index i = 0; i < m; ++i)
            if (mask & (1u << i)) S.push_back(i);
        const auto s = static_cast<Eigen::Index>(S.size());

        Eigen::MatrixXd QSS(s, s);
        Eigen::VectorXd bS(s);
        for (Eigen::Index i = 0; i < s; ++i) {
            bS[i] = p.b[S[static_cast<size_t>(i)]];
            for (Eigen::Index j = 0; j < s; ++j)
                QSS(i, j) = p.Q(S[static_cast<size_t>(i)], S[static_cast<size_t>(j)]);
        }

        const auto consider = [&](const Eigen::VectorXd& wS) {
            if (!wS.allFinite()) return;
            const double neg_tol = -1e-11 * std::max(1.0, wS.cwiseAbs().maxCoeff());
            if ((wS.array() < neg_tol).any()) return;
            Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
            for (Eigen::Index i = 0; i < s; ++i)
                w[S[static_cast<size_t>(i)]] = std::max(0.0, wS[i]);
            if (p.mass_cap && w.sum() > H + 1e-11 * std::max(1.0, H)) return;
            const double obj = qp_objective(p, w);
            if (obj < best.objective) {
                best.objective = obj;
                best.weights = std::move(w);
            }
        };

        consider(Eigen::LDLT<Eigen::MatrixXd>(QSS).solve(bS));

        if (p.mass_cap) {
            Eigen::MatrixXd K = Eigen::MatrixXd::Zero(s + 1, s + 1);
            K.topLeftCorner(s, s) = QSS;
            K.topRightCorner(s, 1).setOnes();
            K.bottomLeftCorner(1, s).setOnes();
            Eigen::VectorXd rhs(s + 1);
            rhs.head(s) = bS;
            rhs[s] = H;
            const Eigen::VectorXd z = Eigen::PartialPivLU<Eigen::MatrixXd>(K).solve(rhs);
            if (z.allFinite()) consider(z.head(s));
        }
    }
    return best;
}

struct ProjectionResult {
    Eigen::VectorXd weights; // full-length, zero off the region
    KKTReport report;        // active_set remapped to full node indices
};

namespace detail {

struct RestrictedProblem {
    NNQPProblem problem;
    std::vector<Eigen::Index> index_map; // subproblem index -> node index
};

inline RestrictedProblem restrict_to_region(const KernelMatrix& M, const RegionMask& region,
                                            const Eigen::VectorXd& b_full,
                                            std::optional<double> cap) {
    if (!same_nodes(M.nodes_ptr(), region.nodes_ptr()))
        throw ParameterError("restrict_to_region: region over a different node set");
    if (region.empty())
        throw ParameterError("restrict_to_region: empty region");
    const std::vector<Eigen::Index> idx = region.indices();
    const auto s = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd Q(s, s);
    Eigen::VectorXd b(s);
    for (Eigen::Index i = 0; i < s; ++i) {
        b[i] = b_full[idx[static_cast<size_t>(i)]];
        for (Eigen::Index j = 0; j < s; ++j)
            Q(i, j) = M.entries()(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    return RestrictedProblem{NNQPProblem(std::move(Q), std::move(b), cap), idx};
}

inline ProjectionResult embed_solution(const RestrictedProblem& rp, NNQPSolution sol,
                                       Eigen::Index full_size) {
    ProjectionResult out;
    out.weights = Eigen::VectorXd::Zero(full_size);
    for (size_t i = 0; i < rp.index_map.size(); ++i)
        out.weights[rp.index_map[i]] = sol.weights[static_cast<Eigen::Index>(i)];
    out.report = std::move(sol.report);
    for (auto& a : out.report.active_set) a = rp.index_map[static_cast<size_t>(a)];
    return out;
}

} // namespace detail

// Orthogonal projection of omega onto the cone of positive measures carried
// by the region, in the energy inner product: minimize ||mu - omega||^2 =
// I_f(mu) + ||omega||^2, i.e. the uncapped Gauss problem with b = (M w)|_A.
inline ProjectionResult projection_onto_cone(const KernelMatrix& M,
                                             const DiscreteMeasure& omega,
                                             const RegionMask& region, double tol = 1e-9) {
    detail::require_same_nodes(M, omega, "projection_onto_cone");
    const Eigen::VectorXd b_full = M.entries() * omega.weights();
    auto rp = detail::restrict_to_region(M, region, b_full, std::nullopt);
    NNQPSolution sol = solve_nnqp(rp.problem, tol);
    return detail::embed_solution(rp, std::move(sol), M.size());
}

} // namespace sweep
