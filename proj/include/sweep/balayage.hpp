#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sweep/energy.hpp"
#include "sweep/errors.hpp"
#include "sweep/kernels.hpp"
#include "sweep/measures.hpp"
#include "sweep/solvers.hpp"

namespace sweep {

// gauss_capped: minimize the Gauss functional over positive measures on the
// region with total mass capped at h*omega(X). projection: metric projection
// of omega onto the cone of positive measures on the region (no cap). Both
// produce the same sweep whenever the cap is inactive.
enum class BalayageMode { gauss_capped, projection };

struct EquilibriumResult {
    DiscreteMeasure gamma;
    double capacity = 0.0;               // gamma(X), equals I(gamma) up to tol
    double potential_min_on_A = 0.0;     // min of U^gamma over region nodes
    double potential_max_on_support = 0.0;
    double identity_gap = 0.0;           // |gamma(X) - I(gamma)|
    KKTReport kkt;                       // active set in full node indices
};

// Capacitary measure of the region: minimize 1/2 w'Qw - 1'w over w >= 0 on
// the region nodes. At the optimum U^gamma = 1 on the support and >= 1 at
// inactive region nodes, so capacity = gamma(X) = I(gamma).
inline EquilibriumResult equilibrium_measure(const KernelMatrix& M, const RegionMask& region,
                                             double tol = 1e-9) {
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(M.size());
    auto rp = detail::restrict_to_region(M, region, ones, std::nullopt);
    ProjectionResult pr = detail::embed_solution(rp, solve_nnqp(rp.problem, tol), M.size());

    EquilibriumResult out{DiscreteMeasure(M.nodes_ptr(), pr.weights), 0.0, 0.0, 0.0, 0.0,
                          std::move(pr.report)};
    const Eigen::VectorXd& w = out.gamma.weights();
    out.capacity = w.sum();
    const Eigen::VectorXd pot = M.entries() * w;
    double pmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index i : region.indices()) pmin = std::min(pmin, pot[i]);
    out.potential_min_on_A = pmin;
    double pmax = 0.0;
    for (Eigen::Index i : out.kkt.active_set) pmax = std::max(pmax, pot[i]);
    out.potential_max_on_support = out.kkt.active_set.empty() ? 0.0 : pmax;
    out.identity_gap = std::abs(out.capacity - w.dot(pot));
    return out;
}

struct BalayageResult {
    DiscreteMeasure swept;
    KKTReport kkt;                        // active set in full node indices
    double potential_on_A_max_gap = 0.0;  // max |U^swept - U^omega| over active nodes
    double domination_violation = 0.0;    // max over all nodes of (U^swept - U^omega)+
    double energy_identity_gap = 0.0;     // |I(swept) - I(swept, omega)|
    double mass = 0.0;
    double gauss_value = 0.0;             // I(swept) - 2 I(swept, omega)
};

// Sweep omega onto the region. The swept measure matches the potential of
// omega exactly at its own support nodes (complementarity), never falls
// below it elsewhere on the region, and dominates nowhere outside up to the
// regularization defect reported as domination_violation.
inline BalayageResult inner_balayage(const KernelMatrix& M, const DiscreteMeasure& omega,
                                     const RegionMask& region,
                                     BalayageMode mode = BalayageMode::gauss_capped,
                                     double tol = 1e-9) {
    detail::require_same_nodes(M, omega, "inner_balayage");
    const Eigen::VectorXd b_full = M.entries() * omega.weights();

    std::optional<double> cap;
    if (mode == BalayageMode::gauss_capped) {
        const double H = M.spec().frostman_h * omega.total_mass();
        if (H > 0.0) cap = H;
    }
    auto rp = detail::restrict_to_region(M, region, b_full, cap);
    ProjectionResult pr = detail::embed_solution(rp, solve_nnqp(rp.problem, tol), M.size());

    BalayageResult out{DiscreteMeasure(M.nodes_ptr(), pr.weights), std::move(pr.report),
                       0.0, 0.0, 0.0, 0.0, 0.0};
    const Eigen::VectorXd& w = out.swept.weights();
    const Eigen::VectorXd pot = M.entries() * w;

    double gap = 0.0;
    for (Eigen::Index i : out.kkt.active_set)
        gap = std::max(gap, std::abs(pot[i] - b_full[i]));
    out.potential_on_A_max_gap = gap;
    out.domination_violation = std::max(0.0, (pot - b_full).maxCoeff());
    const double self = w.dot(pot);
    const double cross = w.dot(b_full);
    out.energy_identity_gap = std::abs(self - cross);
    out.mass = w.sum();
    out.gauss_value = self - 2.0 * cross;
    return out;
}

struct RestReport {
    BalayageResult direct;        // sweep onto the inner region in one step
    BalayageResult intermediate;  // sweep onto the outer region
    BalayageResult iterated;      // the intermediate sweep swept onto the inner region
    double strong_distance = 0.0; // energy-norm distance direct vs iterated
    double monotonicity_gap = 0.0;// max over nodes of (U^direct - U^intermediate)+
};

// Sweeping in stages: going through a larger region and then restricting
// must land on the same measure as sweeping directly.
inline RestReport balayage_with_rest(const KernelMatrix& M, const DiscreteMeasure& omega,
                                     const RegionMask& outer_region,
                                     const RegionMask& inner_region, double tol = 1e-9,
                                     BalayageMode mode = BalayageMode::gauss_capped) {
    if (!inner_region.is_subset_of(outer_region))
        throw ParameterError("balayage_with_rest: inner region must be nested in outer");
    BalayageResult direct = inner_balayage(M, omega, inner_region, mode, tol);
    BalayageResult mid = inner_balayage(M, omega, outer_region, mode, tol);
    BalayageResult iter = inner_balayage(M, mid.swept, inner_region, mode, tol);

    RestReport rep{std::move(direct), std::move(mid), std::move(iter), 0.0, 0.0};
    rep.strong_distance = strong_distance(M, rep.direct.swept, rep.iterated.swept);
    const Eigen::VectorXd du = M.entries() * (rep.direct.swept.weights() -
                                              rep.intermediate.swept.weights());
    rep.monotonicity_gap = std::max(0.0, du.maxCoeff());
    return rep;
}

struct ExhaustionReport {
    std::vector<BalayageResult> stages;          // one sweep per stage, in order
    std::vector<EquilibriumResult> equilibria;   // stage equilibrium measures
    std::vector<double> distances_to_final;      // energy norm to the last stage sweep
    double potential_monotonicity_defect = 0.0;  // max (U^{stage j} - U^{stage j+1})+ over nodes
    double equilibrium_monotonicity_defect = 0.0;// same for equilibrium potentials
    double distance_monotonicity_defect = 0.0;   // max (d_{j+1} - d_j)+
};

// Sweeps along a growing chain of regions. Potentials rise toward the final
// sweep and the energy distance to it shrinks; the reported defects measure
// how far the computed sequence is from that ideal.
inline ExhaustionReport exhaust_and_sweep(const KernelMatrix& M, const DiscreteMeasure& omega,
                                          const Exhaustion& exhaustion, double tol = 1e-9,
                                          BalayageMode mode = BalayageMode::gauss_capped) {
    exhaustion.validate();
    ExhaustionReport rep;
    const auto n_stages = exhaustion.stages.size();
    rep.stages.reserve(n_stages);
    rep.equilibria.reserve(n_stages);
    for (const RegionMask& stage : exhaustion.stages) {
        rep.stages.push_back(inner_balayage(M, omega, stage, mode, tol));
        rep.equilibria.push_back(equilibrium_measure(M, stage, tol));
    }
    const DiscreteMeasure& final_sweep = rep.stages.back().swept;
    for (const BalayageResult& st : rep.stages)
        rep.distances_to_final.push_back(strong_distance(M, st.swept, final_sweep));

    for (size_t j = 0; j + 1 < n_stages; ++j) {
        const Eigen::VectorXd dpot =
            M.entries() * (rep.stages[j].swept.weights() - rep.stages[j + 1].swept.weights());
        rep.potential_monotonicity_defect =
            std::max(rep.potential_monotonicity_defect, std::max(0.0, dpot.maxCoeff()));
        const Eigen::VectorXd deq =
            M.entries() *
            (rep.equilibria[j].gamma.weights() - rep.equilibria[j + 1].gamma.weights());
        rep.equilibrium_monotonicity_defect =
            std::max(rep.equilibrium_monotonicity_defect, std::max(0.0, deq.maxCoeff()));
        rep.distance_monotonicity_defect =
            std::max(rep.distance_monotonicity_defect,
                     std::max(0.0, rep.distances_to_final[j + 1] - rep.distances_to_final[j]));
    }
    return rep;
}

struct MassFormulaReport {
    double lhs = 0.0;  // mass of the sweep
    double rhs = 0.0;  // equilibrium potential integrated against omega
    double gap = 0.0;
    // Max deviation of the chained equalities behind lhs = rhs: |U^gamma - 1|
    // at sweep-support nodes and |U^swept - U^omega| at equilibrium-support
    // nodes. The identity holds to solver precision exactly when this is small.
    double support_alignment_gap = 0.0;
};

inline MassFormulaReport mass_formula_check(const KernelMatrix& M, const DiscreteMeasure& omega,
                                            const RegionMask& region, double tol = 1e-9) {
    BalayageResult bal = inner_balayage(M, omega, region, BalayageMode::gauss_capped, tol);
    EquilibriumResult eq = equilibrium_measure(M, region, tol);

    MassFormulaReport rep;
    rep.lhs = bal.mass;
    rep.rhs = mutual_energy(M, eq.gamma, omega);
    rep.gap = std::abs(rep.lhs - rep.rhs);

    const Eigen::VectorXd pot_gamma = M.entries() * eq.gamma.weights();
    const Eigen::VectorXd pot_sweep = M.entries() * bal.swept.weights();
    const Eigen::VectorXd pot_omega = M.entries() * omega.weights();
    double align = 0.0;
    for (Eigen::Index i : bal.kkt.active_set)
        align = std::max(align, std::abs(pot_gamma[i] - 1.0));
    for (Eigen::Index i : eq.kkt.active_set)
        align = std::max(align, std::abs(pot_sweep[i] - pot_omega[i]));
    rep.support_alignment_gap = align;
    return rep;
}

namespace detail {

// Random positive measure on a random support: support size uniform in
// [1, max(1, m/2)], weights uniform in (0,1]. Deterministic given the RNG
// state; shared by battery construction and probe generation.
inline Eigen::VectorXd random_sparse_weights(Eigen::Index m, std::mt19937_64& rng) {
    const auto max_support = std::max<Eigen::Index>(1, m / 2);
    std::uniform_int_distribution<Eigen::Index> size_dist(1, max_support);
    const Eigen::Index k = size_dist(rng);

    std::vector<Eigen::Index> idx(static_cast<size_t>(m));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (Eigen::Index i = 0; i < k; ++i) {
        std::uniform_int_distribution<Eigen::Index> pick(i, m - 1);
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(pick(rng))]);
    }
    Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index i = 0; i < k; ++i)
        w[idx[static_cast<size_t>(i)]] = 1.0 - unit(rng); // in (0, 1]
    return w;
}

} // namespace detail

// Deterministic battery of positive test measures used by the symmetry
// checks: random supports, random weights, reproducible from the seed.
inline std::vector<DiscreteMeasure> make_battery(const NodeSetPtr& nodes, int size,
                                                 std::uint64_t seed) {
    if (size < 1) throw ParameterError("make_battery: size must be >= 1");
    std::mt19937_64 rng(seed);
    std::vector<DiscreteMeasure> battery;
    battery.reserve(static_cast<size_t>(size));
    for (int k = 0; k < size; ++k)
        battery.emplace_back(nodes, detail::random_sparse_weights(nodes->count(), rng));
    return battery;
}

struct MassProbeReport {
    double swept_mass = 0.0;
    std::vector<double> probe_masses;
    // Per probe: max over region nodes of (U^swept - U^probe)+, i.e. how far
    // the probe is from actually dominating the sweep on the region.
    std::vector<double> membership_defects;
    double max_violation = 0.0; // max over probes of (swept_mass - probe_mass)+
};

// The sweep has minimum total mass among measures whose potential dominates
// U^omega on the region. Probes are built as sweep + positive bump (always
// a member) and, when omega itself dominates, as convex combinations of
// omega and the sweep.
inline MassProbeReport minimum_mass_check(const KernelMatrix& M, const DiscreteMeasure& omega,
                                          const RegionMask& region, int n_probes,
                                          std::uint64_t seed, double tol = 1e-9) {
    if (n_probes < 1) throw ParameterError("minimum_mass_check: n_probes must be >= 1");
    BalayageResult bal = inner_balayage(M, omega, region, BalayageMode::gauss_capped, tol);

    const Eigen::VectorXd pot_sweep = M.entries() * bal.swept.weights();
    const Eigen::VectorXd pot_omega = M.entries() * omega.weights();
    const std::vector<Eigen::Index> reg = region.indices();

    double pot_scale = 0.0;
    for (Eigen::Index i : reg) pot_scale = std::max(pot_scale, std::abs(pot_omega[i]));
    double omega_defect = 0.0;
    for (Eigen::Index i : reg)
        omega_defect = std::max(omega_defect, pot_sweep[i] - pot_omega[i]);
    const bool omega_is_member = omega_defect <= 1e3 * tol * std::max(pot_scale, 1e-300);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double bump_scale =
        (bal.mass > 0.0 ? bal.mass : 1.0) / static_cast<double>(M.size());

    MassProbeReport rep;
    rep.swept_mass = bal.mass;
    for (int k = 0; k < n_probes; ++k) {
        Eigen::VectorXd wp;
        if (k % 2 == 1 && omega_is_member) {
            const double a = unit(rng); // probe = a*omega + (1-a)*sweep
            wp = a * omega.weights() + (1.0 - a) * bal.swept.weights();
        } else {
            wp = bal.swept.weights() +
                 bump_scale * detail::random_sparse_weights(M.size(), rng);
        }
        rep.probe_masses.push_back(wp.sum());
        const Eigen::VectorXd pot_probe = M.entries() * wp;
        double defect = 0.0;
        for (Eigen::Index i : reg)
            defect = std::max(defect, pot_sweep[i] - pot_probe[i]);
        rep.membership_defects.push_back(std::max(0.0, defect));
        rep.max_violation =
            std::max(rep.max_violation, rep.swept_mass - rep.probe_masses.back());
    }
    rep.max_violation = std::max(0.0, rep.max_violation);
    return rep;
}

struct SignedBalayageResult {
    SignedDiscreteMeasure swept;   // normalized difference of the part sweeps
    BalayageResult positive_part;
    BalayageResult negative_part;
};

inline SignedBalayageResult signed_balayage_detailed(const KernelMatrix& M,
                                                     const SignedDiscreteMeasure& xi,
                                                     const RegionMask& region,
                                                     double tol = 1e-9,
                                                     BalayageMode mode = BalayageMode::gauss_capped) {
    BalayageResult pos = inner_balayage(M, xi.positive_part(), region, mode, tol);
    BalayageResult neg = inner_balayage(M, xi.negative_part(), region, mode, tol);
    SignedDiscreteMeasure diff(pos.swept, neg.swept);
    return SignedBalayageResult{hahn_jordan_normalize(diff), std::move(pos), std::move(neg)};
}

// Sweep of a signed measure: both parts swept independently, difference
// reduced to its minimal (mutually singular) decomposition.
inline SignedDiscreteMeasure signed_balayage(const KernelMatrix& M,
                                             const SignedDiscreteMeasure& xi,
                                             const RegionMask& region, double tol = 1e-9) {
    return signed_balayage_detailed(M, xi, region, tol).swept;
}

struct UniquenessReport {
    std::vector<double> residuals; // |I(candidate, lambda) - I(lambda^A, omega)| per member
    double max_residual = 0.0;
    double scale = 0.0;            // max |I(candidate, lambda)| over the battery
    double threshold = 0.0;
    bool is_balayage = false;
};

// A measure on the region equals the sweep of omega iff its energy pairing
// with every battery member lambda matches the pairing of lambda's own sweep
// with omega. Battery sweeps use projection mode (no cap) so the identity is
// tested in its clean form.
inline UniquenessReport uniqueness_battery(const KernelMatrix& M,
                                           const DiscreteMeasure& candidate,
                                           const DiscreteMeasure& omega,
                                           const RegionMask& region, int battery_size,
                                           std::uint64_t seed, double tol = 1e-6) {
    detail::require_same_nodes(M, candidate, "uniqueness_battery");
    detail::require_same_nodes(M, omega, "uniqueness_battery");
    const std::vector<DiscreteMeasure> battery = make_battery(M.nodes_ptr(), battery_size, seed);

    UniquenessReport rep;
    for (const DiscreteMeasure& lambda : battery) {
        ProjectionResult swept_lambda = projection_onto_cone(M, lambda, region, 1e-11);
        const double lhs = mutual_energy(M, candidate, lambda);
        const double rhs = swept_lambda.weights.dot(M.entries() * omega.weights());
        rep.residuals.push_back(std::abs(lhs - rhs));
        rep.max_residual = std::max(rep.max_residual, rep.residuals.back());
        rep.scale = std::max(rep.scale, std::abs(lhs));
    }
    rep.threshold = tol * std::max(rep.scale, 1e-300);
    rep.is_balayage = rep.max_residual <= rep.threshold;
    return rep;
}

struct SignedSymmetryReport {
    std::vector<double> residuals;
    double max_residual = 0.0;
    double scale = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

// Symmetry of the energy pairing under sweeping, extended to signed
// measures: I(xi^A, theta) = I(theta^A, xi) for signed test measures theta
// assembled from battery pairs.
inline SignedSymmetryReport signed_symmetry_battery(const KernelMatrix& M,
                                                    const SignedDiscreteMeasure& xi,
                                                    const RegionMask& region, int battery_size,
                                                    std::uint64_t seed, double tol = 1e-6) {
    const std::vector<DiscreteMeasure> battery =
        make_battery(M.nodes_ptr(), 2 * battery_size, seed);
    const SignedDiscreteMeasure xi_swept = signed_balayage(M, xi, region, 1e-11);

    SignedSymmetryReport rep;
    for (int k = 0; k < battery_size; ++k) {
        SignedDiscreteMeasure theta(battery[static_cast<size_t>(2 * k)],
                                    battery[static_cast<size_t>(2 * k + 1)]);
        const SignedDiscreteMeasure theta_swept = signed_balayage(M, theta, region, 1e-11);
        const double lhs = mutual_energy(M, xi_swept, theta);
        const double rhs = mutual_energy(M, theta_swept, xi);
        rep.residuals.push_back(std::abs(lhs - rhs));
        rep.max_residual = std::max(rep.max_residual, rep.residuals.back());
        rep.scale = std::max(rep.scale, std::abs(lhs));
    }
    rep.threshold = tol * std::max(rep.scale, 1e-300);
    rep.pass = rep.max_residual <= rep.threshold;
    return rep;
}

} // namespace sweep
