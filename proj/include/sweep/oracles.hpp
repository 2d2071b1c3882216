#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "sweep/balayage.hpp"
#include "sweep/errors.hpp"
#include "sweep/kernels.hpp"
#include "sweep/measures.hpp"
#include "sweep/nodeset.hpp"

namespace sweep {

// Ground-truth scenario for the classical kernel 1/|x-y| in R^3: a ball and
// a point source strictly outside it. Everything about this configuration
// has a closed form, which the numerical pipeline is checked against. Other
// (dimension, order) pairs are rejected rather than approximated.
struct BallScenario {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    double radius = 1.0;
    Eigen::Vector3d source = Eigen::Vector3d(2.0, 0.0, 0.0);
    int dimension = 3;
    double order = 2.0;

    BallScenario(Eigen::Vector3d c, double r, Eigen::Vector3d y, int n = 3, double alpha = 2.0)
        : center(std::move(c)), radius(r), source(std::move(y)), dimension(n), order(alpha) {
        if (!(radius > 0.0) || !std::isfinite(radius))
            throw ParameterError("BallScenario: radius must be positive and finite");
        if (!center.allFinite() || !source.allFinite())
            throw ParameterError("BallScenario: non-finite point");
        if (!((source - center).norm() > radius))
            throw ParameterError("BallScenario: source must lie strictly outside the ball");
    }

    [[nodiscard]] double source_distance() const { return (source - center).norm(); }
};

namespace detail {

inline void require_newtonian(const BallScenario& s, const char* who) {
    if (s.dimension != 3 || s.order != 2.0)
        throw UnsupportedError(std::string(who) +
                               ": closed forms exist only for order 2 in dimension 3");
}

} // namespace detail

// Equilibrium potential of the closed ball: 1 on the ball, r/|x - c| outside.
// Continuous across the sphere.
inline double ball_equilibrium_potential(const BallScenario& s, const Eigen::Vector3d& x) {
    detail::require_newtonian(s, "ball_equilibrium_potential");
    const double d = (x - s.center).norm();
    return d <= s.radius ? 1.0 : s.radius / d;
}

// Total mass of the unit point source swept onto the ball: r / |y - c|.
// (The sweep preserves the potential on the ball; integrating the
// equilibrium measure against either potential gives this value.)
inline double ball_swept_mass(const BallScenario& s) {
    detail::require_newtonian(s, "ball_swept_mass");
    return s.radius / s.source_distance();
}

// Surface density of the swept measure at a sphere point x:
//   sigma(x) = (|y-c|^2 - r^2) / (4 pi r |x - y|^3),
// the exterior Poisson-type hitting density. Its surface integral is
// r/|y-c|; density_self_check certifies that numerically before any test
// consumes the formula.
inline double ball_swept_density(const BallScenario& s, const Eigen::Vector3d& x,
                                 double surface_rel_tol = 1e-9) {
    detail::require_newtonian(s, "ball_swept_density");
    const double d = (x - s.center).norm();
    if (std::abs(d - s.radius) > surface_rel_tol * s.radius)
        throw ParameterError("ball_swept_density: point is not on the sphere");
    const double D = s.source_distance();
    const double dist = (x - s.source).norm();
    return (D * D - s.radius * s.radius) / (4.0 * M_PI * s.radius * dist * dist * dist);
}

// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
// Legendre recurrence.
inline std::vector<std::pair<double, double>> gauss_legendre(int n) {
    if (n < 1) throw ParameterError("gauss_legendre: n must be >= 1");
    std::vector<std::pair<double, double>> out(static_cast<size_t>(n));
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        out[static_cast<size_t>(i)] = {-x, w};
        out[static_cast<size_t>(n - 1 - i)] = {x, w};
    }
    return out;
}

// |surface integral of ball_swept_density - ball_swept_mass|, evaluated by
// rotational reduction to a 1D quadrature in u = cos(angle to the source
// axis). Any comparison against the density formula must see this pass
// first.
inline double density_self_check_gap(const BallScenario& s, int quadrature_order = 48) {
    detail::require_newtonian(s, "density_self_check_gap");
    const double r = s.radius;
    const double D = s.source_distance();
    // integral = (D^2 - r^2) * r / 2 * \int_{-1}^{1} (r^2 + D^2 - 2 r D u)^{-3/2} du
    double acc = 0.0;
    for (const auto& [u, w] : gauss_legendre(quadrature_order))
        acc += w * std::pow(r * r + D * D - 2.0 * r * D * u, -1.5);
    const double integral = 0.5 * (D * D - r * r) * r * acc;
    return std::abs(integral - ball_swept_mass(s));
}

inline void require_density_self_check(const BallScenario& s) {
    const double gap = density_self_check_gap(s);
    if (!(gap <= 1e-6))
        throw SolverError("ball density self-check failed: surface integral gap " +
                          std::to_string(gap));
}

// Near-uniform sphere covering via the Fibonacci lattice; every node gets
// the equal-area quadrature weight 4 pi r^2 / count.
inline NodeSetPtr shell_nodes(const Eigen::Vector3d& center, double radius, int count) {
    if (count < 4) throw ParameterError("shell_nodes: count must be >= 4");
    if (!(radius > 0.0)) throw ParameterError("shell_nodes: radius must be positive");
    Eigen::MatrixXd pts(count, 3);
    const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
    for (int i = 0; i < count; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / count;
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double theta = 2.0 * M_PI * i / golden;
        pts.row(i) = (center + radius * Eigen::Vector3d(rho * std::cos(theta),
                                                        rho * std::sin(theta), z))
                         .transpose();
    }
    const double area = 4.0 * M_PI * radius * radius / count;
    return make_nodes(pts, Eigen::VectorXd::Constant(count, area));
}

struct RefinementLevel {
    int node_count;      // shell nodes (the source node is appended on top)
    double epsilon;
    double swept_mass;
    double mass_oracle_gap;
    double capacity;
    double capacity_gap;
    double density_l1_rel;  // relative L1 of sweep weights vs density * area
    double potential_gap;   // active-node potential match of the sweep
    double domination_violation;
    BalayageResult sweep;
};

struct RefinementReport {
    double oracle_mass = 0.0;
    std::vector<RefinementLevel> levels;
};

// Refinement ladder against the closed forms: each level quadruples the
// shell node count (halving the surface spacing) and the kernel epsilon
// follows the node spacing down. Never used by the solvers; consumes them.
inline RefinementReport refinement_oracle(const BallScenario& s, int levels,
                                          int base_count = 125, double epsilon_factor = 0.5,
                                          double tol = 1e-9) {
    detail::require_newtonian(s, "refinement_oracle");
    if (levels < 2) throw ParameterError("refinement_oracle: levels must be >= 2");
    if (!(epsilon_factor > 0.0))
        throw ParameterError("refinement_oracle: epsilon_factor must be positive");
    int finest = base_count;
    for (int l = 1; l < levels; ++l) finest *= 4;
    if (finest + 1 > 5000)
        throw ResourceLimitError("refinement_oracle: finest level exceeds 5000 nodes");
    require_density_self_check(s);

    RefinementReport rep;
    rep.oracle_mass = ball_swept_mass(s);

    int count = base_count;
    for (int l = 0; l < levels; ++l, count *= 4) {
        const NodeSetPtr shell = shell_nodes(s.center, s.radius, count);

        Eigen::MatrixXd pts(count + 1, 3);
        pts.topRows(count) = shell->points();
        pts.row(count) = s.source.transpose();
        Eigen::VectorXd quad(count + 1);
        quad.head(count) = shell->quad_weights();
        quad[count] = 1.0;
        const NodeSetPtr nodes = make_nodes(pts, quad);

        const KernelSpec spec(3, 2.0, epsilon_factor * shell->min_spacing());
        const KernelMatrix M(spec, nodes);
        std::vector<Eigen::Index> shell_idx(static_cast<size_t>(count));
        std::iota(shell_idx.begin(), shell_idx.end(), Eigen::Index{0});
        const RegionMask region = RegionMask::from_indices(nodes, shell_idx);
        Eigen::VectorXd w = Eigen::VectorXd::Zero(count + 1);
        w[count] = 1.0;
        const DiscreteMeasure omega(nodes, w);

        BalayageResult sweep = inner_balayage(M, omega, region, BalayageMode::gauss_capped, tol);
        const EquilibriumResult eq = equilibrium_measure(M, region, tol);

        double num = 0.0, den = 0.0;
        for (int i = 0; i < count; ++i) {
            const double expected =
                ball_swept_density(s, shell->point(i).transpose(), 1e-6) * quad[i];
            num += std::abs(sweep.swept.weights()[i] - expected);
            den += expected;
        }

        rep.levels.push_back(RefinementLevel{count, spec.epsilon, sweep.mass,
                                             std::abs(sweep.mass - rep.oracle_mass),
                                             eq.capacity, std::abs(eq.capacity - s.radius),
                                             num / den, sweep.potential_on_A_max_gap,
                                             sweep.domination_violation, std::move(sweep)});
    }
    return rep;
}

} // namespace sweep
