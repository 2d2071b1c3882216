#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <random>

#include "sweep/solvers.hpp"
#include "test_support.hpp"

using namespace sweep;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

struct RandomInstance {
    NNQPProblem problem;
    double bscale;
};

// Kernel-backed random NNQP instance: Q is a full kernel matrix (strictly
// PD), b alternates between potential data (sweep-shaped, nonnegative
// optimum) and mixed-sign noise (sparse optimum with genuine inactive set).
RandomInstance random_instance(std::uint64_t seed, int m) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    const int dim = (seed % 2 == 0) ? 3 : 2;
    const double dmin = 0.45 * std::pow(1.0 / m, 1.0 / dim);
    Eigen::MatrixXd pts = testgen::min_spacing_cloud(m, dim, dmin, rng);
    NodeSetPtr nodes = make_nodes(pts);

    const double order = (dim == 2) ? 0.5 + 0.7 * u(rng) : 0.8 + 1.2 * u(rng);
    const double factor = 0.3 + 1.2 * u(rng);
    const double eps = (m >= 2) ? factor * nodes->min_spacing() : 0.3;
    KernelMatrix M(KernelSpec(dim, order, eps), nodes);

    Eigen::VectorXd b(m);
    if (seed % 3 != 0) {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
        for (int i = 0; i < m; ++i)
            if (u(rng) < 0.5) w[i] = u(rng);
        b = M.entries() * w;
    } else {
        const double scale = M.entries().cwiseAbs().rowwise().sum().maxCoeff();
        for (int i = 0; i < m; ++i) b[i] = scale * (2.0 * u(rng) - 1.0);
    }
    const double bscale = std::max(b.cwiseAbs().maxCoeff(), 1e-12);
    return RandomInstance{NNQPProblem(M.entries(), b), bscale};
}

void require_matches_brute_force(const NNQPProblem& p) {
    const NNQPSolution sol = solve_nnqp(p, 1e-11);
    const BruteForceResult oracle = brute_force_active_set(p);

    const double obj_tol = 1e-8 * std::max(1.0, std::abs(oracle.objective));
    const double w_tol = 1e-6 * std::max(1.0, oracle.weights.lpNorm<Eigen::Infinity>());
    CAPTURE(p.size(), p.mass_cap.value_or(-1.0), sol.report.cap_binding);
    REQUIRE_THAT(qp_objective(p, sol.weights),
                 WithinAbs(oracle.objective, obj_tol));
    REQUIRE((sol.weights - oracle.weights).lpNorm<Eigen::Infinity>() <= w_tol);
    REQUIRE(sol.report.converged);
    REQUIRE(sol.report.feasibility_violation <= sol.report.tolerance);
}

} // namespace

TEST_CASE("one dimensional problems solve in closed form", "[solvers]") {
    Eigen::MatrixXd Q(1, 1);
    Q << 2.0;

    SECTION("interior optimum") {
        Eigen::VectorXd b(1);
        b << 3.0;
        const NNQPSolution s = solve_nnqp(NNQPProblem(Q, b));
        REQUIRE_THAT(s.weights[0], WithinAbs(1.5, 1e-12));
        REQUIRE(s.report.converged);
        REQUIRE((s.report.active_set == std::vector<Eigen::Index>{0}));
    }

    SECTION("constraint-bound optimum at zero") {
        Eigen::VectorXd b(1);
        b << -1.0;
        const NNQPSolution s = solve_nnqp(NNQPProblem(Q, b));
        REQUIRE(s.weights[0] == 0.0);
        REQUIRE(s.report.converged);
        REQUIRE(s.report.active_set.empty());
        REQUIRE(s.report.objective == 0.0);
    }

    SECTION("mass cap clips the interior optimum") {
        Eigen::VectorXd b(1);
        b << 3.0;
        const NNQPSolution s = solve_nnqp(NNQPProblem(Q, b, 1.0));
        REQUIRE_THAT(s.weights[0], WithinAbs(1.0, 1e-10));
        REQUIRE(s.report.cap_binding);
        // eta = b - Q w at the capped point: 3 - 2 = 1
        REQUIRE_THAT(s.report.mass_cap_multiplier, WithinAbs(1.0, 1e-8));
        REQUIRE(s.weights.sum() <= 1.0);
    }
}

TEST_CASE("separable two dimensional problem", "[solvers]") {
    Eigen::MatrixXd Q(2, 2);
    Q << 2.0, 0.0,
         0.0, 2.0;
    Eigen::VectorXd b(2);
    b << 2.0, -2.0;
    const NNQPSolution s = solve_nnqp(NNQPProblem(Q, b));
    REQUIRE_THAT(s.weights[0], WithinAbs(1.0, 1e-12));
    REQUIRE(s.weights[1] == 0.0);
    REQUIRE_THAT(s.report.objective, WithinAbs(-1.0, 1e-12));
    REQUIRE_THAT(qp_objective(NNQPProblem(Q, b), s.weights),
                 WithinAbs(s.report.objective, 1e-15));
}

TEST_CASE("solver agrees with exhaustive active set enumeration", "[solvers]") {
    for (std::uint64_t seed = 1; seed <= 60; ++seed) {
        const int m = 1 + static_cast<int>(seed % 12);
        RandomInstance inst = random_instance(seed, m);

        require_matches_brute_force(inst.problem);

        const BruteForceResult unc = brute_force_active_set(inst.problem);
        const double mass = unc.weights.sum();
        if (mass > 1e-8) {
            // Binding cap: forces the dual bisection path.
            require_matches_brute_force(
                NNQPProblem(inst.problem.Q, inst.problem.b, 0.6 * mass));
            // Slack cap: must reproduce the uncapped solution.
            require_matches_brute_force(
                NNQPProblem(inst.problem.Q, inst.problem.b, 2.0 * mass));
        }
    }
}

TEST_CASE("capped solutions satisfy the stationarity pattern", "[solvers]") {
    RandomInstance inst = random_instance(77, 10);
    const BruteForceResult unc = brute_force_active_set(inst.problem);
    REQUIRE(unc.weights.sum() > 0.0);
    const double H = 0.5 * unc.weights.sum();

    NNQPProblem capped(inst.problem.Q, inst.problem.b, H);
    const NNQPSolution s = solve_nnqp(capped, 1e-11);
    REQUIRE(s.report.cap_binding);
    REQUIRE(s.report.mass_cap_multiplier > 0.0);
    REQUIRE_THAT(s.weights.sum(), WithinRel(H, 1e-9));
    REQUIRE(s.weights.sum() <= H); // hard mass feasibility after rescale
    REQUIRE(s.weights.minCoeff() >= 0.0);

    // (Qw - b + eta)_i = 0 on the support, >= 0 off it.
    const Eigen::VectorXd d =
        capped.Q * s.weights - capped.b +
        Eigen::VectorXd::Constant(capped.size(), s.report.mass_cap_multiplier);
    for (Eigen::Index i = 0; i < capped.size(); ++i) {
        if (s.weights[i] > s.report.active_threshold)
            REQUIRE(std::abs(d[i]) <= s.report.tolerance);
        else
            REQUIRE(d[i] >= -s.report.tolerance);
    }

    const NNQPSolution slack = solve_nnqp(
        NNQPProblem(inst.problem.Q, inst.problem.b, 10.0 * unc.weights.sum()), 1e-11);
    REQUIRE_FALSE(slack.report.cap_binding);
    REQUIRE(slack.report.mass_cap_multiplier == 0.0);
}

TEST_CASE("accepted objectives decrease monotonically", "[solvers]") {
    RandomInstance inst = random_instance(31, 12);
    const NNQPSolution s = solve_nnqp(inst.problem);
    REQUIRE(s.report.objective_trace.size() >= 2);
    for (size_t k = 0; k + 1 < s.report.objective_trace.size(); ++k)
        REQUIRE(s.report.objective_trace[k + 1] <= s.report.objective_trace[k]);
    REQUIRE(s.report.iterations >= 1);
}

TEST_CASE("solution is independent of the starting point", "[solvers]") {
    RandomInstance inst = random_instance(55, 9);
    const NNQPSolution base = solve_nnqp(inst.problem, 1e-11);

    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double scale = std::max(1.0, base.weights.lpNorm<Eigen::Infinity>());
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd w0(inst.problem.size());
        for (Eigen::Index i = 0; i < w0.size(); ++i) w0[i] = 3.0 * scale * u(rng);
        const NNQPSolution other = solve_nnqp(inst.problem, 1e-11, 0, w0);
        REQUIRE((other.weights - base.weights).lpNorm<Eigen::Infinity>() <=
                1e-8 * scale);
    }
}

TEST_CASE("problem and argument validation", "[solvers]") {
    Eigen::MatrixXd Q(2, 2);
    Q << 1.0, 0.2,
         0.2, 1.0;
    Eigen::VectorXd b(2);
    b << 1.0, 1.0;

    Eigen::MatrixXd rect(2, 3);
    rect.setZero();
    REQUIRE_THROWS_AS(NNQPProblem(rect, b), ParameterError);

    Eigen::MatrixXd asym = Q;
    asym(0, 1) = 0.4;
    REQUIRE_THROWS_AS(NNQPProblem(asym, b), ParameterError);

    REQUIRE_THROWS_AS(NNQPProblem(Q, Eigen::VectorXd::Ones(3)), ParameterError);
    REQUIRE_THROWS_AS(NNQPProblem(Q, b, 0.0), ParameterError);
    REQUIRE_THROWS_AS(NNQPProblem(Q, b, -2.0), ParameterError);

    Eigen::MatrixXd nan = Q;
    nan(1, 1) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(NNQPProblem(nan, b), ParameterError);

    NNQPProblem p(Q, b);
    REQUIRE_THROWS_AS(solve_nnqp(p, 0.0), ParameterError);
    REQUIRE_THROWS_AS(solve_nnqp(p, 1e-9, 0, Eigen::VectorXd::Ones(3)), ParameterError);

    Eigen::MatrixXd neg(1, 1);
    neg << -1.0;
    REQUIRE_THROWS_AS(solve_nnqp(NNQPProblem(neg, Eigen::VectorXd::Ones(1))),
                      SolverError);
}

TEST_CASE("unreachable tolerance raises with the best iterate attached", "[solvers]") {
    RandomInstance inst = random_instance(44, 8);
    const NNQPSolution good = solve_nnqp(inst.problem, 1e-11);

    bool threw = false;
    try {
        solve_nnqp(inst.problem, 1e-300);
    } catch (const ConvergenceError& e) {
        threw = true;
        REQUIRE_FALSE(e.best.report.converged);
        // The carried iterate is still an excellent solution.
        REQUIRE((e.best.weights - good.weights).lpNorm<Eigen::Infinity>() <=
                1e-8 * std::max(1.0, good.weights.lpNorm<Eigen::Infinity>()));
    }
    REQUIRE(threw);
}

TEST_CASE("exhaustive enumeration refuses oversized problems", "[solvers]") {
    const int m = 15;
    Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(m, m);
    Eigen::VectorXd b = Eigen::VectorXd::Ones(m);
    REQUIRE_THROWS_AS(brute_force_active_set(NNQPProblem(Q, b)), ResourceLimitError);
}

TEST_CASE("cone projection restricts the solve to the region", "[solvers]") {
    auto sc = testgen::random_scenario(7, [] {
        testgen::ScenarioOptions o;
        o.region_nodes = 12;
        o.outside_sources = 3;
        return o;
    }());

    const ProjectionResult pr = projection_onto_cone(sc.M(), sc.omega, sc.region, 1e-11);
    REQUIRE(pr.weights.size() == sc.nodes->count());
    for (Eigen::Index i = 0; i < pr.weights.size(); ++i)
        if (!sc.region.contains(i)) REQUIRE(pr.weights[i] == 0.0);
    for (Eigen::Index i : pr.report.active_set) REQUIRE(sc.region.contains(i));
    REQUIRE(pr.report.converged);

    RegionMask empty = RegionMask::from_indices(sc.nodes, {});
    REQUIRE_THROWS_AS(projection_onto_cone(sc.M(), sc.omega, empty), ParameterError);

    DiscreteMeasure foreign(make_nodes(sc.nodes->points()),
                            sc.omega.weights());
    REQUIRE_THROWS_AS(projection_onto_cone(sc.M(), foreign, sc.region), ParameterError);
}
