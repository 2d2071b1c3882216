#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "sweep/energy.hpp"
#include "test_support.hpp"

using namespace sweep;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("potential at the shared nodes is the matrix-vector product", "[energy]") {
    Eigen::MatrixXd pts(2, 3);
    pts << 0.0, 0.0, 0.0,
           2.0, 0.0, 0.0;
    NodeSetPtr nodes = make_nodes(pts);
    KernelMatrix M(KernelSpec(3, 2.0, 1.0), nodes);
    DiscreteMeasure mu(nodes, Eigen::Vector2d(1.0, 2.0));

    const PotentialField f = potential(M, mu);
    const double off = 1.0 / std::sqrt(5.0);
    REQUIRE_THAT(f.values[0], WithinAbs(1.0 + 2.0 * off, 1e-14));
    REQUIRE_THAT(f.values[1], WithinAbs(off + 2.0, 1e-14));
    REQUIRE_FALSE(f.points.has_value());
}

TEST_CASE("potential at explicit points sums the kernel against the weights", "[energy]") {
    Eigen::MatrixXd pts(2, 3);
    pts << 0.0, 0.0, 0.0,
           1.0, 0.0, 0.0;
    NodeSetPtr nodes = make_nodes(pts);
    KernelMatrix M(KernelSpec(3, 2.0, 1.0), nodes);
    DiscreteMeasure mu(nodes, Eigen::Vector2d(1.0, 0.0));

    Eigen::MatrixXd at(2, 3);
    at << 2.0, 0.0, 0.0,
          1.0, 0.0, 0.0; // exactly on the zero-weight node
    const PotentialField f = potential(M, mu, at);
    REQUIRE_THAT(f.values[0], WithinAbs(1.0 / std::sqrt(5.0), 1e-14));
    REQUIRE_THAT(f.values[1], WithinAbs(1.0 / std::sqrt(2.0), 1e-14));

    // Zero-weight nodes contribute nothing even where the unregularized
    // kernel would be singular.
    KernelMatrix M0Host(KernelSpec(3, 2.0, 1.0), nodes);
    DiscreteMeasure nu(nodes, Eigen::Vector2d(0.0, 1.0));
    Eigen::MatrixXd onA(1, 3);
    onA << 0.0, 0.0, 0.0;
    const PotentialField g = potential(M0Host, nu, onA);
    REQUIRE(std::isfinite(g.values[0]));

    Eigen::MatrixXd wrong(1, 2);
    wrong << 0.0, 0.0;
    REQUIRE_THROWS_AS(potential(M, mu, std::optional<Eigen::MatrixXd>(wrong)),
                      ParameterError);
}

TEST_CASE("energy pairing is symmetric and consistent with the norm", "[energy]") {
    auto sc = testgen::random_scenario(101);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd wa(sc.nodes->count()), wb(sc.nodes->count());
    for (Eigen::Index i = 0; i < wa.size(); ++i) { wa[i] = u(rng); wb[i] = u(rng); }
    DiscreteMeasure a(sc.nodes, wa), b(sc.nodes, wb);

    const double iab = mutual_energy(sc.M(), a, b);
    const double iba = mutual_energy(sc.M(), b, a);
    REQUIRE_THAT(iab, WithinRel(iba, 1e-12));

    const double na = energy_norm(sc.M(), a);
    REQUIRE_THAT(na * na, WithinRel(mutual_energy(sc.M(), a, a), 1e-12));

    // ||a - b||^2 = ||a||^2 - 2 I(a,b) + ||b||^2
    const double d = strong_distance(sc.M(), a, b);
    const double nb = energy_norm(sc.M(), b);
    REQUIRE_THAT(d * d, WithinRel(na * na - 2.0 * iab + nb * nb, 1e-10));
    REQUIRE(strong_distance(sc.M(), a, a) == 0.0);
    REQUIRE_THAT(strong_distance(sc.M(), b, a), WithinRel(d, 1e-12));
}

TEST_CASE("gauss functional equals the shifted squared distance", "[energy]") {
    auto sc = testgen::random_scenario(202);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd wm(sc.nodes->count());
    for (Eigen::Index i = 0; i < wm.size(); ++i) wm[i] = u(rng);
    DiscreteMeasure mu(sc.nodes, wm);

    // I_f(mu) = ||mu - omega||^2 - ||omega||^2
    const double lhs = gauss_functional(sc.M(), mu, sc.omega);
    const double dist = strong_distance(sc.M(), mu, sc.omega);
    const double nw = energy_norm(sc.M(), sc.omega);
    REQUIRE_THAT(lhs, WithinRel(dist * dist - nw * nw, 1e-9));
}

TEST_CASE("energy operations reject measures over foreign node sets", "[energy]") {
    Eigen::MatrixXd pts(2, 3);
    pts << 0.0, 0.0, 0.0,
           1.0, 0.0, 0.0;
    NodeSetPtr nodes = make_nodes(pts);
    NodeSetPtr clone = make_nodes(pts); // same coordinates, different identity
    KernelMatrix M(KernelSpec(3, 2.0, 1.0), nodes);
    DiscreteMeasure native(nodes, Eigen::Vector2d(1.0, 1.0));
    DiscreteMeasure foreign(clone, Eigen::Vector2d(1.0, 1.0));

    REQUIRE_THROWS_AS(potential(M, foreign), ParameterError);
    REQUIRE_THROWS_AS(mutual_energy(M, native, foreign), ParameterError);
    REQUIRE_THROWS_AS(strong_distance(M, foreign, native), ParameterError);
    REQUIRE_THROWS_AS(gauss_functional(M, foreign, native), ParameterError);
}

TEST_CASE("signed energy reduces to net weight vectors", "[energy]") {
    Eigen::MatrixXd pts(2, 3);
    pts << 0.0, 0.0, 0.0,
           1.0, 0.0, 0.0;
    NodeSetPtr nodes = make_nodes(pts);
    KernelMatrix M(KernelSpec(3, 2.0, 1.0), nodes);

    SignedDiscreteMeasure xi(DiscreteMeasure(nodes, Eigen::Vector2d(2.0, 0.0)),
                             DiscreteMeasure(nodes, Eigen::Vector2d(0.5, 1.0)));
    const Eigen::VectorXd net = xi.net_weights();
    const Eigen::VectorXd pot = potential_values(M, xi);
    REQUIRE(pot == M.entries() * net);

    SignedDiscreteMeasure theta(DiscreteMeasure(nodes, Eigen::Vector2d(0.0, 1.0)),
                                DiscreteMeasure::zero(nodes));
    const double pair = mutual_energy(M, xi, theta);
    REQUIRE_THAT(pair, WithinRel(net.dot(M.entries() * theta.net_weights()), 1e-12));
    REQUIRE(energy_norm(M, theta) > 0.0);
}
