#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <vector>

#include "sweep/balayage.hpp"
#include "test_support.hpp"

using namespace sweep;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Two nodes two units apart, unit regularization: the classical two-point
// configuration whose sweep and equilibrium data are hand-computable.
struct TwoPoint {
    NodeSetPtr nodes;
    KernelMatrix M;
    RegionMask region; // just node 0

    TwoPoint()
        : nodes(make_nodes([] {
              Eigen::MatrixXd p(2, 3);
              p << 0.0, 0.0, 0.0,
                   2.0, 0.0, 0.0;
              return p;
          }())),
          M(KernelSpec(3, 2.0, 1.0), nodes),
          region(RegionMask::from_indices(nodes, {0})) {}
};

} // namespace

TEST_CASE("sweep onto a single node is a kernel ratio", "[balayage]") {
    TwoPoint tp;
    DiscreteMeasure omega(tp.nodes, Eigen::Vector2d(0.0, 1.0));

    const BalayageResult bal = inner_balayage(tp.M, omega, tp.region);
    // w = kappa(x, y) / kappa(x, x) = (1/sqrt(5)) / 1
    const double expected = 1.0 / std::sqrt(5.0);
    REQUIRE_THAT(bal.swept.weights()[0], WithinAbs(expected, 1e-12));
    REQUIRE(bal.swept.weights()[1] == 0.0);
    REQUIRE_THAT(bal.mass, WithinAbs(expected, 1e-12));
    REQUIRE(bal.potential_on_A_max_gap <= 1e-12);
    REQUIRE(bal.kkt.converged);
    REQUIRE(bal.mass <= omega.total_mass());

    // Scaling the source scales the sweep linearly.
    DiscreteMeasure omega3(tp.nodes, Eigen::Vector2d(0.0, 3.0));
    const BalayageResult bal3 = inner_balayage(tp.M, omega3, tp.region);
    REQUIRE_THAT(bal3.swept.weights()[0], WithinRel(3.0 * expected, 1e-12));
}

TEST_CASE("measures already inside the region are fixed points", "[balayage]") {
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        testgen::ScenarioOptions opt;
        opt.region_nodes = 25;
        opt.outside_sources = 3;
        auto sc = testgen::random_scenario(seed, opt);

        // Restrict omega to the region: that measure must sweep to itself.
        const DiscreteMeasure inside = trace(sc.omega, sc.region);
        Eigen::VectorXd w = inside.weights();
        std::mt19937_64 rng(seed + 100);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (Eigen::Index i = 0; i < 25; ++i) w[i] += u(rng);
        const DiscreteMeasure carried(sc.nodes, w);

        for (BalayageMode mode : {BalayageMode::gauss_capped, BalayageMode::projection}) {
            const BalayageResult bal = inner_balayage(sc.M(), carried, sc.region, mode, 1e-11);
            const double scale = carried.weights().lpNorm<Eigen::Infinity>();
            REQUIRE((bal.swept.weights() - carried.weights()).lpNorm<Eigen::Infinity>() <=
                    1e-7 * scale);
            REQUIRE(strong_distance(sc.M(), bal.swept, carried) <=
                    1e-7 * energy_norm(sc.M(), carried));
        }
    }
}

TEST_CASE("both formulations produce the same sweep when the cap is slack", "[balayage]") {
    for (std::uint64_t seed : {11u, 12u, 13u, 14u}) {
        auto sc = testgen::random_scenario(seed, testgen::options_for(static_cast<int>(seed)));
        const BalayageResult capped =
            inner_balayage(sc.M(), sc.omega, sc.region, BalayageMode::gauss_capped, 1e-11);
        const BalayageResult proj =
            inner_balayage(sc.M(), sc.omega, sc.region, BalayageMode::projection, 1e-11);
        REQUIRE_FALSE(capped.kkt.cap_binding);
        const double scale =
            std::max(1e-300, proj.swept.weights().lpNorm<Eigen::Infinity>());
        REQUIRE((capped.swept.weights() - proj.swept.weights()).lpNorm<Eigen::Infinity>() <=
                1e-8 * scale);

        // A larger mass-cap scale cannot change a sweep whose cap is slack.
        KernelSpec relaxed(sc.spec.dimension, sc.spec.order, sc.spec.epsilon, 3.0);
        KernelMatrix M3(relaxed, sc.nodes);
        const BalayageResult loose =
            inner_balayage(M3, sc.omega, sc.region, BalayageMode::gauss_capped, 1e-11);
        REQUIRE((loose.swept.weights() - proj.swept.weights()).lpNorm<Eigen::Infinity>() <=
                1e-8 * scale);
    }
}

TEST_CASE("swept potential matches on the region and never overshoots the mass",
          "[balayage]") {
    for (int k = 0; k < 12; ++k) {
        auto sc = testgen::random_scenario(500 + static_cast<std::uint64_t>(k),
                                           testgen::options_for(k));
        const BalayageResult bal = inner_balayage(sc.M(), sc.omega, sc.region,

                                                  BalayageMode::gauss_capped, 1e-10);
        const Eigen::VectorXd pot_omega = sc.M().entries() * sc.omega.weights();
        double pot_scale = 0.0;
        for (Eigen::Index i : sc.region.indices())
            pot_scale = std::max(pot_scale, std::abs(pot_omega[i]));

        CAPTURE(k, sc.spec.dimension, sc.spec.order);
        REQUIRE(bal.kkt.converged);
        REQUIRE(bal.potential_on_A_max_gap <= 1e-9 * pot_scale);
        REQUIRE(bal.mass <= sc.omega.total_mass() + 1e-9);
        REQUIRE(bal.energy_identity_gap <=
                1e-10 * std::max(1.0, std::abs(bal.gauss_value)));

        // U^swept <= U^omega at every region node (equality on the support).
        const Eigen::VectorXd pot_sweep = sc.M().entries() * bal.swept.weights();
        for (Eigen::Index i : sc.region.indices())
            REQUIRE(pot_sweep[i] <= pot_omega[i] + 1e-9 * pot_scale);
    }
}

TEST_CASE("sweeping through an intermediate region changes nothing", "[balayage]") {
    for (std::uint64_t seed : {21u, 22u, 23u}) {
        testgen::ScenarioOptions opt;
        opt.region_nodes = 30;
        opt.outside_sources = 4;
        auto sc = testgen::random_scenario(seed, opt);

        std::vector<Eigen::Index> inner_idx;
        for (Eigen::Index i = 0; i < 15; ++i) inner_idx.push_back(i);
        RegionMask inner = RegionMask::from_indices(sc.nodes, inner_idx);

        const RestReport rep = balayage_with_rest(sc.M(), sc.omega, sc.region, inner, 1e-11);
        const double scale = energy_norm(sc.M(), rep.direct.swept);
        REQUIRE(rep.strong_distance <= 1e-8 * std::max(scale, 1e-300));

        const Eigen::VectorXd pot_mid =
            sc.M().entries() * rep.intermediate.swept.weights();
        const double pot_scale = pot_mid.lpNorm<Eigen::Infinity>();
        REQUIRE(rep.monotonicity_gap <= 1e-9 * pot_scale);

        REQUIRE_THROWS_AS(balayage_with_rest(sc.M(), sc.omega, inner, sc.region),
                          ParameterError);
    }
}

TEST_CASE("regularization defect outside the region shrinks with epsilon", "[balayage]") {
    // Solid grid region shadowed by an exterior source: the interior nodes
    // sit behind the visible face, which is exactly the configuration where
    // the finite regularization produces a visible domination defect.
    Eigen::MatrixXd pts(65, 3);
    int r = 0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k, ++r)
                pts.row(r) << i / 3.0, j / 3.0, k / 3.0;
    pts.row(64) << 2.5, 0.5, 0.5;
    NodeSetPtr nodes = make_nodes(pts);
    std::vector<Eigen::Index> reg(64);
    std::iota(reg.begin(), reg.end(), Eigen::Index{0});
    RegionMask region = RegionMask::from_indices(nodes, reg);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(65);
    w[64] = 1.0;
    DiscreteMeasure omega(nodes, w);

    std::vector<double> defects;
    for (double factor : {1.0, 0.5, 0.25}) {
        KernelMatrix M(KernelSpec(3, 2.0, factor * nodes->min_spacing()), nodes);
        defects.push_back(
            inner_balayage(M, omega, region, BalayageMode::projection, 1e-11)
                .domination_violation);
    }
    CAPTURE(defects[0], defects[1], defects[2]);
    REQUIRE(defects[0] > 0.0);
    REQUIRE(defects[1] < defects[0]);
    REQUIRE(defects[2] < defects[1]);
    REQUIRE(defects[2] < 0.2 * defects[0]);
}

TEST_CASE("equilibrium measure closed forms", "[balayage]") {
    SECTION("single node") {
        Eigen::MatrixXd pts(1, 3);
        pts << 0.0, 0.0, 0.0;
        NodeSetPtr nodes = make_nodes(pts);
        const double eps = 0.5;
        KernelMatrix M(KernelSpec(3, 2.0, eps), nodes);
        const EquilibriumResult eq = equilibrium_measure(M, RegionMask::full(nodes));
        // w = 1 / kappa(x, x) = eps^(n - alpha) = 0.5
        REQUIRE_THAT(eq.gamma.weights()[0], WithinAbs(0.5, 1e-12));
        REQUIRE_THAT(eq.capacity, WithinAbs(0.5, 1e-12));
        REQUIRE_THAT(eq.potential_min_on_A, WithinAbs(1.0, 1e-12));
        REQUIRE_THAT(eq.potential_max_on_support, WithinAbs(1.0, 1e-12));
        REQUIRE(eq.identity_gap <= 1e-12);
    }

    SECTION("two symmetric nodes split the capacity evenly") {
        TwoPoint tp;
        const EquilibriumResult eq = equilibrium_measure(tp.M, RegionMask::full(tp.nodes));
        const double a = 1.0;                  // diagonal kappa
        const double b = 1.0 / std::sqrt(5.0); // off-diagonal kappa
        REQUIRE_THAT(eq.gamma.weights()[0], WithinRel(1.0 / (a + b), 1e-12));
        REQUIRE_THAT(eq.gamma.weights()[1], WithinRel(1.0 / (a + b), 1e-12));
        REQUIRE_THAT(eq.capacity, WithinRel(2.0 / (a + b), 1e-12));
        REQUIRE(eq.identity_gap <= 1e-12);
    }

    SECTION("potential sits at one on the support and above on the rest") {
        auto sc = testgen::random_scenario(61);
        const EquilibriumResult eq = equilibrium_measure(sc.M(), sc.region, 1e-11);
        REQUIRE(eq.kkt.converged);
        REQUIRE(eq.potential_min_on_A >= 1.0 - 1e-9);
        REQUIRE_THAT(eq.potential_max_on_support, WithinAbs(1.0, 1e-9));
        REQUIRE(eq.identity_gap <= 1e-9 * eq.capacity);
        REQUIRE(eq.capacity > 0.0);
    }
}

TEST_CASE("swept mass equals the equilibrium potential paired with the source",
          "[balayage]") {
    SECTION("single node closed form") {
        TwoPoint tp;
        DiscreteMeasure omega(tp.nodes, Eigen::Vector2d(0.0, 1.0));
        const MassFormulaReport rep = mass_formula_check(tp.M, omega, tp.region);
        const double expected = 1.0 / std::sqrt(5.0);
        REQUIRE_THAT(rep.lhs, WithinAbs(expected, 1e-12));
        REQUIRE_THAT(rep.rhs, WithinAbs(expected, 1e-12));
        REQUIRE(rep.gap <= 1e-12);
        REQUIRE(rep.support_alignment_gap <= 1e-12);
    }

    SECTION("random scenarios in the fully supported regime") {
        for (std::uint64_t seed : {71u, 72u, 73u, 74u}) {
            auto sc = testgen::random_scenario(seed, testgen::options_for(static_cast<int>(seed)));
            const MassFormulaReport rep = mass_formula_check(sc.M(), sc.omega, sc.region, 1e-11);
            CAPTURE(seed, rep.lhs, rep.rhs, rep.support_alignment_gap);
            REQUIRE(rep.gap <= 1e-8 * std::max(rep.lhs, 1e-300));
        }
    }
}

TEST_CASE("no dominating measure carries less mass than the sweep", "[balayage]") {
    auto sc = testgen::random_scenario(81);
    const MassProbeReport rep = minimum_mass_check(sc.M(), sc.omega, sc.region, 24, 4242, 1e-11);
    REQUIRE(rep.probe_masses.size() == 24);
    REQUIRE(rep.max_violation == 0.0);
    const Eigen::VectorXd pot_omega = sc.M().entries() * sc.omega.weights();
    double pot_scale = 0.0;
    for (Eigen::Index i : sc.region.indices())
        pot_scale = std::max(pot_scale, std::abs(pot_omega[i]));
    for (double d : rep.membership_defects) REQUIRE(d <= 1e-8 * pot_scale);
    for (double m : rep.probe_masses) REQUIRE(m >= rep.swept_mass);

    REQUIRE_THROWS_AS(minimum_mass_check(sc.M(), sc.omega, sc.region, 0, 1), ParameterError);
}

TEST_CASE("pairing battery identifies the sweep and rejects impostors", "[balayage]") {
    auto sc = testgen::random_scenario(91);
    const BalayageResult bal =
        inner_balayage(sc.M(), sc.omega, sc.region, BalayageMode::gauss_capped, 1e-11);

    const UniquenessReport good =
        uniqueness_battery(sc.M(), bal.swept, sc.omega, sc.region, 16, 777);
    REQUIRE(good.is_balayage);
    REQUIRE(good.residuals.size() == 16);
    REQUIRE(good.max_residual <= good.threshold);

    DiscreteMeasure scaled(sc.nodes, 1.1 * bal.swept.weights());
    const UniquenessReport bad =
        uniqueness_battery(sc.M(), scaled, sc.omega, sc.region, 16, 777);
    REQUIRE_FALSE(bad.is_balayage);
    REQUIRE(bad.max_residual > 50.0 * bad.threshold);

    // The sweep of a different source fails the battery for this source.
    auto sc2 = testgen::random_scenario(92);
    DiscreteMeasure other_omega(sc.nodes, sc.omega.weights() * 0.5);
    const BalayageResult bal2 =
        inner_balayage(sc.M(), other_omega, sc.region, BalayageMode::gauss_capped, 1e-11);
    const UniquenessReport wrong =
        uniqueness_battery(sc.M(), bal2.swept, sc.omega, sc.region, 16, 777);
    REQUIRE_FALSE(wrong.is_balayage);
}

TEST_CASE("battery construction is deterministic in the seed", "[balayage]") {
    auto sc = testgen::random_scenario(95);
    const auto a = make_battery(sc.nodes, 5, 11);
    const auto b = make_battery(sc.nodes, 5, 11);
    const auto c = make_battery(sc.nodes, 5, 12);
    REQUIRE(a.size() == 5);
    for (size_t k = 0; k < a.size(); ++k)
        REQUIRE(a[k].weights() == b[k].weights());
    bool all_same = true;
    for (size_t k = 0; k < a.size(); ++k)
        if (a[k].weights() != c[k].weights()) all_same = false;
    REQUIRE_FALSE(all_same);
    REQUIRE_THROWS_AS(make_battery(sc.nodes, 0, 1), ParameterError);
}

TEST_CASE("exhaustion sweeps approach the full-region sweep monotonically",
          "[balayage]") {
    testgen::ScenarioOptions opt;
    opt.region_nodes = 36;
    opt.outside_sources = 4;
    auto sc = testgen::random_scenario(97, opt);

    const Exhaustion ex = build_exhaustion(sc.region, 4, ExhaustionStrategy::radial);
    const ExhaustionReport rep = exhaust_and_sweep(sc.M(), sc.omega, ex, 1e-11);

    REQUIRE(rep.stages.size() == ex.stages.size());
    REQUIRE(rep.distances_to_final.back() == 0.0);

    const Eigen::VectorXd pot_final =
        sc.M().entries() * rep.stages.back().swept.weights();
    const double pot_scale = pot_final.lpNorm<Eigen::Infinity>();
    REQUIRE(rep.potential_monotonicity_defect <= 1e-9 * pot_scale);
    REQUIRE(rep.equilibrium_monotonicity_defect <= 1e-9);
    const double dist_scale = std::max(rep.distances_to_final.front(), 1e-300);
    REQUIRE(rep.distance_monotonicity_defect <= 1e-9 * dist_scale);

    // The final stage is the full region, so its sweep is the direct sweep.
    const BalayageResult direct =
        inner_balayage(sc.M(), sc.omega, sc.region, BalayageMode::gauss_capped, 1e-11);
    REQUIRE(strong_distance(sc.M(), rep.stages.back().swept, direct.swept) <=
            1e-8 * energy_norm(sc.M(), direct.swept));
}

TEST_CASE("signed sweeps act part by part and stay normalized", "[balayage]") {
    auto sc = testgen::random_scenario(99);

    SECTION("vanishing negative part reduces to the positive sweep") {
        SignedDiscreteMeasure xi(sc.omega, DiscreteMeasure::zero(sc.nodes));
        const SignedBalayageResult rep = signed_balayage_detailed(sc.M(), xi, sc.region, 1e-11);
        const BalayageResult plain =
            inner_balayage(sc.M(), sc.omega, sc.region, BalayageMode::gauss_capped, 1e-11);
        REQUIRE(rep.swept.positive_part().weights() == plain.swept.weights());
        REQUIRE(rep.swept.negative_part().total_mass() == 0.0);
        REQUIRE(rep.swept.is_normalized());
    }

    SECTION("identical parts cancel exactly") {
        SignedDiscreteMeasure xi(sc.omega, sc.omega);
        const SignedDiscreteMeasure swept = signed_balayage(sc.M(), xi, sc.region);
        REQUIRE(swept.positive_part().total_mass() == 0.0);
        REQUIRE(swept.negative_part().total_mass() == 0.0);
    }

    SECTION("net result is the difference of the part sweeps") {
        std::mt19937_64 rng(1234);
        Eigen::VectorXd neg_w =
            0.4 * sweep::detail::random_sparse_weights(sc.nodes->count(), rng);
        SignedDiscreteMeasure xi(sc.omega, DiscreteMeasure(sc.nodes, neg_w));
        const SignedBalayageResult rep = signed_balayage_detailed(sc.M(), xi, sc.region, 1e-11);
        const Eigen::VectorXd expected =
            rep.positive_part.swept.weights() - rep.negative_part.swept.weights();
        REQUIRE(rep.swept.net_weights() == expected);
        REQUIRE(rep.swept.is_normalized());
    }
}

TEST_CASE("signed pairing symmetry holds across the battery", "[balayage]") {
    auto sc = testgen::random_scenario(103);
    std::mt19937_64 rng(9);
    Eigen::VectorXd neg_w = 0.5 * sweep::detail::random_sparse_weights(sc.nodes->count(), rng);
    SignedDiscreteMeasure xi(sc.omega, DiscreteMeasure(sc.nodes, neg_w));

    const SignedSymmetryReport rep = signed_symmetry_battery(sc.M(), xi, sc.region, 6, 555);
    CAPTURE(rep.max_residual, rep.threshold);
    REQUIRE(rep.pass);
    REQUIRE(rep.residuals.size() == 6);
}

TEST_CASE("balayage argument validation", "[balayage]") {
    TwoPoint tp;
    DiscreteMeasure omega(tp.nodes, Eigen::Vector2d(0.0, 1.0));

    RegionMask empty = RegionMask::from_indices(tp.nodes, {});
    REQUIRE_THROWS_AS(inner_balayage(tp.M, omega, empty), ParameterError);

    NodeSetPtr clone = make_nodes(tp.nodes->points());
    DiscreteMeasure foreign(clone, Eigen::Vector2d(0.0, 1.0));
    REQUIRE_THROWS_AS(inner_balayage(tp.M, foreign, tp.region), ParameterError);
    REQUIRE_THROWS_AS(equilibrium_measure(tp.M, RegionMask::full(clone)), ParameterError);
}
