#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "msalab/msa.hpp"

using namespace msalab;

namespace {

GoodnessConfig base_config(double rho) {
    GoodnessConfig cfg;
    cfg.profile = SingleSiteProfile::indicator();
    cfg.h = 0.125;
    cfg.density = rho;
    return cfg;
}

}  // namespace

TEST_CASE("initial scale parameters") {
    SUBCASE("closed-form values at L = e") {
        const auto p = initial_scale_params(1, 1.0, 0.37, std::exp(1.0), 1.0);
        CHECK(p.delta_L == doctest::Approx(3.37).epsilon(1e-12));
        CHECK(p.E_L == doctest::Approx(std::pow(3.37, -4.0)).epsilon(1e-12));
        CHECK(p.E_L == doctest::Approx(7.75e-3).epsilon(0.01));
        CHECK(p.m_L == doctest::Approx(0.5 * std::sqrt(p.E_L)).epsilon(1e-12));
        CHECK(p.m_L == doctest::Approx(0.0440).epsilon(0.01));
    }

    SUBCASE("high-density limit drives E_L to C_u") {
        const auto p = initial_scale_params(1, 1e9, 0.37, 100.0, 2.5);
        CHECK(p.delta_L == doctest::Approx(1.0).epsilon(1e-3));
        CHECK(p.E_L == doctest::Approx(2.5 / std::pow(p.delta_L, 4.0)).epsilon(1e-12));
    }

    SUBCASE("density window is enforced") {
        CHECK_THROWS_WITH_AS(initial_scale_params(1, 1e-9, 0.37, 100.0, 1.0),
                             doctest::Contains("admissible window"), std::invalid_argument);
    }
}

TEST_CASE("localizing trials are reproducible from the seed alone") {
    const Box box = Box::centered(1, 8.0);
    const auto cfg = base_config(2.0);
    const auto a = localizing_trial(box, 0.5, 0.2, 2.0, 1234, cfg, DensityParams{});
    const auto b = localizing_trial(box, 0.5, 0.2, 2.0, 1234, cfg, DensityParams{});
    CHECK(a.acceptable == b.acceptable);
    CHECK(a.goodness == b.goodness);
    CHECK(a.free_sites_dense == b.free_sites_dense);
    CHECK(a.resolvent_norm == b.resolvent_norm);
    CHECK(a.fitted_mass == b.fitted_mass);
}

TEST_CASE("estimate rejects zero trials") {
    const Box box = Box::centered(1, 8.0);
    CHECK_THROWS_AS(estimate_localizing_probability(box, 0.5, 0.2, 1.0, 0, 1, 0.37,
                                                    base_config(1.0), DensityParams{}),
                    std::invalid_argument);
}

TEST_CASE("high-disorder regime beats the target; a resonant energy does not") {
    const int d = 1;
    const double L = 8.0;
    const double E0 = 2.0;
    const double p = 0.37;
    const Box box = Box::centered(d, L);
    const auto u = SingleSiteProfile::indicator();
    const double rho = high_disorder_density(d, u, p, E0, L);
    const double m = 0.5 * std::sqrt(E0);
    auto cfg = base_config(rho);
    cfg.kappa = kappa_for_density(L, d, rho);
    const int trials = 150;

    const auto gap = estimate_localizing_probability(box, E0, m, rho, trials, 2025, p, cfg,
                                                     DensityParams{});
    CHECK(gap.fraction >= gap.target);

    // Resonant comparison point: the median eigenvalue of a typical sample.
    const auto sample = sample_poisson(box, PoissonParams(rho, 555));
    const auto H = assemble(box, sample, u, 0.125);
    const auto spec = dense_spectrum(H.matrix, false);
    const double Emed = spec.values[spec.values.size() / 2];
    const auto res = estimate_localizing_probability(box, Emed, m, rho, trials, 2025, p, cfg,
                                                     DensityParams{});
    CHECK(res.fraction < gap.fraction);
}

TEST_CASE("pass fraction is monotone in the density across the sweep") {
    const double L = 8.0, E0 = 2.0, p = 0.37;
    const Box box = Box::centered(1, L);
    const auto u = SingleSiteProfile::indicator();
    const double rho_star = high_disorder_density(1, u, p, E0, L);
    const double m = 0.5 * std::sqrt(E0);
    const int trials = 120;
    double prev = -1.0;
    for (double rho : {rho_star / 4.0, rho_star / 2.0, rho_star}) {
        auto cfg = base_config(rho);
        cfg.kappa = kappa_for_density(L, 1, rho);
        const auto est = estimate_localizing_probability(box, E0, m, rho, trials, 99, p,
                                                         cfg, DensityParams{});
        const double sigma = std::sqrt(0.25 / trials);
        CHECK(est.fraction >= prev - 3.0 * sigma);
        prev = est.fraction;
    }
}

TEST_CASE("wegner measurement") {
    const double L = 8.0, p = 0.37, rho1 = 0.745;
    const Box box = Box::centered(1, L);
    const auto u = SingleSiteProfile::indicator();
    const double rho = high_disorder_density(1, u, p, 2.0, L);
    auto cfg = base_config(rho);
    cfg.kappa = kappa_for_density(L, 1, rho);
    const int trials = 100;

    SUBCASE("huge C1 accepts every non-blowup sample") {
        const auto est = wegner_measure(box, 1.0, rho, 1e3, rho1, trials, 7, p, cfg);
        CHECK(est.fraction == doctest::Approx(1.0));
        CHECK(est.n_acceptable > 0);
    }

    SUBCASE("C1 = 0 means threshold 1: passes require a unit spectral gap") {
        // Deep-gap regime: lambda_1 >> 2, E = 1, dist > 1.
        const auto deep = wegner_measure(box, 1.0, rho, 0.0, rho1, trials, 7, p, cfg);
        CHECK(deep.threshold == doctest::Approx(1.0));
        CHECK(deep.fraction == doctest::Approx(1.0));
        // Sparse regime at an interior energy: distances are tiny.
        const auto sparse =
            wegner_measure(box, 0.5, 0.4, 0.0, rho1, trials, 7, p, base_config(0.4));
        CHECK(sparse.fraction < 0.5);
    }

    SUBCASE("pass fraction is monotone in C1") {
        double prev = -1.0;
        for (double C1 : {0.0, 0.05, 0.5, 5.0}) {
            const auto est = wegner_measure(box, 0.8, 1.0, C1, rho1, trials, 11, p,
                                            base_config(1.0));
            CHECK(est.fraction >= prev);
            prev = est.fraction;
        }
    }

    SUBCASE("gap regime beats the target") {
        const auto est = wegner_measure(box, 1.0, rho, 1.0, rho1, 200, 13, p, cfg);
        CHECK(est.fraction >= est.target);
    }
}

TEST_CASE("nearest compatible cell sides") {
    // Parent 12: cell 5 is admissible as-is (n = 1), cell 2 as-is (n = 4),
    // cell 2.7 snaps into [2.857, 3.529) or [2.069, 2.609).
    CHECK(nearest_compatible_cell(12.0, 5.0) == doctest::Approx(5.0));
    CHECK(nearest_compatible_cell(12.0, 2.0) == doctest::Approx(2.0));
    const double snapped = nearest_compatible_cell(12.0, 2.7);
    CHECK(std::abs(snapped - 2.7) < 0.2);
    CHECK(!admissible_covering_n(12.0, 2.7).size());
    CHECK(admissible_covering_n(12.0, snapped).size());
}

TEST_CASE("defect classification") {
    const Box box = Box::centered(1, 12.0);
    const auto cfg = base_config(1.0);
    const std::vector<double> levels{5.0, 2.0};

    SUBCASE("all boxes good: empty defect map") {
        const auto map = defect_classify(box, Configuration{}, -1.0, 0.3, levels, 4, cfg);
        CHECK(map.defect_centers.empty());
        CHECK(map.notsobad);
        for (const auto& lvl : map.levels)
            for (auto v : lvl.verdicts) CHECK(v == BoxVerdict::good);
    }

    SUBCASE("all boxes bad: the defect region covers the box") {
        const Box big = Box::centered(1, 40.0);
        // An impossible decay demand makes every box with probe pairs bad.
        const auto map = defect_classify(big, Configuration{}, -1.0, 60.0, {16.0, 8.0}, 3, cfg);
        for (const auto& lvl : map.levels)
            for (auto v : lvl.verdicts) CHECK(v == BoxVerdict::bad);
        CHECK(!map.notsobad);
        CHECK(static_cast<Eigen::Index>(map.defect_centers.size()) ==
              map.levels.back().plan.count());
    }

    SUBCASE("a bad level-1 box is rescued by good level-2 boxes") {
        // E is an exact eigenvalue of the centered level-1 cell, so that cell
        // blows up; side-2 cells keep E well below their spectrum.
        Eigen::MatrixXd pt(1, 1);
        pt << 0.3;
        const Configuration X(pt);
        const auto plan1 = standard_covering(box, 5.0);
        Eigen::Index center_idx = 0;
        for (Eigen::Index i = 0; i < plan1.count(); ++i)
            if (plan1.centers.col(i).cwiseAbs().maxCoeff() < 1e-12) center_idx = i;
        const auto Hcell = assemble(plan1.cell(center_idx), X, cfg.profile,
                                    cfg.fitted_h(5.0));
        const double E = dense_spectrum(Hcell.matrix, false).values[0];
        REQUIRE(E < 1.0);

        const auto map = defect_classify(box, X, E, 0.3, levels, 4, cfg);
        bool level1_bad = false;
        for (auto v : map.levels[0].verdicts) level1_bad = level1_bad || v == BoxVerdict::bad;
        CHECK(level1_bad);
        for (auto v : map.levels[1].verdicts) CHECK(v != BoxVerdict::bad);
        CHECK(map.defect_centers.empty());
        CHECK(map.notsobad);
    }

    SUBCASE("output is independent of K2 only through the verdict") {
        const Box big = Box::centered(1, 40.0);
        const auto strict = defect_classify(big, Configuration{}, -1.0, 60.0, {16.0, 8.0}, 3, cfg);
        const auto loose = defect_classify(big, Configuration{}, -1.0, 60.0, {16.0, 8.0}, 50, cfg);
        CHECK(strict.defect_centers.size() == loose.defect_centers.size());
        CHECK(!strict.notsobad);
        CHECK(loose.notsobad);
    }
}

TEST_CASE("msa constants") {
    MsaConstants c;
    CHECK(c.K2(1) == 6);
    CHECK(c.K2(2) == 36);
}

TEST_CASE("run_msa") {
    MsaRunConfig cfg;
    cfg.dimension = 1;
    cfg.scales = {8.0};
    const auto u = SingleSiteProfile::indicator();
    cfg.rho_per_scale = {high_disorder_density(1, u, 0.37, 2.0, 8.0)};
    cfg.energy = 2.0;
    cfg.mass = 0.5 * std::sqrt(2.0);
    cfg.trials = 60;
    cfg.seed = 31337;
    cfg.goodness = base_config(cfg.rho_per_scale[0]);
    cfg.goodness.kappa = kappa_for_density(8.0, 1, cfg.rho_per_scale[0]);

    SUBCASE("single-scale report equals the single estimate") {
        const auto rep = run_msa(cfg);
        REQUIRE(rep.scales.size() == 1);
        const auto direct = estimate_localizing_probability(
            Box::centered(1, 8.0), cfg.energy, cfg.mass, cfg.rho_per_scale[0], cfg.trials,
            cfg.seed, cfg.p, cfg.goodness, cfg.density_params);
        CHECK(rep.scales[0].n_pass == direct.n_pass);
        CHECK(rep.scales[0].fraction == direct.fraction);
    }

    SUBCASE("reruns are identical and thread-count independent") {
        setenv("MSALAB_THREADS", "1", 1);
        const auto a = run_msa(cfg);
        setenv("MSALAB_THREADS", "2", 1);
        const auto b = run_msa(cfg);
        unsetenv("MSALAB_THREADS");
        REQUIRE(a.scales.size() == b.scales.size());
        CHECK(a.scales[0].n_pass == b.scales[0].n_pass);
        CHECK(a.scales[0].fitted_mass == b.scales[0].fitted_mass);
        CHECK(a.wegner[0].n_under == b.wegner[0].n_under);
        for (size_t t = 0; t < a.scales[0].records.size(); ++t) {
            CHECK(a.scales[0].records[t].seed == b.scales[0].records[t].seed);
            CHECK(a.scales[0].records[t].resolvent_norm ==
                  b.scales[0].records[t].resolvent_norm);
        }
    }
}
