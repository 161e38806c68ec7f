#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "msalab/lattice.hpp"
#include "msalab/point_process.hpp"

using namespace msalab;

namespace {

Configuration one_point(std::initializer_list<double> coords) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(coords.size()), 1);
    Eigen::Index i = 0;
    for (double c : coords) m(i++, 0) = c;
    return Configuration(std::move(m));
}

}  // namespace

TEST_CASE("eta_of_scale") {
    CHECK(eta_of_scale(2.0, 1.0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
    // The bookkeeping exponent underflows immediately.
    CHECK_THROWS_AS(eta_of_scale(10.0, 6e6), std::overflow_error);
    CHECK_THROWS_AS(eta_of_scale(0.5, 1.0), std::invalid_argument);
    // Monotone decreasing in L.
    double last = 1.0;
    for (double L : {2.0, 4.0, 8.0, 16.0}) {
        const double eta = eta_of_scale(L, 1.0);
        CHECK(eta < last);
        last = eta;
    }
}

TEST_CASE("grid cells lie inside the box and index points correctly") {
    const Box box = Box::centered(1, 4.0);
    const EtaGrid grid(box, 0.5);
    // Largest index m with (m + 1/2) eta <= L/2: m = 3 here.
    CHECK(grid.max_index() == 3);
    // A point in cell j maps to j.
    Eigen::VectorXd p(1);
    p << 1.4;  // cell 3 spans (1.25, 1.75)
    auto j = grid.cell_of(p);
    REQUIRE(j.has_value());
    CHECK((*j)[0] == 3);
    CHECK(grid.site_center(*j)[0] == doctest::Approx(1.5));
    // Outside any full cell (between last cell and the box face).
    p << 1.9;
    CHECK(!grid.cell_of(p).has_value());
    // Exactly on a cell face.
    p << 0.25;
    CHECK(!grid.cell_of(p).has_value());
}

TEST_CASE("acceptability classification") {
    const Box box = Box::centered(1, 4.0);
    const EtaGrid grid(box, 0.5);
    const double rho = 1.0;

    SUBCASE("empty configuration is acceptable") {
        const auto v = classify_acceptable(Configuration{}, grid, rho);
        CHECK(v.acceptable());
        CHECK(v.total_ok);
        CHECK(v.cell_ok);
    }

    SUBCASE("two points in one cell violate the cell bound") {
        Eigen::MatrixXd pts(1, 2);
        pts << 0.05, 0.1;  // both in cell 0
        const auto v = classify_acceptable(Configuration(pts), grid, rho);
        CHECK(!v.cell_ok);
        CHECK(v.clazz == AcceptabilityVerdict::Class::neither);
    }

    SUBCASE("annulus point is acceptable' but not acceptable") {
        const double eta = grid.eta();
        // Distance eta(1-eta)/2 + eta^2/4 from the cell center: inside the
        // cell, outside the shrunken cell.
        const double off = eta * (1.0 - eta) / 2.0 + eta * eta / 4.0;
        const auto v = classify_acceptable(one_point({off}), grid, rho);
        CHECK(v.loose_boundary_ok);
        CHECK(!v.strict_boundary_ok);
        CHECK(v.clazz == AcceptabilityVerdict::Class::acceptable_prime);
        CHECK(v.acceptable_prime());
        CHECK(!v.acceptable());
    }

    SUBCASE("acceptable implies acceptable' on random samples") {
        for (int t = 0; t < 200; ++t) {
            const auto cfg = sample_poisson(box, PoissonParams(1.0, 600 + t));
            const auto v = classify_acceptable(cfg, grid, rho);
            if (v.acceptable()) CHECK(v.acceptable_prime());
            if (v.strict_boundary_ok) CHECK(v.loose_boundary_ok);
        }
    }
}

TEST_CASE("occupancy classes separate inequivalent configurations") {
    const Box box = Box::centered(1, 4.0);
    const EtaGrid grid(box, 0.5);

    SUBCASE("empty") {
        CHECK(occupancy_class(Configuration{}, grid, 1.0).occupied.empty());
    }

    SUBCASE("snap is idempotent on classes") {
        for (int t = 0; t < 100; ++t) {
            const auto cfg = sample_poisson(box, PoissonParams(0.8, 7100 + t));
            const auto v = classify_acceptable(cfg, grid, 1.0);
            if (!v.acceptable_prime()) continue;
            const auto occ = occupancy_class(cfg, grid, 1.0);
            const auto snapped = snap_representative(occ, grid);
            CHECK(occupancy_class(snapped, grid, 1.0) == occ);
            CHECK(snapped.size() == static_cast<Eigen::Index>(occ.occupied.size()));
        }
    }

    SUBCASE("intra-cell perturbation preserves the class") {
        const auto base = one_point({0.5});  // center of cell 1
        const auto occ0 = occupancy_class(base, grid, 1.0);
        const auto moved = one_point({0.5 + grid.eta() / 4.0});
        CHECK(occupancy_class(moved, grid, 1.0) == occ0);
        const auto elsewhere = one_point({1.0});  // cell 2
        CHECK(!(occupancy_class(elsewhere, grid, 1.0) == occ0));
    }

    SUBCASE("non-acceptable' input is a domain error") {
        CHECK_THROWS_AS(occupancy_class(one_point({1.9}), grid, 1.0), std::domain_error);
    }
}

TEST_CASE("density condition") {
    const Box box = Box::centered(1, 16.0);
    // Exponents large enough that sub-boxes are genuinely smaller than the
    // box (side 16^{0.8} ~ 9.2, required count ~ 9.2).
    DensityParams params(0.2, 0.2, 1.0);

    SUBCASE("all grid sites is dense") {
        std::vector<Eigen::VectorXd> sites;
        for (double x = -7.75; x <= 7.75; x += 0.5) {
            Eigen::VectorXd p(1);
            p << x;
            sites.push_back(p);
        }
        CHECK(is_dense(sites, box, params));
    }

    SUBCASE("empty set is not dense once a site is required") {
        // L^{d - eps2} = 16^{0.95} > 1.
        CHECK(!is_dense({}, box, params));
    }

    SUBCASE("half-empty box is witnessed by a right sub-box") {
        std::vector<Eigen::VectorXd> sites;
        for (double x = -7.75; x < 0.0; x += 0.25) {
            Eigen::VectorXd p(1);
            p << x;
            sites.push_back(p);
        }
        CHECK(!is_dense(sites, box, params));
    }
}

TEST_CASE("bevents validate disjointness and the count cap") {
    auto site = [](int k) {
        SiteIndex j(1);
        j << k;
        return j;
    };
    CHECK_THROWS_AS(BEvent({site(1)}, {site(1)}, {}, 100.0), std::invalid_argument);
    CHECK_THROWS_AS(BEvent({site(1), site(2)}, {site(3)}, {site(4)}, 3.0), std::invalid_argument);
    const BEvent ok({site(1)}, {site(2)}, {site(3)}, 100.0);
    CHECK(ok.B.size() == 1);
}

TEST_CASE("rebase enumerates parent realizations") {
    const Box box = Box::centered(1, 4.0);
    const EtaGrid coarse(box, 0.5);
    const EtaGrid fine(box, 0.1);  // five fine cells per coarse cell

    auto site = [](int k) {
        SiteIndex j(1);
        j << k;
        return j;
    };

    SUBCASE("empty event rebases to a single empty event") {
        const auto res = rebase_bevent(BEvent{}, coarse, fine);
        REQUIRE(res.events.size() == 1);
        CHECK(res.events[0].B.empty());
        CHECK(res.events[0].S.empty());
    }

    SUBCASE("one occupied cell with k parent cells gives k singletons") {
        BEvent be({site(1)}, {}, {}, 0.0);  // coarse cell 1 spans (0.25, 0.75)
        const auto res = rebase_bevent(be, coarse, fine);
        // Fine sites at 0.3, 0.4, 0.5, 0.6, 0.7 lie strictly inside.
        CHECK(res.events.size() == 5);
        for (const auto& e : res.events) {
            CHECK(e.B.size() == 1);
            const double pos = fine.site_center(e.B.front())[0];
            CHECK(pos > 0.25);
            CHECK(pos < 0.75);
        }
        // Pairwise distinct, hence disjoint as events.
        for (size_t i = 0; i < res.events.size(); ++i)
            for (size_t j = i + 1; j < res.events.size(); ++j)
                CHECK(!(res.events[i] == res.events[j]));
    }

    SUBCASE("product structure over occupied cells") {
        BEvent be({site(1)}, {}, {site(-2)}, 0.0);
        const auto res = rebase_bevent(be, coarse, fine);
        CHECK(res.events.size() == 25);
    }

    SUBCASE("grid compatibility is enforced") {
        CHECK_THROWS_AS(rebase_bevent(BEvent{}, fine, coarse), std::invalid_argument);
    }

    SUBCASE("close scales raise the separation flag") {
        // Surrogate eta at adjacent small scales: eta_l = e^{-2}, eta_L = e^{-3}.
        const EtaGrid c2(box, std::exp(-2.0));
        const EtaGrid f3(box, std::exp(-3.0));
        CHECK(rebase_bevent(BEvent{}, c2, f3).scale_separation_warning);
        // Well-separated scales stay quiet.
        const EtaGrid f6(box, std::exp(-6.0));
        CHECK(!rebase_bevent(BEvent{}, c2, f6).scale_separation_warning);
    }
}

TEST_CASE("acceptability failure fraction is under the computable bound") {
    const int d = 1;
    const double rho = 1.0;
    const int trials = 4000;
    for (double L : {4.0, 6.0}) {
        const Box box = Box::centered(d, L);
        const double eta = eta_of_scale(L, 1.0);
        const EtaGrid grid(box, eta);
        int failures = 0;
        for (int t = 0; t < trials; ++t) {
            const auto y = sample_marked(box, 2.0 * rho, 880000 + t);
            if (!classify_acceptable(y.as_configuration(), grid, rho).acceptable()) ++failures;
        }
        const double frac = static_cast<double>(failures) / trials;
        const double bound = acceptability_failure_bound(rho, L, d, eta);
        CHECK(frac <= bound + 3.0 * std::sqrt(bound / trials) + 3.0 / trials);
    }
}
