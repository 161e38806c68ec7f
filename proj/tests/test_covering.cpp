#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "msalab/covering.hpp"
#include "msalab/random.hpp"

using namespace msalab;

namespace {

// Exhaustive probe of the four plan properties on a fine grid.
void probe_plan(const CoveringPlan& p, double probe_step) {
    const Box& parent = p.parent;
    const int d = parent.dim();

    // Coverage: every probe lies in at least one cell.
    // Deep containment: every probe has a deeply containing cell.
    std::vector<double> axis;
    for (double t = parent.lo(0) + probe_step / 2.0; t < parent.hi(0); t += probe_step)
        axis.push_back(t);
    std::vector<size_t> idx(static_cast<size_t>(d), 0);
    for (;;) {
        Eigen::VectorXd y(d);
        for (int i = 0; i < d; ++i) y[i] = axis[idx[static_cast<size_t>(i)]];
        bool covered = false, deep = false;
        for (Eigen::Index c = 0; c < p.count(); ++c) {
            if (p.cell(c).contains(y)) covered = true;
            if (covers_deeply(parent, p.centers.col(c), p.ell, y)) deep = true;
            if (covered && deep) break;
        }
        CHECK(covered);
        CHECK(deep);
        if (!covered || !deep) return;  // avoid assertion floods
        int ax = 0;
        while (ax < d) {
            if (++idx[static_cast<size_t>(ax)] < axis.size()) break;
            idx[static_cast<size_t>(ax)] = 0;
            ++ax;
        }
        if (ax == d) break;
    }

    // Core disjointness: min center spacing at least 3 ell / 5.
    double min_gap = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < p.count(); ++i)
        for (Eigen::Index j = i + 1; j < p.count(); ++j)
            min_gap = std::min(min_gap, (p.centers.col(i) - p.centers.col(j)).cwiseAbs().maxCoeff());
    if (p.count() > 1) CHECK(min_gap >= 3.0 * p.ell / 5.0 - 1e-12);

    // Cardinality.
    CHECK(static_cast<double>(p.count()) <=
          std::pow(2.0 * parent.side / p.ell, parent.dim()) + 1e-9);
}

}  // namespace

TEST_CASE("the L = 11, ell = 1 plan picks alpha = 5/7 with 15 centers") {
    const auto p = standard_covering(Box::centered(1, 11.0), 1.0);
    CHECK(p.n == 7);
    CHECK(p.alpha == doctest::Approx(5.0 / 7.0).epsilon(1e-15));
    CHECK(p.count() == 15);
    probe_plan(p, 0.1);
}

TEST_CASE("L = 2 ell has no admissible ratio") {
    CHECK_THROWS_AS(standard_covering(Box::centered(1, 2.0), 1.0), IncompatibleScales);
    try {
        standard_covering(Box::centered(1, 2.0), 1.0);
    } catch (const IncompatibleScales& e) {
        // Nearest compatible parent: just above 1 + 1.2 ell.
        CHECK(e.nearest_compatible == doctest::Approx(2.2).epsilon(1e-6));
    }
}

TEST_CASE("ratios 8..40 are all compatible and validate") {
    for (int ratio = 8; ratio <= 40; ratio += 4) {
        for (int d : {1, 2}) {
            const auto p = standard_covering(Box::centered(d, static_cast<double>(ratio)), 1.0);
            CHECK(p.alpha > 0.6);
            CHECK(p.alpha <= 0.8);
            probe_plan(p, 0.25);
        }
    }
}

TEST_CASE("determinism") {
    const auto a = standard_covering(Box::centered(2, 13.0), 1.0);
    const auto b = standard_covering(Box::centered(2, 13.0), 1.0);
    CHECK(a.alpha == b.alpha);
    CHECK(a.centers == b.centers);
}

TEST_CASE("locate_container") {
    const auto p = standard_covering(Box::centered(1, 11.0), 1.0);

    SUBCASE("parent center is contained in its own cell") {
        Eigen::VectorXd y = Eigen::VectorXd::Zero(1);
        const auto r = locate_container(p, y);
        // The returned cell must contain the full 2l/5 neighborhood here.
        CHECK(std::abs(r[0]) <= 0.5 - 0.2 + 1e-12);
    }

    SUBCASE("boundary faces in d = 1 and d = 2") {
        Eigen::VectorXd y(1);
        y << 5.5 - 1e-9;
        CHECK_NOTHROW(locate_container(p, y));

        const auto p2 = standard_covering(Box::centered(2, 11.0), 1.0);
        Eigen::VectorXd y2(2);
        y2 << 5.5 - 1e-9, -5.5 + 1e-9;  // a corner
        CHECK_NOTHROW(locate_container(p2, y2));
    }

    SUBCASE("every probe on a 0.1 ell grid succeeds") {
        for (double t = -5.45; t < 5.5; t += 0.1) {
            Eigen::VectorXd y(1);
            y << t;
            const auto r = locate_container(p, y);
            CHECK(covers_deeply(p.parent, r, p.ell, y));
        }
    }

    SUBCASE("random probes succeed") {
        SplitMix rng(5);
        const auto p2 = standard_covering(Box::centered(2, 16.0), 2.0);
        for (int k = 0; k < 500; ++k) {
            Eigen::VectorXd y(2);
            y << rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0);
            CHECK_NOTHROW(locate_container(p2, y));
        }
    }
}

TEST_CASE("nested subcoverings") {
    const auto p = standard_covering(Box::centered(1, 11.0), 1.0);

    SUBCASE("n = 2 at the center gives side 27/7 and 5 centers") {
        Eigen::VectorXd y = Eigen::VectorXd::Zero(1);
        const auto q = nested_subcovering(p, y, 2);
        CHECK(q.parent.side == doctest::Approx(27.0 / 7.0).epsilon(1e-15));
        CHECK(q.count() == 5);
        CHECK(q.alpha == p.alpha);
        probe_plan(q, 0.1);
    }

    SUBCASE("sub-box equal to the parent reproduces the plan") {
        Eigen::VectorXd y = Eigen::VectorXd::Zero(1);
        const auto q = nested_subcovering(p, y, p.n);
        CHECK(q.parent.side == doctest::Approx(p.parent.side).epsilon(1e-12));
        CHECK(q.count() == p.count());
        CHECK((q.centers - p.centers).cwiseAbs().maxCoeff() < 1e-12);
    }

    SUBCASE("centers are exactly the parent centers inside the sub-box") {
        Eigen::VectorXd y(1);
        y << p.alpha * p.ell;  // lattice center next to the origin
        const auto q = nested_subcovering(p, y, 2);
        for (Eigen::Index i = 0; i < q.count(); ++i) {
            bool found = false;
            for (Eigen::Index j = 0; j < p.count(); ++j)
                if ((q.centers.col(i) - p.centers.col(j)).cwiseAbs().maxCoeff() < 1e-12) found = true;
            CHECK(found);
        }
    }

    SUBCASE("nesting composes") {
        Eigen::VectorXd y = Eigen::VectorXd::Zero(1);
        const auto big = nested_subcovering(p, y, 4);
        Eigen::VectorXd y2(1);
        y2 << p.alpha * p.ell;
        const auto via_big = nested_subcovering(big, y2, 2);
        const auto direct = nested_subcovering(p, y2, 2);
        CHECK(via_big.parent.side == doctest::Approx(direct.parent.side).epsilon(1e-12));
        CHECK((via_big.centers - direct.centers).cwiseAbs().maxCoeff() < 1e-12);
    }

    SUBCASE("sub-box escaping the parent is rejected") {
        Eigen::VectorXd y(1);
        y << 5.0;
        CHECK_THROWS_AS(nested_subcovering(p, y, 3), std::invalid_argument);
    }

    SUBCASE("off-lattice center is rejected") {
        Eigen::VectorXd y(1);
        y << 0.33;
        CHECK_THROWS_AS(nested_subcovering(p, y, 2), std::invalid_argument);
    }
}

TEST_CASE("scale ladder") {
    SUBCASE("defaults validate the full constraint set in d = 1 and d = 2") {
        for (int d : {1, 2}) {
            ScaleLadderOverrides ov;
            ov.min_level = 1.0;  // the analytic n1 pushes the last levels near 1
            const auto s = scale_ladder(100.0, d, ov);
            const double chain = static_cast<double>(d) / (d + s.p);
            CHECK(8.0 / 11.0 < chain);
            CHECK(chain < s.rho1);
            CHECK(s.rho1 < 0.75);
            CHECK(s.rho2 == doctest::Approx(std::pow(s.rho1, s.n1)));
            CHECK(s.p < d * (s.rho1 / 2.0 - s.rho2));
            CHECK(s.tau0 < s.rho2);
            // Levels strictly decreasing.
            for (size_t i = 1; i < s.levels.size(); ++i) CHECK(s.levels[i] < s.levels[i - 1]);
            CHECK(mass_floor_ok(s, 1.0));
            CHECK(!mass_floor_ok(s, std::pow(100.0, -s.rho2)));
        }
    }

    SUBCASE("rho1 = 0.8 violates the upper bound") {
        ScaleLadderOverrides ov;
        ov.rho1 = 0.8;
        CHECK_THROWS_WITH_AS(scale_ladder(100.0, 1, ov),
                             doctest::Contains("rho1 < 3/4"), std::invalid_argument);
    }

    SUBCASE("rho1 = 0.74 with p = 0.37 d admits no n1") {
        // The first chain holds: 8/11 < 1/1.37 < 0.74 < 3/4 ...
        CHECK(8.0 / 11.0 < 1.0 / 1.37);
        CHECK(1.0 / 1.37 < 0.74);
        // ... but rho1/2 equals p/d exactly, so the ladder cannot close.
        ScaleLadderOverrides ov;
        ov.rho1 = 0.74;
        CHECK_THROWS_WITH_AS(scale_ladder(100.0, 1, ov),
                             doctest::Contains("no n1 exists"), std::invalid_argument);
    }

    SUBCASE("inconsistent n1 override is reported") {
        ScaleLadderOverrides ov;
        ov.n1 = 2;  // rho2 = rho1^2 is far too large
        CHECK_THROWS_WITH_AS(scale_ladder(100.0, 1, ov),
                             doctest::Contains("p < d (rho1/2 - rho2)"), std::invalid_argument);
    }

    SUBCASE("levels below the minimum are an error") {
        CHECK_THROWS_WITH_AS(scale_ladder(100.0, 1, {}),
                             doctest::Contains("below the minimum"), std::invalid_argument);
    }
}
