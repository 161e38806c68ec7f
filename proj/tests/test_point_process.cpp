#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "msalab/point_process.hpp"

using namespace msalab;

namespace {

// Independent oracle for P{N >= k}: quadrature of the defining integral
// over [0, mu] of lambda^{k-1}/(k-1)! e^{-lambda} (Simpson).
double tail_quadrature(double mu, uint64_t k) {
    if (k == 0) return 1.0;
    const double lgk = std::lgamma(static_cast<double>(k));
    auto f = [&](double lam) {
        if (lam <= 0.0) return k == 1 ? std::exp(-lam) : 0.0;
        return std::exp((static_cast<double>(k) - 1.0) * std::log(lam) - lgk - lam);
    };
    const int n = 100000;
    const double h = mu / n;
    double s = f(0.0) + f(mu);
    for (int i = 1; i < n; ++i) s += f(i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

}  // namespace

TEST_CASE("degenerate box is rejected") {
    CHECK_THROWS_AS(Box::centered(1, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(PoissonParams(0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(PoissonParams(-2.0, 1), std::invalid_argument);
}

TEST_CASE("sample mean matches the Poisson mean") {
    const Box box = Box::centered(1, 10.0);
    const double rho = 2.0;  // mu = 20
    const int trials = 10000;
    double sum = 0.0;
    for (int t = 0; t < trials; ++t)
        sum += static_cast<double>(sample_poisson(box, PoissonParams(rho, 1000 + t)).size());
    const double mean = sum / trials;
    CHECK(std::abs(mean - 20.0) < 3.0 * std::sqrt(20.0 / trials));
}

TEST_CASE("empty-sample fraction matches e^{-mu} at mu = 1") {
    const Box box = Box::centered(1, 1.0);
    const int trials = 10000;
    int empties = 0;
    for (int t = 0; t < trials; ++t)
        empties += sample_poisson(box, PoissonParams(1.0, 77000 + t)).empty() ? 1 : 0;
    const double p = std::exp(-1.0);
    const double sigma = std::sqrt(p * (1.0 - p) / trials);
    CHECK(std::abs(static_cast<double>(empties) / trials - p) < 3.0 * sigma);
}

TEST_CASE("mean and variance within 4 sigma across mu regimes") {
    const int trials = 10000;
    for (double mu : {1.0, 5.0, 20.0, 100.0}) {  // 100 exercises the rejection sampler
        const Box box = Box::centered(1, mu);  // rho = 1
        double s1 = 0.0, s2 = 0.0;
        for (int t = 0; t < trials; ++t) {
            const auto n = static_cast<double>(sample_poisson(box, PoissonParams(1.0, 5000 + t)).size());
            s1 += n;
            s2 += n * n;
        }
        const double mean = s1 / trials;
        const double var = s2 / trials - mean * mean;
        CHECK(std::abs(mean - mu) < 4.0 * std::sqrt(mu / trials));
        CHECK(std::abs(var - mu) < 4.0 * std::sqrt(mu * (1.0 + 2.0 * mu) / trials));
    }
}

TEST_CASE("counts on disjoint boxes are uncorrelated") {
    const Box box = Box::centered(1, 10.0);
    const Box left(Eigen::VectorXd::Constant(1, -2.5), 5.0);
    const Box right(Eigen::VectorXd::Constant(1, 2.5), 5.0);
    const int trials = 10000;
    double sa = 0, sb = 0, sab = 0;
    for (int t = 0; t < trials; ++t) {
        const auto cfg = sample_poisson(box, PoissonParams(1.0, 31000 + t));
        const auto a = static_cast<double>(cfg.count_in(left));
        const auto b = static_cast<double>(cfg.count_in(right));
        sa += a;
        sb += b;
        sab += a * b;
    }
    const double cov = sab / trials - (sa / trials) * (sb / trials);
    CHECK(std::abs(cov) < 4.0 * std::sqrt(5.0 * 5.0 / trials));
}

TEST_CASE("identical seeds reproduce bit-identical configurations") {
    const Box box = Box::centered(2, 4.0);
    const auto a = sample_poisson(box, PoissonParams(3.0, 42));
    const auto b = sample_poisson(box, PoissonParams(3.0, 42));
    REQUIRE(a.size() == b.size());
    CHECK(a.points == b.points);
    const auto c = sample_poisson(box, PoissonParams(3.0, 43));
    CHECK(a.points != c.points);
}

TEST_CASE("marked process: marks are fair and independent of count") {
    const Box box = Box::centered(1, 4.0);
    const int trials = 10000;
    long ones = 0, total = 0;
    for (int t = 0; t < trials; ++t) {
        const auto m = sample_marked(box, 2.0, 91000 + t);
        total += m.size();
        for (auto b : m.marks) ones += b;
    }
    const double frac = static_cast<double>(ones) / static_cast<double>(total);
    const double sigma = 0.5 / std::sqrt(static_cast<double>(total));
    CHECK(std::abs(frac - 0.5) < 3.0 * sigma);
}

TEST_CASE("split counts add up on every sampled sub-box") {
    const Box box = Box::centered(2, 6.0);
    SplitMix rng(7);
    for (int t = 0; t < 200; ++t) {
        const auto m = sample_marked(box, 1.5, 52000 + t);
        const auto [x, xp] = split_marked(m);
        REQUIRE(x.size() + xp.size() == m.size());
        // Random sub-box per trial.
        Eigen::VectorXd c(2);
        c << rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0);
        const Box sub(c, rng.uniform(0.5, 2.0));
        CHECK(x.count_in(sub) + xp.count_in(sub) == m.as_configuration().count_in(sub));
    }
}

TEST_CASE("split_marked edge cases") {
    MarkedConfiguration m;
    m.points.resize(1, 0);

    SUBCASE("empty input") {
        const auto [x, xp] = split_marked(m);
        CHECK(x.empty());
        CHECK(xp.empty());
    }

    SUBCASE("all ones / all zeros / mixed") {
        m.points.resize(1, 5);
        m.points << 0.1, 0.2, 0.3, 0.4, 0.5;
        m.marks = {1, 1, 1, 1, 1};
        auto [x1, xp1] = split_marked(m);
        CHECK(x1.size() == 5);
        CHECK(xp1.size() == 0);

        m.marks = {0, 0, 0, 0, 0};
        auto [x2, xp2] = split_marked(m);
        CHECK(x2.size() == 0);
        CHECK(xp2.size() == 5);

        m.marks = {1, 0, 0, 1, 0};
        auto [x3, xp3] = split_marked(m);
        CHECK(x3.size() == 2);
        CHECK(xp3.size() == 3);
        for (Eigen::Index i = 0; i < x3.size(); ++i)
            for (Eigen::Index j = 0; j < xp3.size(); ++j)
                CHECK(x3.point(i) != xp3.point(j));
        // Disjoint union recovers the input point set exactly.
        std::vector<double> all;
        for (Eigen::Index i = 0; i < x3.size(); ++i) all.push_back(x3.point(i)[0]);
        for (Eigen::Index j = 0; j < xp3.size(); ++j) all.push_back(xp3.point(j)[0]);
        std::sort(all.begin(), all.end());
        std::vector<double> orig(m.points.data(), m.points.data() + 5);
        std::sort(orig.begin(), orig.end());
        CHECK(all == orig);
    }
}

TEST_CASE("exact tail: closed values and the quadrature oracle") {
    CHECK(poisson_tail_exact(1.0, 1) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-14));
    CHECK(poisson_tail_exact(0.0, 0) == 1.0);
    CHECK(poisson_tail_exact(17.3, 0) == 1.0);
    CHECK_THROWS_AS(poisson_tail_exact(-1.0, 2), std::invalid_argument);

    for (double mu : {0.5, 1.0, 2.0, 5.0, 10.0})
        for (uint64_t k : {1, 2, 3, 5, 8, 10})
            CHECK(poisson_tail_exact(mu, k) ==
                  doctest::Approx(tail_quadrature(mu, k)).epsilon(1e-9));
}

TEST_CASE("two-sided bracket mu^k e^{-mu}/k! < P{N >= k} < mu^k/k!") {
    for (double mu : {0.5, 1.0, 2.0, 5.0, 10.0}) {
        for (uint64_t k = 1; k <= 10; ++k) {
            const double tail = poisson_tail_exact(mu, k);
            const double logterm = static_cast<double>(k) * std::log(mu) -
                                   std::lgamma(static_cast<double>(k) + 1.0);
            CHECK(tail > std::exp(logterm - mu));
            CHECK(tail < std::exp(logterm));
        }
    }
}

TEST_CASE("overcount bound P{N >= a mu} < e^{-a mu}") {
    SUBCASE("asserted region") {
        const auto r = check_overcount_bound(1.0, 8.0);
        REQUIRE(r.asserted);
        CHECK(r.pass);
        CHECK(r.exact == doctest::Approx(1.02e-5).epsilon(0.02));
        CHECK(r.bound == doctest::Approx(std::exp(-8.0)).epsilon(1e-12));
        for (double mu : {0.5, 1.0, 2.0, 5.0, 10.0})
            for (double a : {7.5, 8.0, 10.0, 16.0, 25.0}) {
                const auto rr = check_overcount_bound(mu, a);
                REQUIRE(rr.asserted);
                CHECK(rr.pass);
            }
    }
    SUBCASE("precondition gate") {
        const auto r = check_overcount_bound(0.1, 8.0);  // e mu < 1
        CHECK(!r.asserted);
        const auto r2 = check_overcount_bound(1.0, 5.0);  // a < e^2
        CHECK(!r2.asserted);
    }
}

TEST_CASE("undercount bound P{N < k} < C_k e^{-mu/2}") {
    // The defining integral evaluates to 2^k; quadrature is the oracle.
    for (uint64_t k = 1; k <= 6; ++k)
        CHECK(poisson_undercount_constant(k) ==
              doctest::Approx(std::pow(2.0, static_cast<double>(k))).epsilon(1e-8));

    const auto r = check_undercount_bound(20.0, 1);
    REQUIRE(r.asserted);
    CHECK(r.exact == doctest::Approx(std::exp(-20.0)).epsilon(1e-10));
    CHECK(r.bound == doctest::Approx(2.0 * std::exp(-10.0)).epsilon(1e-8));
    CHECK(r.pass);
}

TEST_CASE("pairwise distinct points") {
    const Box box = Box::centered(2, 3.0);
    const auto cfg = sample_poisson(box, PoissonParams(4.0, 9));
    for (Eigen::Index i = 0; i < cfg.size(); ++i)
        for (Eigen::Index j = i + 1; j < cfg.size(); ++j)
            CHECK((cfg.point(i) - cfg.point(j)).cwiseAbs().maxCoeff() > 0.0);
}
