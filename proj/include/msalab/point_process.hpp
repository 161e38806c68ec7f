#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "msalab/geometry.hpp"
#include "msalab/random.hpp"

namespace msalab {

struct PoissonParams {
    double density = 1.0;  // points per unit volume
    uint64_t seed = 0;

    PoissonParams() = default;
    PoissonParams(double rho, uint64_t s) : density(rho), seed(s) {
        if (!(density > 0.0)) throw std::invalid_argument("PoissonParams: density must be > 0");
    }
};

namespace detail {

inline Eigen::VectorXd uniform_in_box(const Box& box, SplitMix& rng) {
    Eigen::VectorXd p(box.dim());
    for (int i = 0; i < box.dim(); ++i) p[i] = rng.uniform(box.lo(i), box.hi(i));
    return p;
}

inline bool has_duplicate(const Eigen::MatrixXd& pts, Eigen::Index upto, const Eigen::VectorXd& p) {
    for (Eigen::Index j = 0; j < upto; ++j)
        if ((pts.col(j) - p).cwiseAbs().maxCoeff() == 0.0) return true;
    return false;
}

/// Count ~ Poisson(rho |box|), then i.i.d. uniform placement. Exact
/// duplicates (an RNG-collision artifact) are redrawn.
inline Eigen::MatrixXd sample_points(const Box& box, double rho, SplitMix rng) {
    const double mu = rho * box.volume();
    const uint64_t n = rng.poisson(mu);
    Eigen::MatrixXd pts(box.dim(), static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        Eigen::VectorXd p = uniform_in_box(box, rng);
        while (has_duplicate(pts, i, p)) p = uniform_in_box(box, rng);
        pts.col(i) = p;
    }
    return pts;
}

}  // namespace detail

/// Homogeneous Poisson process restricted to `box`.
inline Configuration sample_poisson(const Box& box, const PoissonParams& params) {
    if (!(params.density > 0.0)) throw std::invalid_argument("sample_poisson: density must be > 0");
    if (!(box.side > 0.0)) throw std::invalid_argument("sample_poisson: zero-volume box");
    return Configuration(detail::sample_points(box, params.density, SplitMix(params.seed)));
}

/// Poisson process of intensity `density2` whose points carry i.i.d. fair
/// Bernoulli marks independent of the locations.
inline MarkedConfiguration sample_marked(const Box& box, double density2, uint64_t seed) {
    if (!(density2 > 0.0)) throw std::invalid_argument("sample_marked: density must be > 0");
    if (!(box.side > 0.0)) throw std::invalid_argument("sample_marked: zero-volume box");
    SplitMix rng(seed);
    MarkedConfiguration m;
    m.points = detail::sample_points(box, density2, rng.split(1));
    SplitMix marks = rng.split(2);
    m.marks.resize(static_cast<size_t>(m.points.cols()));
    for (auto& b : m.marks) b = marks.bernoulli() ? 1 : 0;
    return m;
}

/// P{N >= k} for N ~ Poisson(mu). Sums the small side of the CDF so the
/// result is accurate in both tails.
inline double poisson_tail_exact(double mu, uint64_t k) {
    if (!(mu >= 0.0)) throw std::invalid_argument("poisson_tail_exact: mean must be >= 0");
    if (k == 0) return 1.0;
    if (mu == 0.0) return 0.0;
    if (static_cast<double>(k) <= mu) {
        // Head sum: P{N < k}; the tail is >= 1/2 here so 1 - head is stable.
        double term = std::exp(-mu);
        double head = term;
        for (uint64_t j = 1; j < k; ++j) {
            term *= mu / static_cast<double>(j);
            head += term;
        }
        return 1.0 - head;
    }
    // Direct tail sum from j = k upward, first term in log space.
    double logt = -mu + static_cast<double>(k) * std::log(mu) - std::lgamma(static_cast<double>(k) + 1.0);
    double term = std::exp(logt);
    double tail = term;
    for (uint64_t j = k + 1;; ++j) {
        term *= mu / static_cast<double>(j);
        tail += term;
        if (term <= tail * 1e-18 || term < 1e-320) break;
    }
    return tail;
}

/// Normalizing constant of the undercount bound: integral over [0, inf) of
/// lambda^{k-1}/(k-1)! e^{-lambda/2}, evaluated by adaptive Simpson
/// quadrature (closed form is 2^k; the quadrature serves as the oracle).
inline double poisson_undercount_constant(uint64_t k) {
    if (k < 1) throw std::invalid_argument("poisson_undercount_constant: k must be >= 1");
    const double lgk = std::lgamma(static_cast<double>(k));
    auto f = [&](double lam) {
        if (lam <= 0.0) return k == 1 ? std::exp(-lam / 2.0) : 0.0;
        return std::exp((static_cast<double>(k) - 1.0) * std::log(lam) - lgk - lam / 2.0);
    };
    // Integrand decays like e^{-lambda/2}; truncate far past the mode.
    const double upper = 2.0 * static_cast<double>(k) + 120.0;
    const int n = 200000;  // Simpson on a fine uniform grid
    const double h = upper / n;
    double s = f(0.0) + f(upper);
    for (int i = 1; i < n; ++i) s += f(i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

/// One verified tail inequality: exact value, claimed bound, and whether the
/// inequality's validity conditions held at all.
struct DeviationReport {
    double exact = 0.0;
    double bound = 0.0;
    bool asserted = false;  // false: preconditions failed, bound not claimed
    bool pass = false;
};

/// Large-deviation check P{N >= a mu} < e^{-a mu}, valid for e mu > 1 and
/// a > e^2.
inline DeviationReport check_overcount_bound(double mu, double a) {
    DeviationReport r;
    const double e = std::exp(1.0);
    r.bound = std::exp(-a * mu);
    if (!(e * mu > 1.0 && a > e * e)) return r;  // not asserted
    r.asserted = true;
    const auto k = static_cast<uint64_t>(std::ceil(a * mu));
    r.exact = poisson_tail_exact(mu, k);
    r.pass = r.exact < r.bound;
    return r;
}

/// Undercount check P{N < k} < C_k e^{-mu/2} with C_k from quadrature.
inline DeviationReport check_undercount_bound(double mu, uint64_t k) {
    DeviationReport r;
    if (k < 1) return r;
    r.asserted = true;
    r.exact = 1.0 - poisson_tail_exact(mu, k);
    r.bound = poisson_undercount_constant(k) * std::exp(-mu / 2.0);
    r.pass = r.exact < r.bound;
    return r;
}

}  // namespace msalab
