#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace msalab {

/// Counter-based RNG (splitmix64 core). Output i depends only on (key, i),
/// so streams can be split per (trial, box) and evaluated in any order with
/// identical results. All arithmetic is 64-bit integer plus one double
/// division, hence bit-reproducible across runs.
class SplitMix {
  public:
    explicit SplitMix(uint64_t key = 0) : key_(key) {}

    /// Independent child stream labelled by `label`.
    SplitMix split(uint64_t label) const { return SplitMix(mix(key_ ^ mix(label + kGamma))); }

    uint64_t next_u64() { return mix(key_ + (++ctr_) * kGamma); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    bool bernoulli(double p = 0.5) { return uniform01() < p; }

    /// Exact Poisson sample: CDF inversion for small mean, transformed
    /// rejection (Hormann's PTRS) for large mean.
    uint64_t poisson(double mu) {
        if (!(mu >= 0.0)) throw std::invalid_argument("poisson: mean must be >= 0");
        if (mu == 0.0) return 0;
        return mu <= 30.0 ? poisson_inversion(mu) : poisson_ptrs(mu);
    }

  private:
    static constexpr uint64_t kGamma = 0x9e3779b97f4a7c15ull;

    static uint64_t mix(uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    uint64_t poisson_inversion(double mu) {
        double p = std::exp(-mu);
        double cdf = p;
        double u = uniform01();
        uint64_t k = 0;
        while (u > cdf) {
            ++k;
            p *= mu / static_cast<double>(k);
            cdf += p;
            if (p < 1e-300 && k > mu) break;  // u in the far tail round-off
        }
        return k;
    }

    uint64_t poisson_ptrs(double mu) {
        const double slam = std::sqrt(mu);
        const double loglam = std::log(mu);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double v_r = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            double u = uniform01() - 0.5;
            double v = uniform01();
            double us = 0.5 - std::abs(u);
            double kf = std::floor((2.0 * a / us + b) * u + mu + 0.43);
            if (us >= 0.07 && v <= v_r) return static_cast<uint64_t>(kf);
            if (kf < 0.0 || (us < 0.013 && v > us)) continue;
            double lhs = std::log(v * inv_alpha / (a / (us * us) + b));
            double rhs = kf * loglam - mu - std::lgamma(kf + 1.0);
            if (lhs <= rhs) return static_cast<uint64_t>(kf);
        }
    }

    uint64_t key_ = 0;
    uint64_t ctr_ = 0;
};

}  // namespace msalab
