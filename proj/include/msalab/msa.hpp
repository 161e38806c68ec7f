#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "msalab/covering.hpp"
#include "msalab/initial_scale.hpp"
#include "msalab/lattice.hpp"
#include "msalab/point_process.hpp"

namespace msalab {

/// Thread count: MSALAB_THREADS, else the hardware concurrency.
inline unsigned msalab_threads() {
    if (const char* env = std::getenv("MSALAB_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<unsigned>(n);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

/// Index-parallel loop with deterministic work units; results must be
/// written to per-index slots.
inline void parallel_for(size_t count, const std::function<void(size_t)>& body) {
    const unsigned threads = std::min<unsigned>(msalab_threads(), static_cast<unsigned>(count ? count : 1));
    if (threads <= 1) {
        for (size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex err_mx;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mx);
                    if (!err) err = std::current_exception();
                    return;
                }
            }
        });
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

/// Induction constants with no canonical values; always reported alongside
/// results.
struct MsaConstants {
    int K1 = 8;
    int Kprime = 4;
    double C1 = 1.0;
    int corner_cap = 12;
    int n_samples = 32;

    int K2(int n1) const {
        return static_cast<int>(std::pow(2.0 * (Kprime - 1), std::max(1, n1)));
    }
};

struct TrialRecord {
    uint64_t seed = 0;
    double scale = 0.0;
    double energy = 0.0;
    bool acceptable = false;
    BoxVerdict goodness = BoxVerdict::bad;
    bool free_sites_dense = false;
    double resolvent_norm = 0.0;
    double fitted_mass = 0.0;  // from the decay samples of a good trial
    double wall_ms = 0.0;

    bool pass() const { return acceptable && goodness == BoxVerdict::good && free_sites_dense; }
};

struct ScaleEstimate {
    double L = 0.0;
    double energy = 0.0;
    double mass = 0.0;
    double rho = 0.0;
    int trials = 0;
    int n_acceptable = 0;
    int n_good = 0;
    int n_dense = 0;
    int n_pass = 0;
    double fraction = 0.0;
    double ci_low = 0.0, ci_high = 0.0;  // Wilson interval, 95%
    double target = 0.0;                 // 1 - L^{-p}
    double fitted_mass = 0.0;            // median over passing trials
    std::vector<TrialRecord> records;

    bool meets_target() const { return fraction >= target; }
};

namespace detail {

inline std::pair<double, double> wilson_interval(int pass, int n) {
    if (n == 0) return {0.0, 1.0};
    const double z = 1.959963984540054;
    const double phat = static_cast<double>(pass) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (phat + z2 / (2.0 * n)) / denom;
    const double half = z / denom * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n));
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

/// Least-squares slope of log(value) against distance over the recorded
/// decay samples; returns 0 when the range is too thin.
inline double fitted_mass_from_samples(const std::vector<DecaySample>& samples) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const auto& s : samples) {
        if (s.value <= 1e-300) continue;
        const double y = std::log(s.value);
        sx += s.distance;
        sy += y;
        sxx += s.distance * s.distance;
        sxy += s.distance * y;
        ++n;
    }
    if (n < 3) return 0.0;
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-12) return 0.0;
    return -(n * sxy - sx * sy) / denom;
}

}  // namespace detail

/// One Monte Carlo trial of the localizing-event pipeline: sample the marked
/// process at density 2 rho, gate on acceptability, classify the thinned
/// half for goodness, and test the mark-0 sites for density.
inline TrialRecord localizing_trial(const Box& box, double E, double m, double rho, uint64_t seed,
                                    const GoodnessConfig& gcfg, const DensityParams& dparams) {
    const auto t0 = std::chrono::steady_clock::now();
    TrialRecord rec;
    rec.seed = seed;
    rec.scale = box.side;
    rec.energy = E;

    const auto marked = sample_marked(box, 2.0 * rho, seed);
    const double eta = eta_of_scale(box.side, gcfg.kappa);
    const EtaGrid grid(box, eta);
    rec.acceptable = classify_acceptable(marked.as_configuration(), grid, rho).acceptable();
    if (rec.acceptable) {
        const auto [x, xprime] = split_marked(marked);
        GoodnessConfig sub = gcfg;
        sub.density = rho;
        sub.check_acceptability = false;  // inherited from the marked gate
        const auto rep = classify_good(box, x, E, m, sub);
        rec.goodness = rep.verdict;
        rec.resolvent_norm = rep.resolvent_norm;
        rec.fitted_mass = detail::fitted_mass_from_samples(rep.decay_samples);
        const auto occ = occupancy_class(xprime, grid, rho);
        std::vector<Eigen::VectorXd> sites;
        sites.reserve(occ.occupied.size());
        for (const auto& j : occ.occupied) sites.push_back(grid.site_center(j));
        rec.free_sites_dense = is_dense(sites, box, dparams);
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

/// Empirical localizing probability at one scale; trials run in parallel
/// and are reproducible from (seed, trial index) alone.
inline ScaleEstimate estimate_localizing_probability(const Box& box, double E, double m,
                                                     double rho, int trials, uint64_t seed,
                                                     double p, const GoodnessConfig& gcfg,
                                                     const DensityParams& dparams) {
    if (trials < 1) throw std::invalid_argument("estimate_localizing_probability: trials must be >= 1");
    ScaleEstimate est;
    est.L = box.side;
    est.energy = E;
    est.mass = m;
    est.rho = rho;
    est.trials = trials;
    est.target = 1.0 - std::pow(box.side, -p);
    est.records.resize(static_cast<size_t>(trials));

    SplitMix root(seed);
    const uint64_t scale_key = root.split(static_cast<uint64_t>(box.side * 1024.0)).next_u64();
    parallel_for(static_cast<size_t>(trials), [&](size_t t) {
        const uint64_t trial_seed = SplitMix(scale_key).split(t).next_u64();
        est.records[t] = localizing_trial(box, E, m, rho, trial_seed, gcfg, dparams);
    });

    std::vector<double> masses;
    for (const auto& r : est.records) {
        est.n_acceptable += r.acceptable;
        est.n_good += r.goodness == BoxVerdict::good;
        est.n_dense += r.free_sites_dense;
        est.n_pass += r.pass();
        if (r.pass() && r.fitted_mass > 0.0) masses.push_back(r.fitted_mass);
    }
    est.fraction = static_cast<double>(est.n_pass) / trials;
    std::tie(est.ci_low, est.ci_high) = detail::wilson_interval(est.n_pass, trials);
    if (!masses.empty()) {
        std::sort(masses.begin(), masses.end());
        est.fitted_mass = masses[masses.size() / 2];
    }
    return est;
}

struct WegnerEstimate {
    double L = 0.0;
    double energy = 0.0;
    double threshold = 0.0;
    int trials = 0;
    int n_acceptable = 0;
    int n_under = 0;       // acceptable and resolvent norm under the threshold
    double fraction = 0.0;  // n_under / n_acceptable
    double target = 0.0;

    bool meets_target() const { return fraction >= target; }
};

/// Fraction of acceptable samples whose finite-volume resolvent norm stays
/// under e^{C1 L^{4 rho1 / 3} log L}.
inline WegnerEstimate wegner_measure(const Box& box, double E, double rho, double C1, double rho1,
                                     int trials, uint64_t seed, double p,
                                     const GoodnessConfig& gcfg) {
    if (trials < 1) throw std::invalid_argument("wegner_measure: trials must be >= 1");
    WegnerEstimate est;
    est.L = box.side;
    est.energy = E;
    est.trials = trials;
    est.threshold = std::exp(C1 * std::pow(box.side, 4.0 * rho1 / 3.0) * std::log(box.side));
    est.target = 1.0 - std::pow(box.side, -p);

    std::vector<uint8_t> acceptable(static_cast<size_t>(trials), 0);
    std::vector<uint8_t> under(static_cast<size_t>(trials), 0);
    SplitMix root(seed);
    const uint64_t key = root.split(0x77u).split(static_cast<uint64_t>(box.side * 1024.0)).next_u64();
    parallel_for(static_cast<size_t>(trials), [&](size_t t) {
        const uint64_t trial_seed = SplitMix(key).split(t).next_u64();
        const auto marked = sample_marked(box, 2.0 * rho, trial_seed);
        const EtaGrid grid(box, eta_of_scale(box.side, gcfg.kappa));
        if (!classify_acceptable(marked.as_configuration(), grid, rho).acceptable()) return;
        acceptable[t] = 1;
        const auto [x, xprime] = split_marked(marked);
        const auto H = assemble(box, x, gcfg.profile, gcfg.h);
        const double norm = resolvent_norm(compute_spectrum(H, false), E);
        if (!is_blowup(norm) && norm < est.threshold) under[t] = 1;
    });
    for (int t = 0; t < trials; ++t) {
        est.n_acceptable += acceptable[static_cast<size_t>(t)];
        est.n_under += under[static_cast<size_t>(t)];
    }
    est.fraction = est.n_acceptable ? static_cast<double>(est.n_under) / est.n_acceptable : 0.0;
    return est;
}

/// Defect map of one box at scale ell1: probes not deeply covered by any
/// jgood ladder box, merged into 3 ell2 boxes around level-n1 covering
/// centers.
struct DefectMap {
    struct LevelData {
        double scale = 0.0;              // snapped cell side
        CoveringPlan plan;
        std::vector<BoxVerdict> verdicts;  // per covering center
    };
    std::vector<LevelData> levels;
    std::vector<Eigen::VectorXd> defect_centers;  // level-n1 centers, side 3 ell2 each
    int K2 = 0;
    bool notsobad = false;
};

/// Nearest cell side ell' <= requests compatible with the parent side.
inline double nearest_compatible_cell(double parent_side, double ell) {
    double best = ell;
    double best_gap = std::numeric_limits<double>::infinity();
    const auto nmax = static_cast<long>(std::ceil(parent_side / std::max(ell / 4.0, 1e-9))) + 2;
    for (long n = 1; n <= nmax; ++n) {
        // ell' ranges over [parent/(1 + 1.6 n), parent/(1 + 1.2 n)); the
        // upper end sits at alpha = 3/5 exactly, excluded, so stay strictly
        // inside with a relative margin.
        const double lo = parent_side / (1.0 + 1.6 * static_cast<double>(n));
        const double hi = parent_side / (1.0 + 1.2 * static_cast<double>(n)) * (1.0 - 1e-9);
        const double candidate = std::clamp(ell, lo, hi);
        const double gap = std::abs(candidate - ell);
        if (gap < best_gap) {
            best_gap = gap;
            best = candidate;
        }
    }
    return best;
}

inline DefectMap defect_classify(const Box& box, const Configuration& X, double E, double m,
                                 const std::vector<double>& ladder_levels, int K2,
                                 const GoodnessConfig& gcfg) {
    DefectMap map;
    map.K2 = K2;
    if (ladder_levels.empty()) throw std::invalid_argument("defect_classify: empty ladder");

    GoodnessConfig sub = gcfg;
    sub.check_acceptability = false;
    for (double level : ladder_levels) {
        DefectMap::LevelData data;
        data.scale = nearest_compatible_cell(box.side, level);
        data.plan = standard_covering(box, data.scale);
        data.verdicts.resize(static_cast<size_t>(data.plan.count()));
        for (Eigen::Index i = 0; i < data.plan.count(); ++i)
            data.verdicts[static_cast<size_t>(i)] =
                classify_good(data.plan.cell(i), X, E, m, sub).verdict;
        map.levels.push_back(std::move(data));
    }

    // Probe grid at a fifth of the finest level.
    const double ell2 = map.levels.back().scale;
    const double step = ell2 / 5.0;
    std::vector<Eigen::VectorXd> uncovered;
    std::vector<double> axis;
    for (double t = box.lo(0) + step / 2.0; t < box.hi(0); t += step) axis.push_back(t - box.center[0]);
    std::vector<size_t> idx(static_cast<size_t>(box.dim()), 0);
    for (;;) {
        Eigen::VectorXd x = box.center;
        for (int i = 0; i < box.dim(); ++i) x[i] += axis[idx[static_cast<size_t>(i)]];
        bool covered = false;
        for (const auto& lvl : map.levels) {
            for (Eigen::Index i = 0; i < lvl.plan.count() && !covered; ++i)
                covered = lvl.verdicts[static_cast<size_t>(i)] != BoxVerdict::bad &&
                          covers_deeply(box, lvl.plan.centers.col(i), lvl.scale, x);
            if (covered) break;
        }
        if (!covered) uncovered.push_back(x);
        int ax = 0;
        while (ax < box.dim()) {
            if (++idx[static_cast<size_t>(ax)] < axis.size()) break;
            idx[static_cast<size_t>(ax)] = 0;
            ++ax;
        }
        if (ax == box.dim()) break;
    }

    // Merge uncovered probes into 3 ell2 boxes around level-n1 centers.
    // Each probe maps to its deterministic container center, and the center
    // set is deduplicated, so the result does not depend on the probe
    // enumeration order.
    const auto& last = map.levels.back();
    std::vector<Eigen::VectorXd> centers;
    for (const auto& x : uncovered) {
        const Eigen::VectorXd c = locate_container(last.plan, x);
        bool seen = false;
        for (const auto& prev : centers)
            if ((prev - c).cwiseAbs().maxCoeff() < 1e-12) {
                seen = true;
                break;
            }
        if (!seen) centers.push_back(c);
    }
    std::sort(centers.begin(), centers.end(),
              [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
                  for (Eigen::Index i = 0; i < a.size(); ++i)
                      if (a[i] != b[i]) return a[i] < b[i];
                  return false;
              });
    map.defect_centers = std::move(centers);
    map.notsobad = static_cast<int>(map.defect_centers.size()) <= K2;
    return map;
}

struct MsaReport {
    std::vector<ScaleEstimate> scales;
    std::vector<WegnerEstimate> wegner;
    MsaConstants constants;
    double m0 = 0.0;
    double p = 0.0;
    bool all_meet_targets = false;
    bool wegner_meet_targets = false;
    bool mass_floor_held = false;  // fitted mass >= m0 / 2 at every scale
};

struct MsaRunConfig {
    int dimension = 1;
    std::vector<double> scales;        // ascending
    std::vector<double> rho_per_scale; // same size, or single entry reused
    double energy = 0.0;
    double mass = 0.0;          // m0
    double p = 0.37;
    double rho1 = 0.745;
    int trials = 100;
    int wegner_trials = 0;      // 0: reuse `trials`
    uint64_t seed = 1;
    GoodnessConfig goodness;
    bool auto_kappa = false;    // pick kappa per (scale, density)
    DensityParams density_params;
    MsaConstants constants;
};

/// Full Monte Carlo sweep over the ladder: localizing fraction and Wegner
/// fraction per scale against the 1 - L^{-p} targets plus the m0/2 mass
/// floor.
inline MsaReport run_msa(const MsaRunConfig& cfg) {
    if (cfg.scales.empty()) throw std::invalid_argument("run_msa: no scales");
    if (!(cfg.mass > 0.0)) throw std::invalid_argument("run_msa: mass must be positive");
    MsaReport report;
    report.constants = cfg.constants;
    report.m0 = cfg.mass;
    report.p = cfg.p;
    report.all_meet_targets = true;
    report.wegner_meet_targets = true;
    report.mass_floor_held = true;

    for (size_t i = 0; i < cfg.scales.size(); ++i) {
        const double L = cfg.scales[i];
        const double rho = cfg.rho_per_scale.size() == 1 ? cfg.rho_per_scale[0]
                                                         : cfg.rho_per_scale.at(i);
        const Box box = Box::centered(cfg.dimension, L);
        GoodnessConfig gcfg = cfg.goodness;
        gcfg.density = rho;
        if (cfg.auto_kappa) gcfg.kappa = kappa_for_density(L, cfg.dimension, rho);
        auto est = estimate_localizing_probability(box, cfg.energy, cfg.mass, rho, cfg.trials,
                                                   cfg.seed, cfg.p, gcfg, cfg.density_params);
        report.all_meet_targets = report.all_meet_targets && est.meets_target();
        if (est.fitted_mass > 0.0 && est.fitted_mass < cfg.mass / 2.0)
            report.mass_floor_held = false;
        const int wt = cfg.wegner_trials > 0 ? cfg.wegner_trials : cfg.trials;
        auto weg = wegner_measure(box, cfg.energy, rho, cfg.constants.C1, cfg.rho1, wt, cfg.seed,
                                  cfg.p, gcfg);
        report.wegner_meet_targets = report.wegner_meet_targets && weg.meets_target();
        report.scales.push_back(std::move(est));
        report.wegner.push_back(weg);
    }
    return report;
}

}  // namespace msalab
