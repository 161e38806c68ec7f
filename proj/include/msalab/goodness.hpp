#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "msalab/lattice.hpp"
#include "msalab/random.hpp"
#include "msalab/spectrum.hpp"

namespace msalab {

/// Thresholds and probe policy for good-box classification.
struct GoodnessConfig {
    double eps1 = 0.05;        // resolvent threshold e^{L^{1-eps1}}
    double kappa = 1.0;        // eta(L) = e^{-L^kappa}
    double h = 0.125;          // grid spacing
    SingleSiteProfile profile; // single-site potential
    double density = 1.0;      // rho, for the acceptability cap
    double window_side = 1.0;
    double full_pair_max_scale = 24.0;  // full pair enumeration up to this L
    int sampled_pairs = 256;            // random pair budget beyond
    uint64_t probe_seed = 0x9d5ab1ull;
    bool check_acceptability = true;

    double resolvent_threshold(double L) const { return std::exp(std::pow(L, 1.0 - eps1)); }

    /// Grid spacing fitted to an arbitrary box side: the closest spacing to
    /// `h` that divides the side evenly (never coarser than delta_-/4).
    double fitted_h(double side) const {
        const double cells = std::max(2.0, std::round(side / h));
        double fit = side / cells;
        while (fit > profile.delta_minus / 4.0) fit = side / std::ceil(side / fit + 1.0);
        return fit;
    }
};

enum class BoxVerdict { good, jgood, bad };

inline const char* to_string(BoxVerdict v) {
    switch (v) {
        case BoxVerdict::good: return "good";
        case BoxVerdict::jgood: return "jgood";
        default: return "bad";
    }
}

struct DecaySample {
    Eigen::VectorXd x, y;
    double distance = 0.0;
    double value = 0.0;  // || chi_x R(E) chi_y ||
};

struct GoodnessReport {
    double energy = 0.0;
    double mass = 0.0;
    double resolvent_norm = 0.0;
    double resolvent_threshold = 0.0;
    std::vector<DecaySample> decay_samples;
    BoxVerdict verdict = BoxVerdict::bad;
    double jgood_slack = 0.0;  // eta^{1/4}

    /// Worst margin of the decay samples: max over samples of
    /// value / e^{-m |x-y|} (<= 1 means strictly good decay).
    double decay_margin = 0.0;
};

/// Unit-window probe centers: integer lattice points whose window sits
/// inside the box.
inline std::vector<Eigen::VectorXd> probe_centers(const Box& box, double window_side = 1.0) {
    std::vector<Eigen::VectorXd> out;
    const int d = box.dim();
    const auto reach = static_cast<long>(std::floor((box.side - window_side) / 2.0 + Box::geom_tol()));
    if (reach < 0) return out;
    std::vector<long> idx(static_cast<size_t>(d), -reach);
    for (;;) {
        Eigen::VectorXd c = box.center;
        for (int i = 0; i < d; ++i) c[i] += static_cast<double>(idx[static_cast<size_t>(i)]);
        out.push_back(c);
        int axis = 0;
        while (axis < d) {
            if (++idx[static_cast<size_t>(axis)] <= reach) break;
            idx[static_cast<size_t>(axis)] = -reach;
            ++axis;
        }
        if (axis == d) break;
    }
    return out;
}

namespace detail {

inline std::vector<std::pair<size_t, size_t>> probe_pairs(const std::vector<Eigen::VectorXd>& c,
                                                          double min_dist, double L,
                                                          const GoodnessConfig& cfg) {
    std::vector<std::pair<size_t, size_t>> all;
    for (size_t i = 0; i < c.size(); ++i)
        for (size_t j = i + 1; j < c.size(); ++j)
            if ((c[i] - c[j]).norm() >= min_dist) all.emplace_back(i, j);
    if (L <= cfg.full_pair_max_scale || all.size() <= static_cast<size_t>(cfg.sampled_pairs))
        return all;
    SplitMix rng(cfg.probe_seed);
    std::vector<std::pair<size_t, size_t>> picked;
    picked.reserve(static_cast<size_t>(cfg.sampled_pairs));
    for (int k = 0; k < cfg.sampled_pairs; ++k)
        picked.push_back(all[static_cast<size_t>(rng.uniform01() * static_cast<double>(all.size()))]);
    return picked;
}

}  // namespace detail

/// (X, E, m)-goodness of a box: resolvent norm under e^{L^{1-}} and window
/// kernel decay e^{-m|x-y|} for probe pairs |x-y| >= L/10. The jgood verdict
/// applies the eta^{1/4} slack from the move-point lemma (multiplicative on
/// the norm, additive on the kernel).
inline GoodnessReport classify_good(const Box& box, const Configuration& X, double E, double m,
                                    const GoodnessConfig& cfg) {
    const double L = box.side;
    const double eta = eta_of_scale(L, cfg.kappa);
    if (cfg.check_acceptability) {
        EtaGrid grid(box, eta);
        if (!classify_acceptable(X, grid, cfg.density).acceptable_prime())
            throw std::domain_error("classify_good: configuration is not acceptable'");
    }

    GoodnessReport rep;
    rep.energy = E;
    rep.mass = m;
    rep.jgood_slack = std::pow(eta, 0.25);
    rep.resolvent_threshold = cfg.resolvent_threshold(L);

    const DiscreteHamiltonian H = assemble(box, X, cfg.profile, cfg.fitted_h(L));
    const Spectrum spec = compute_spectrum(H);
    rep.resolvent_norm = resolvent_norm(spec, E);
    if (is_blowup(rep.resolvent_norm)) {
        rep.verdict = BoxVerdict::bad;
        return rep;
    }

    const bool norm_good = rep.resolvent_norm <= rep.resolvent_threshold;
    const bool norm_jgood = rep.resolvent_norm <= rep.resolvent_threshold * std::exp(rep.jgood_slack);

    const auto centers = probe_centers(box, cfg.window_side);
    const auto pairs = detail::probe_pairs(centers, L / 10.0, L, cfg);
    ResolventWindows rw(H, spec, E);
    bool decay_good = true, decay_jgood = true;
    for (const auto& [i, j] : pairs) {
        DecaySample s;
        s.x = centers[i];
        s.y = centers[j];
        s.distance = (s.x - s.y).norm();
        s.value = rw.block_norm(s.x, s.y, cfg.window_side);
        const double target = std::exp(-m * s.distance);
        rep.decay_margin = std::max(rep.decay_margin, s.value / target);
        if (s.value > target) decay_good = false;
        if (s.value > target + rep.jgood_slack) decay_jgood = false;
        rep.decay_samples.push_back(std::move(s));
    }

    if (norm_good && decay_good) rep.verdict = BoxVerdict::good;
    else if (norm_jgood && decay_jgood) rep.verdict = BoxVerdict::jgood;
    else rep.verdict = BoxVerdict::bad;
    return rep;
}

/// Evidence gathered for the free-site family H_{B,(S,t_S)} over t draws.
struct FreeSiteReport {
    bool exhaustive = false;  // all 2^|S| corners checked
    bool all_good = true;
    bool all_jgood = true;
    std::vector<std::pair<Eigen::VectorXd, BoxVerdict>> evidence;

    BoxVerdict verdict() const {
        if (all_good) return BoxVerdict::good;
        if (all_jgood) return BoxVerdict::jgood;
        return BoxVerdict::bad;
    }
};

/// Free-site classification: the universal quantifier over t in [0,1]^S is
/// checked on all corners when |S| <= corner_cap and on uniform interior
/// draws (plus both extreme corners) otherwise. A passing verdict is
/// evidence, not proof, and is labelled sampled via `exhaustive`.
inline FreeSiteReport classify_free_good(const Box& box, const Configuration& B,
                                         const Configuration& S, double E, double m,
                                         const GoodnessConfig& cfg, int corner_cap = 12,
                                         int n_samples = 32) {
    if (detail::share_a_point(B, S))
        throw std::invalid_argument("classify_free_good: B and S must be disjoint");
    FreeSiteReport rep;
    const auto ns = S.size();

    auto check = [&](const Eigen::VectorXd& t) {
        Configuration x = B;
        std::vector<Eigen::VectorXd> extra;
        Eigen::VectorXd tsub;
        // Points with t == 1 join X exactly; fractional t stay as coefficients.
        std::vector<Eigen::VectorXd> frac_pts;
        std::vector<double> frac_t;
        for (Eigen::Index i = 0; i < ns; ++i) {
            if (t[i] == 1.0) extra.push_back(S.point(i));
            else if (t[i] > 0.0) {
                frac_pts.push_back(S.point(i));
                frac_t.push_back(t[i]);
            }
        }
        Configuration merged = merge(x, make_configuration(extra, box.dim()));
        Configuration yfrac = make_configuration(frac_pts, box.dim());
        Eigen::VectorXd tv(static_cast<Eigen::Index>(frac_t.size()));
        for (size_t i = 0; i < frac_t.size(); ++i) tv[static_cast<Eigen::Index>(i)] = frac_t[i];

        GoodnessConfig sub = cfg;
        sub.check_acceptability = false;
        const double L = box.side;
        const double eta = eta_of_scale(L, cfg.kappa);
        const DiscreteHamiltonian H =
            assemble(box, merged, yfrac, tv, cfg.profile, cfg.fitted_h(box.side));
        const Spectrum spec = compute_spectrum(H);
        const double rnorm = resolvent_norm(spec, E);

        BoxVerdict v = BoxVerdict::bad;
        const double slack = std::pow(eta, 0.25);
        if (!is_blowup(rnorm)) {
            const bool ng = rnorm <= sub.resolvent_threshold(L);
            const bool nj = rnorm <= sub.resolvent_threshold(L) * std::exp(slack);
            const auto centers = probe_centers(box, cfg.window_side);
            const auto pairs = detail::probe_pairs(centers, L / 10.0, L, cfg);
            ResolventWindows rw(H, spec, E);
            bool dg = true, dj = true;
            for (const auto& [i, j] : pairs) {
                const double dist = (centers[i] - centers[j]).norm();
                const double val = rw.block_norm(centers[i], centers[j], cfg.window_side);
                const double target = std::exp(-m * dist);
                if (val > target) dg = false;
                if (val > target + slack) dj = false;
            }
            if (ng && dg) v = BoxVerdict::good;
            else if (nj && dj) v = BoxVerdict::jgood;
        }
        rep.evidence.emplace_back(t, v);
        rep.all_good = rep.all_good && v == BoxVerdict::good;
        rep.all_jgood = rep.all_jgood && v != BoxVerdict::bad;
    };

    if (ns <= corner_cap) {
        rep.exhaustive = true;
        const auto combos = uint64_t{1} << ns;
        for (uint64_t mask = 0; mask < combos; ++mask) {
            Eigen::VectorXd t(ns);
            for (Eigen::Index i = 0; i < ns; ++i) t[i] = (mask >> i) & 1 ? 1.0 : 0.0;
            check(t);
        }
    } else {
        rep.exhaustive = false;
        check(Eigen::VectorXd::Zero(ns));
        check(Eigen::VectorXd::Ones(ns));
        SplitMix rng(cfg.probe_seed ^ 0xfeedull);
        for (int k = 0; k < n_samples; ++k) {
            Eigen::VectorXd t(ns);
            for (Eigen::Index i = 0; i < ns; ++i) t[i] = rng.uniform01();
            check(t);
        }
    }
    return rep;
}

enum class MoveRegime { resolvent_bounded, near_spectrum };

struct MovePointReport {
    double eta = 0.0;
    double displacement = 0.0;
    // Resolvent-bounded regime: ||R'|| <= e^{sqrt(eta)} gamma plus the kernel
    // perturbation bound.
    double norm_before = 0.0, norm_after = 0.0, permitted_norm = 0.0;
    bool norm_ok = false;
    double kernel_max_excess = 0.0;  // max (after - before)/(sqrt(eta) gamma)
    bool kernel_ok = false;
    // Near-spectrum regime: dist(E, spec) <= e^{sqrt(eta)} / beta.
    double dist_before = 0.0, dist_after = 0.0, permitted_dist = 0.0;
    bool dist_ok = false;
};

/// Admissible displacement for the move-point lemma at level gamma (or
/// beta): eta = min{ (4 sqrt(1+E) ||w||_inf level)^{-2}, 1/4 }.
inline double move_point_eta(double E, const SingleSiteProfile& w, double level) {
    const double a = 4.0 * std::sqrt(1.0 + E) * w.sup_norm() * level;
    return std::min(1.0 / (a * a), 0.25);
}

/// Verify the move-point bounds for one displaced impurity on top of a
/// fixed background configuration.
inline MovePointReport move_point_check(const Box& box, const Configuration& background,
                                        const Eigen::VectorXd& zeta,
                                        const Eigen::VectorXd& zeta_prime, double E,
                                        const SingleSiteProfile& w, double h,
                                        MoveRegime regime, double level) {
    const double min_level = regime == MoveRegime::resolvent_bounded ? 1.0 : 2.0;
    if (!(level >= min_level))
        throw std::invalid_argument("move_point_check: level below the regime minimum");
    // Both shifted supports must stay inside the box.
    for (const auto* z : {&zeta, &zeta_prime})
        if (!box.contains_box(Box(*z, w.delta_plus)))
            throw std::invalid_argument("move_point_check: shifted support leaves the box");

    MovePointReport rep;
    rep.eta = move_point_eta(E, w, level);
    rep.displacement = (zeta_prime - zeta).norm();
    if (rep.displacement > rep.eta)
        throw std::invalid_argument("move_point_check: displacement exceeds the admissible eta");

    auto one_point = [&](const Eigen::VectorXd& z) {
        std::vector<Eigen::VectorXd> v{z};
        return merge(background, make_configuration(v, box.dim()));
    };
    const DiscreteHamiltonian H0 = assemble(box, one_point(zeta), w, h);
    const DiscreteHamiltonian H1 = assemble(box, one_point(zeta_prime), w, h);
    const Spectrum s0 = compute_spectrum(H0);
    const Spectrum s1 = compute_spectrum(H1);

    rep.norm_before = resolvent_norm(s0, E);
    rep.norm_after = resolvent_norm(s1, E);
    const double se = std::sqrt(rep.eta);

    if (regime == MoveRegime::resolvent_bounded) {
        rep.permitted_norm = std::exp(se) * level;
        rep.norm_ok = rep.norm_after <= rep.permitted_norm;
        ResolventWindows r0(H0, s0, E), r1(H1, s1, E);
        const auto centers = probe_centers(box);
        bool ok = true;
        for (size_t i = 0; i < centers.size(); ++i)
            for (size_t j = i; j < centers.size(); ++j) {
                const double before = r0.block_norm(centers[i], centers[j]);
                const double after = r1.block_norm(centers[i], centers[j]);
                const double excess = (after - before) / (se * level);
                rep.kernel_max_excess = std::max(rep.kernel_max_excess, excess);
                if (after > before + se * level) ok = false;
            }
        rep.kernel_ok = ok;
    } else {
        rep.dist_before = 1.0 / rep.norm_before;
        rep.dist_after = 1.0 / rep.norm_after;
        rep.permitted_dist = std::exp(se) / level;
        rep.dist_ok = rep.dist_after <= rep.permitted_dist;
    }
    return rep;
}

/// Combes-Thomas kernel bound below a spectral gap of at least 2 E0:
/// 2 E0^{-1} e^{-sqrt(E0) r} for r >= 4 sqrt(d).
inline double combes_thomas_bound(double E0, double r) {
    return 2.0 / E0 * std::exp(-std::sqrt(E0) * r);
}

/// Sliding average of the potential over Lambda_{6 delta0}(y), evaluated on
/// the grid nodes; exact box-overlap integral for indicator profiles.
inline double averaged_potential_min(const GridGeometry& g, const Configuration& X,
                                     const SingleSiteProfile& u, double delta0) {
    if (u.shape != SingleSiteProfile::Shape::indicator)
        throw std::invalid_argument("averaged_potential_min: indicator profiles only");
    const double w = 6.0 * delta0;
    const double norm = std::pow(w, g.dim());
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index f = 0; f < g.size(); ++f) {
        const Eigen::VectorXd y = g.node(f);
        double acc = 0.0;
        for (Eigen::Index i = 0; i < X.size(); ++i) {
            double overlap = 1.0;
            for (int ax = 0; ax < g.dim(); ++ax) {
                const double lo = std::max(X.points(ax, i) - u.delta_plus / 2.0, y[ax] - w / 2.0);
                const double hi = std::min(X.points(ax, i) + u.delta_plus / 2.0, y[ax] + w / 2.0);
                overlap *= std::max(0.0, hi - lo);
            }
            acc += overlap;
        }
        best = std::min(best, u.u_plus * acc / norm);
    }
    return best;
}

}  // namespace msalab
