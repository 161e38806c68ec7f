#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "msalab/geometry.hpp"

namespace msalab {

/// eta(L) = e^{-L^kappa}. The bookkeeping exponent kappa = 10^6 d used in
/// the underlying analysis underflows any floating format; the default here
/// is kappa = 1, which preserves eta's qualitative role (eta << e^{-L} scale
/// separation) at representable magnitudes.
inline double eta_of_scale(double L, double kappa = 1.0) {
    if (!(L > 1.0)) throw std::invalid_argument("eta_of_scale: requires L > 1");
    if (!(kappa > 0.0)) throw std::invalid_argument("eta_of_scale: requires kappa > 0");
    const double eta = std::exp(-std::pow(L, kappa));
    if (eta == 0.0)
        throw std::overflow_error("eta_of_scale: e^{-L^kappa} underflows; use a smaller kappa");
    return eta;
}

// Cell indices reach side/eta ~ e^L, far beyond 32 bits.
using SiteIndex = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

struct SiteIndexLess {
    bool operator()(const SiteIndex& a, const SiteIndex& b) const {
        for (int i = 0; i < a.size(); ++i) {
            if (a[i] != b[i]) return a[i] < b[i];
        }
        return false;
    }
};

using SiteSet = std::vector<SiteIndex>;  // kept sorted + unique

inline void normalize(SiteSet& s) {
    std::sort(s.begin(), s.end(), SiteIndexLess{});
    s.erase(std::unique(s.begin(), s.end(),
                        [](const SiteIndex& a, const SiteIndex& b) { return a == b; }),
            s.end());
}

inline bool contains_site(const SiteSet& s, const SiteIndex& j) {
    return std::binary_search(s.begin(), s.end(), j, SiteIndexLess{});
}

inline bool disjoint_sites(const SiteSet& a, const SiteSet& b) {
    for (const auto& j : a)
        if (contains_site(b, j)) return false;
    return true;
}

/// The cell lattice J_Lambda = { j in center + eta Z^d : cell(j) inside the
/// box }. Cells are addressed by integer multi-index; the site list is never
/// materialized (it has ~ (L/eta)^d entries).
class EtaGrid {
  public:
    EtaGrid(Box box, double eta) : box_(std::move(box)), eta_(eta) {
        if (!(eta_ > 0.0) || eta_ >= box_.side)
            throw std::invalid_argument("EtaGrid: need 0 < eta < box side");
        // Indices must stay resolvable in double arithmetic.
        if (box_.side / eta_ > 4e15)
            throw std::invalid_argument("EtaGrid: eta too small to index cells reliably");
        // Largest m with m*eta + eta/2 <= L/2, i.e. cell fully inside.
        max_index_ = static_cast<std::int64_t>(std::floor((box_.side / eta_ - 1.0) / 2.0 + Box::geom_tol()));
    }

    const Box& box() const { return box_; }
    double eta() const { return eta_; }
    std::int64_t max_index() const { return max_index_; }
    int dim() const { return box_.dim(); }
    double sites_per_axis() const { return 2.0 * static_cast<double>(max_index_) + 1.0; }

    Eigen::VectorXd site_center(const SiteIndex& j) const {
        Eigen::VectorXd c = box_.center;
        for (int i = 0; i < dim(); ++i) c[i] += eta_ * static_cast<double>(j[i]);
        return c;
    }

    bool in_lattice(const SiteIndex& j) const {
        for (int i = 0; i < j.size(); ++i)
            if (std::abs(j[i]) > max_index_) return false;
        return true;
    }

    /// Cell index of p, provided p lies strictly inside a lattice cell.
    /// Exact-face hits (measure zero) are reported as no-cell only while the
    /// index arithmetic can resolve them; at extreme surrogate eta the
    /// fractional position is quantized and points tie-break to the nearest
    /// cell instead of picking up spurious face hits.
    std::optional<SiteIndex> cell_of(const Eigen::Ref<const Eigen::VectorXd>& p) const {
        SiteIndex j(dim());
        for (int i = 0; i < dim(); ++i) {
            const double t = (p[i] - box_.center[i]) / eta_;
            const double r = std::round(t);
            const double quantum = std::abs(t) * std::numeric_limits<double>::epsilon();
            if (quantum < 1e-6 && std::abs(t - r) >= 0.5) return std::nullopt;  // on a face
            if (std::abs(r) > static_cast<double>(max_index_)) return std::nullopt;
            j[i] = static_cast<std::int64_t>(std::llround(r));
        }
        return j;
    }

    /// The strict condition carves an eta^2/2-wide strip off each cell face.
    /// Once that strip falls below the double resolution of positions in the
    /// box, arithmetic noise would dominate genuine hits (probability
    /// ~ rho L eta), so the strict and loose conditions are treated as equal.
    bool strict_band_resolvable() const {
        return eta_ * eta_ / 2.0 >= 64.0 * std::numeric_limits<double>::epsilon() * box_.side;
    }

    /// True iff p lies in the shrunken cell Lambda_{eta(1-eta)}(j); callers
    /// must gate on strict_band_resolvable().
    bool in_shrunk_cell(const Eigen::Ref<const Eigen::VectorXd>& p, const SiteIndex& j) const {
        const Eigen::VectorXd c = site_center(j);
        const double half = eta_ * (1.0 - eta_) / 2.0;
        for (int i = 0; i < dim(); ++i)
            if (std::abs(p[i] - c[i]) >= half) return false;
        return true;
    }

  private:
    Box box_;
    double eta_;
    std::int64_t max_index_;
};

/// Per-condition acceptability flags for one configuration on one grid.
struct AcceptabilityVerdict {
    bool total_ok = false;            // N_X(Lambda) < 16 rho L^d
    bool cell_ok = false;             // at most one point per cell
    bool strict_boundary_ok = false;  // no point outside the shrunken cells
    bool loose_boundary_ok = false;   // no point outside the full cells

    enum class Class { acceptable, acceptable_prime, neither };
    Class clazz = Class::neither;

    bool acceptable() const { return clazz == Class::acceptable; }
    bool acceptable_prime() const {
        return clazz == Class::acceptable || clazz == Class::acceptable_prime;
    }
};

inline AcceptabilityVerdict classify_acceptable(const Configuration& cfg, const EtaGrid& grid,
                                                double density) {
    AcceptabilityVerdict v;
    const double cap = 16.0 * density * std::pow(grid.box().side, grid.dim());
    Eigen::Index inside = 0;
    bool cell_ok = true, strict_ok = true, loose_ok = true;
    std::map<SiteIndex, int, SiteIndexLess> occupancy;
    for (Eigen::Index i = 0; i < cfg.size(); ++i) {
        const Eigen::VectorXd p = cfg.point(i);
        if (!grid.box().contains(p)) continue;
        ++inside;
        auto j = grid.cell_of(p);
        if (!j) {
            strict_ok = loose_ok = false;
            continue;
        }
        if (++occupancy[*j] > 1) cell_ok = false;
        if (grid.strict_band_resolvable() && !grid.in_shrunk_cell(p, *j)) strict_ok = false;
    }
    v.total_ok = static_cast<double>(inside) < cap;
    v.cell_ok = cell_ok;
    v.strict_boundary_ok = strict_ok;
    v.loose_boundary_ok = loose_ok;
    if (v.total_ok && v.cell_ok && v.strict_boundary_ok)
        v.clazz = AcceptabilityVerdict::Class::acceptable;
    else if (v.total_ok && v.cell_ok && v.loose_boundary_ok)
        v.clazz = AcceptabilityVerdict::Class::acceptable_prime;
    else
        v.clazz = AcceptabilityVerdict::Class::neither;
    return v;
}

/// Equivalence-class label of an acceptable' configuration: the set of
/// occupied cells (each carrying exactly one point).
struct OccupancyClass {
    SiteSet occupied;

    bool operator==(const OccupancyClass& o) const { return occupied == o.occupied; }
};

inline OccupancyClass occupancy_class(const Configuration& cfg, const EtaGrid& grid,
                                      double density) {
    const auto v = classify_acceptable(cfg, grid, density);
    if (!v.acceptable_prime())
        throw std::domain_error("occupancy_class: configuration is not acceptable'");
    OccupancyClass occ;
    for (Eigen::Index i = 0; i < cfg.size(); ++i) {
        if (!grid.box().contains(cfg.point(i))) continue;
        occ.occupied.push_back(*grid.cell_of(cfg.point(i)));
    }
    normalize(occ.occupied);
    return occ;
}

/// Canonical class representative: one point at each occupied cell center.
inline Configuration snap_representative(const OccupancyClass& occ, const EtaGrid& grid) {
    Eigen::MatrixXd pts(grid.dim(), static_cast<Eigen::Index>(occ.occupied.size()));
    for (size_t i = 0; i < occ.occupied.size(); ++i)
        pts.col(static_cast<Eigen::Index>(i)) = grid.site_center(occ.occupied[i]);
    return Configuration(std::move(pts));
}

/// Soft exponents standing in for the scale-independent "1-" and "d-".
struct DensityParams {
    double eps_scale = 0.05;  // sub-box side L^{1 - eps_scale}
    double eps_count = 0.05;  // required count L^{d - eps_count}
    double delta_plus = 1.0;  // margin removed from each sub-box

    DensityParams() = default;
    DensityParams(double e1, double e2, double dp = 1.0)
        : eps_scale(e1), eps_count(e2), delta_plus(dp) {
        if (!(eps_scale > 0.0 && eps_scale < 0.25 && eps_count > 0.0 && eps_count < 0.25))
            throw std::invalid_argument("DensityParams: exponents must lie in (0, 1/4)");
    }
};

/// Density condition for a site set S: every sub-box of side L^{1-eps1}
/// inside the box (enumerated on a half-step lattice, conservative up to one
/// lattice step) must hold at least L^{d-eps2} sites of S in its shrunken
/// core.
inline bool is_dense(const std::vector<Eigen::VectorXd>& sites, const Box& box,
                     const DensityParams& params) {
    const double L = box.side;
    const int d = box.dim();
    const double sub = std::pow(L, 1.0 - params.eps_scale);
    const double need = std::pow(L, static_cast<double>(d) - params.eps_count);
    if (sub >= L) return true;  // no sub-box fits strictly; vacuous
    const double core = sub - params.delta_plus;
    if (core <= 0.0) return true;  // shrunken core degenerate; vacuous
    const double step = sub / 2.0;

    // Center positions per axis: lo + sub/2 + k*step, plus the flush-right one.
    std::vector<double> axis_pos;
    {
        const double first = box.lo(0) - box.center[0] + sub / 2.0;
        const double last = box.hi(0) - box.center[0] - sub / 2.0;
        for (double c = first; c <= last + Box::geom_tol(); c += step) axis_pos.push_back(c);
        if (axis_pos.empty() || std::abs(axis_pos.back() - last) > Box::geom_tol())
            axis_pos.push_back(last);
    }

    std::vector<size_t> idx(static_cast<size_t>(d), 0);
    for (;;) {
        Eigen::VectorXd c = box.center;
        for (int i = 0; i < d; ++i) c[i] += axis_pos[idx[static_cast<size_t>(i)]];
        const Box core_box(c, core);
        Eigen::Index cnt = 0;
        for (const auto& s : sites)
            if (core_box.contains(s)) ++cnt;
        if (static_cast<double>(cnt) < need) return false;

        int axis = 0;
        while (axis < d) {
            if (++idx[static_cast<size_t>(axis)] < axis_pos.size()) break;
            idx[static_cast<size_t>(axis)] = 0;
            ++axis;
        }
        if (axis == d) break;
    }
    return true;
}

/// Basic event: disjoint site triples (B, B', S) prescribing cells occupied
/// by X, by X', and by free sites.
struct BEvent {
    SiteSet B, Bprime, S;

    BEvent() = default;
    BEvent(SiteSet b, SiteSet bp, SiteSet s, double count_cap)
        : B(std::move(b)), Bprime(std::move(bp)), S(std::move(s)) {
        normalize(B);
        normalize(Bprime);
        normalize(S);
        if (!disjoint_sites(B, Bprime) || !disjoint_sites(B, S) || !disjoint_sites(Bprime, S))
            throw std::invalid_argument("BEvent: B, B', S must be pairwise disjoint");
        const auto total = B.size() + Bprime.size() + S.size();
        if (count_cap > 0.0 && !(static_cast<double>(total) < count_cap))
            throw std::invalid_argument("BEvent: site count exceeds 16 rho L^d cap");
    }

    bool operator==(const BEvent& o) const { return B == o.B && Bprime == o.Bprime && S == o.S; }
};

namespace detail {

/// Parent sites whose cell lies in the fine cell Lambda_{eta_l}(a).
inline SiteSet parent_sites_in_cell(const EtaGrid& coarse, const SiteIndex& a,
                                    const EtaGrid& fine) {
    SiteSet out;
    const Eigen::VectorXd c = coarse.site_center(a);
    const double half = coarse.eta() / 2.0;
    const int d = fine.dim();
    std::vector<std::vector<std::int64_t>> axis_idx(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) {
        const double lo = c[i] - half, hi = c[i] + half;
        const long klo = static_cast<long>(std::ceil((lo - fine.box().center[i]) / fine.eta() - 0.5 + 1e-12));
        const long khi = static_cast<long>(std::floor((hi - fine.box().center[i]) / fine.eta() + 0.5 - 1e-12));
        for (long k = klo; k <= khi; ++k) {
            if (std::abs(k) > fine.max_index()) continue;
            const double pos = fine.box().center[i] + fine.eta() * static_cast<double>(k);
            if (pos > lo && pos < hi) axis_idx[static_cast<size_t>(i)].push_back(k);
        }
    }
    std::vector<size_t> cur(static_cast<size_t>(d), 0);
    for (const auto& ax : axis_idx)
        if (ax.empty()) return out;
    for (;;) {
        SiteIndex j(d);
        for (int i = 0; i < d; ++i) j[i] = axis_idx[static_cast<size_t>(i)][cur[static_cast<size_t>(i)]];
        out.push_back(j);
        int axis = 0;
        while (axis < d) {
            if (++cur[static_cast<size_t>(axis)] < axis_idx[static_cast<size_t>(axis)].size()) break;
            cur[static_cast<size_t>(axis)] = 0;
            ++axis;
        }
        if (axis == d) break;
    }
    normalize(out);
    return out;
}

inline void cartesian_assign(const std::vector<SiteSet>& choices, size_t pos, SiteSet& acc,
                             std::vector<SiteSet>& out) {
    if (pos == choices.size()) {
        SiteSet copy = acc;
        normalize(copy);
        out.push_back(std::move(copy));
        return;
    }
    for (const auto& site : choices[pos]) {
        acc.push_back(site);
        cartesian_assign(choices, pos + 1, acc, out);
        acc.pop_back();
    }
}

/// All parent-site sets realizing the occupancy pattern `cells` of the
/// coarse grid: one parent site per occupied coarse cell.
inline std::vector<SiteSet> realizations(const SiteSet& cells, const EtaGrid& coarse,
                                         const EtaGrid& fine) {
    std::vector<SiteSet> choices;
    for (const auto& a : cells) choices.push_back(parent_sites_in_cell(coarse, a, fine));
    std::vector<SiteSet> out;
    SiteSet acc;
    cartesian_assign(choices, 0, acc, out);
    return out;
}

}  // namespace detail

struct RebaseResult {
    std::vector<BEvent> events;
    /// Set when eta_L is not well below sqrt(eta_l) (factor-10 margin): the
    /// realization lists can then be ambiguous near coarse-cell faces.
    bool scale_separation_warning = false;
};

/// Rewrite a basic event posed on the eta_l grid of a sub-box as basic
/// events on the eta_L grid of the parent box (eta_L << eta_l). Exercised at
/// small occupancies only; the realization count is the product over
/// occupied cells of the parent cells they contain.
inline RebaseResult rebase_bevent(const BEvent& be, const EtaGrid& coarse, const EtaGrid& fine,
                                  double count_cap = 0.0) {
    if (!(fine.eta() < coarse.eta()))
        throw std::invalid_argument("rebase_bevent: parent grid must be finer (eta_L < eta_l)");
    RebaseResult res;
    res.scale_separation_warning = 10.0 * fine.eta() >= std::sqrt(coarse.eta());
    const auto bs = detail::realizations(be.B, coarse, fine);
    const auto bps = detail::realizations(be.Bprime, coarse, fine);
    const auto ss = detail::realizations(be.S, coarse, fine);
    for (const auto& b1 : bs)
        for (const auto& bp1 : bps)
            for (const auto& s1 : ss) res.events.emplace_back(b1, bp1, s1, count_cap);
    return res;
}

/// Monte Carlo failure bound for the acceptability event: the computable
/// right-hand side e^{-16 rho L^d} + 4 d rho (L^{d-1} + L^d) eta
/// + 2 rho^2 L^d eta^d.
inline double acceptability_failure_bound(double rho, double L, int d, double eta) {
    const double Ld = std::pow(L, d);
    return std::exp(-16.0 * rho * Ld) + 4.0 * d * rho * (std::pow(L, d - 1) + Ld) * eta +
           2.0 * rho * rho * Ld * std::pow(eta, d);
}

/// Grid exponent (at least 1) whose eta keeps the eta-dependent terms of the
/// acceptability failure bound below `tol` at this scale and density. High
/// densities need eta far below the default e^{-L} or cell collisions
/// dominate; the exponent is capped by index resolvability.
inline double kappa_for_density(double L, int d, double rho, double tol = 1e-6) {
    const double Ld = std::pow(L, d);
    const double strip = tol / (8.0 * d * rho * (std::pow(L, d - 1) + Ld));
    const double pair = std::pow(tol / (4.0 * rho * rho * Ld), 1.0 / d);
    const double eta_max = std::min(strip, pair);
    const double eta_floor = L / 4e15;  // EtaGrid resolvability limit
    if (eta_max < eta_floor)
        throw std::overflow_error(
            "kappa_for_density: density too high for a resolvable cell grid at this scale");
    if (eta_max >= std::exp(-L)) return 1.0;
    return std::log(std::log(1.0 / eta_max)) / std::log(L) * 1.0001;
}

}  // namespace msalab
