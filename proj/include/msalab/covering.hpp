#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "msalab/geometry.hpp"

namespace msalab {

/// Standard ell-covering of a box: cells of side ell on the lattice
/// center + alpha ell Z^d with alpha = (L - ell)/(2 ell n) in (3/5, 4/5].
struct CoveringPlan {
    Box parent;
    double ell = 0.0;
    double alpha = 0.0;
    long n = 0;                 // alpha = (L - ell) / (2 ell n)
    long reach = 0;             // center lattice indices run -reach..reach
    Eigen::MatrixXd centers;    // d x count

    Eigen::Index count() const { return centers.cols(); }
    Box cell(Eigen::Index i) const { return Box(centers.col(i), ell); }
};

namespace detail {

inline std::vector<Eigen::VectorXd> lattice_points(const Eigen::VectorXd& origin, double step,
                                                   long reach, int d) {
    std::vector<Eigen::VectorXd> pts;
    std::vector<long> idx(static_cast<size_t>(d), -reach);
    for (;;) {
        Eigen::VectorXd c = origin;
        for (int i = 0; i < d; ++i) c[i] += step * static_cast<double>(idx[static_cast<size_t>(i)]);
        pts.push_back(c);
        int axis = 0;
        while (axis < d) {
            if (++idx[static_cast<size_t>(axis)] <= reach) break;
            idx[static_cast<size_t>(axis)] = -reach;
            ++axis;
        }
        if (axis == d) break;
    }
    return pts;
}

}  // namespace detail

/// Admissible overlap ratios for (L, ell): the n with
/// (L - ell)/(2 ell n) in (3/5, 4/5], smallest n first.
inline std::vector<long> admissible_covering_n(double L, double ell) {
    std::vector<long> out;
    const double q = (L - ell) / (2.0 * ell);
    const auto nlo = static_cast<long>(std::ceil(q / 0.8 - 1e-12));
    const auto nhi = static_cast<long>(std::floor(q / 0.6 - 1e-12));  // alpha > 3/5 strictly
    for (long n = std::max<long>(1, nlo); n <= nhi; ++n) {
        const double alpha = q / static_cast<double>(n);
        if (alpha > 0.6 && alpha <= 0.8 + 1e-15) out.push_back(n);
    }
    return out;
}

/// Nearest parent sides of the form (2 n alpha + 1) ell compatible with the
/// requested L; used both for the incompatible-scales error message and for
/// scale snapping.
inline double nearest_compatible_scale(double L, double ell) {
    double best = std::numeric_limits<double>::quiet_NaN();
    double best_gap = std::numeric_limits<double>::infinity();
    const auto nmax = static_cast<long>(std::ceil(L / ell)) + 2;
    for (long n = 1; n <= nmax; ++n) {
        // Admissible interval of L for this n: (ell(1 + 1.2 n), ell(1 + 1.6 n)].
        // The lower end sits at alpha = 3/5 exactly, which is excluded, so
        // snap strictly inside with a relative margin.
        const double lo = ell * (1.0 + 1.2 * static_cast<double>(n)) * (1.0 + 1e-9);
        const double hi = ell * (1.0 + 1.6 * static_cast<double>(n));
        const double candidate = std::clamp(L, lo, hi);
        const double gap = std::abs(candidate - L);
        if (gap < best_gap) {
            best_gap = gap;
            best = candidate;
        }
    }
    return best;
}

class IncompatibleScales : public std::invalid_argument {
  public:
    IncompatibleScales(double L, double ell, double nearest)
        : std::invalid_argument("standard_covering: no admissible overlap ratio for L = " +
                                std::to_string(L) + ", ell = " + std::to_string(ell) +
                                "; nearest compatible L is " + std::to_string(nearest)),
          nearest_compatible(nearest) {}
    double nearest_compatible;
};

/// Deep-containment test: the ell/5-neighborhood of y, clipped to the
/// parent, lies in the cell at r. This is the form of the covering's
/// boundary property that holds for every alpha <= 4/5 (tight at 4/5); see
/// README on the neighborhood radius.
inline bool covers_deeply(const Box& parent, const Eigen::VectorXd& r, double ell,
                          const Eigen::VectorXd& y) {
    const double half_nbhd = ell / 10.0;
    for (int i = 0; i < parent.dim(); ++i) {
        const double lo = std::max(y[i] - half_nbhd, parent.lo(i));
        const double hi = std::min(y[i] + half_nbhd, parent.hi(i));
        if (lo < r[i] - ell / 2.0 - Box::geom_tol() || hi > r[i] + ell / 2.0 + Box::geom_tol())
            return false;
    }
    return true;
}

namespace detail {

/// Exact per-axis verification of the four covering properties; throws on
/// the first violation (a violation is a construction bug).
inline void validate_plan(const CoveringPlan& p) {
    const double L = p.parent.side, ell = p.ell, a = p.alpha * p.ell;
    // Coverage: consecutive cells overlap and the extreme cell meets the face.
    if (!(a <= ell + Box::geom_tol()))
        throw std::logic_error("covering: cells fail to overlap");
    if (std::abs(static_cast<double>(p.n) * 2.0 * a + ell - L) > 1e-9 * L)
        throw std::logic_error("covering: extreme cells fail to reach the boundary");
    // Deep containment: worst interior point sits alpha ell / 2 from a center.
    if (!(a / 2.0 <= 2.0 * ell / 5.0 + Box::geom_tol()))
        throw std::logic_error("covering: deep containment fails (alpha > 4/5?)");
    // Core disjointness: lattice step at least 3 ell / 5.
    if (!(a >= 3.0 * ell / 5.0 - Box::geom_tol()))
        throw std::logic_error("covering: core disjointness fails (alpha < 3/5?)");
    // Cardinality.
    const double per_axis = 2.0 * static_cast<double>(p.reach) + 1.0;
    if (!(per_axis <= 2.0 * L / ell + Box::geom_tol()))
        throw std::logic_error("covering: cardinality bound violated");
}

}  // namespace detail

/// Builds the standard ell-covering with the smallest admissible n (largest
/// alpha, fewest centers); deterministic for fixed inputs.
inline CoveringPlan standard_covering(const Box& parent, double ell) {
    if (!(ell > 0.0 && ell < parent.side))
        throw std::invalid_argument("standard_covering: need 0 < ell < L");
    const auto ns = admissible_covering_n(parent.side, ell);
    if (ns.empty())
        throw IncompatibleScales(parent.side, ell, nearest_compatible_scale(parent.side, ell));
    CoveringPlan p;
    p.parent = parent;
    p.ell = ell;
    p.n = ns.front();
    p.alpha = (parent.side - ell) / (2.0 * ell * static_cast<double>(p.n));
    p.reach = p.n;
    const auto pts = detail::lattice_points(parent.center, p.alpha * ell, p.reach, parent.dim());
    p.centers.resize(parent.dim(), static_cast<Eigen::Index>(pts.size()));
    for (size_t i = 0; i < pts.size(); ++i) p.centers.col(static_cast<Eigen::Index>(i)) = pts[i];
    detail::validate_plan(p);
    return p;
}

/// Center whose cell deeply contains y's clipped neighborhood. Existence is
/// part of the covering construction; absence aborts.
inline Eigen::VectorXd locate_container(const CoveringPlan& p, const Eigen::VectorXd& y) {
    if (!p.parent.contains(y))
        throw std::invalid_argument("locate_container: point outside the parent box");
    std::optional<Eigen::Index> best;
    double best_margin = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < p.count(); ++i) {
        if (!covers_deeply(p.parent, p.centers.col(i), p.ell, y)) continue;
        // Prefer the cell with the largest clearance around y.
        const double margin = -(p.centers.col(i) - y).cwiseAbs().maxCoeff();
        if (margin > best_margin) {
            best_margin = margin;
            best = i;
        }
    }
    if (!best) throw std::logic_error("locate_container: no deeply containing cell (construction bug)");
    return p.centers.col(*best);
}

/// Induced plan on the sub-box Lambda_{(2 n alpha + 1) ell}(y) for a center
/// y on the plan's lattice; its centers are exactly the parent centers
/// inside the sub-box.
inline CoveringPlan nested_subcovering(const CoveringPlan& p, const Eigen::VectorXd& y, long n) {
    const double side = (2.0 * static_cast<double>(n) * p.alpha + 1.0) * p.ell;
    Box sub(y, side);
    if (!p.parent.contains_box(sub))
        throw std::invalid_argument("nested_subcovering: sub-box not contained in the parent");
    // y must sit on the center lattice.
    for (int i = 0; i < p.parent.dim(); ++i) {
        const double t = (y[i] - p.parent.center[i]) / (p.alpha * p.ell);
        if (std::abs(t - std::round(t)) > 1e-9)
            throw std::invalid_argument("nested_subcovering: y is not a lattice center");
    }
    CoveringPlan q;
    q.parent = sub;
    q.ell = p.ell;
    q.alpha = p.alpha;
    q.n = n;
    q.reach = n;
    const auto pts = detail::lattice_points(y, p.alpha * p.ell, n, p.parent.dim());
    q.centers.resize(p.parent.dim(), static_cast<Eigen::Index>(pts.size()));
    for (size_t i = 0; i < pts.size(); ++i) q.centers.col(static_cast<Eigen::Index>(i)) = pts[i];
    detail::validate_plan(q);
    return q;
}

/// Scale ladder constraints: 8/11 < d/(d+p) < rho1 < 3/4, rho2 = rho1^{n1},
/// p < d(rho1/2 - rho2), plus the mass floor m0 >= L0^{-tau0}, tau0 < rho2.
struct ScaleLadder {
    double L0 = 0.0;
    double p = 0.0;
    double rho1 = 0.0;
    double rho2 = 0.0;
    double tau0 = 0.0;
    int n1 = 0;
    std::vector<double> levels;  // L_n = ell1^{rho1^n}, n = 0..n1, descending

    double ell1() const { return levels.empty() ? 0.0 : levels.front(); }
};

struct ScaleLadderOverrides {
    std::optional<double> p, rho1, tau0;
    std::optional<int> n1;
    double min_level = 6.0;
};

inline ScaleLadder scale_ladder(double L0, int d, const ScaleLadderOverrides& ov = {}) {
    ScaleLadder s;
    s.L0 = L0;
    s.p = ov.p.value_or(0.37 * d);
    // Default slightly above 0.74: with p = 0.37 d the constraint
    // p < d (rho1/2 - rho2) forces rho1/2 > p/d.
    s.rho1 = ov.rho1.value_or(0.745);

    const double chain = static_cast<double>(d) / (d + s.p);
    if (!(8.0 / 11.0 < chain))
        throw std::invalid_argument("scale_ladder: violated 8/11 < d/(d+p); p too large");
    if (!(chain < s.rho1))
        throw std::invalid_argument("scale_ladder: violated d/(d+p) < rho1");
    if (!(s.rho1 < 0.75))
        throw std::invalid_argument("scale_ladder: violated rho1 < 3/4");

    if (ov.n1) {
        s.n1 = *ov.n1;
    } else {
        // Smallest n1 with rho1^{n1} < rho1/2 - p/d.
        const double gap = s.rho1 / 2.0 - s.p / d;
        if (!(gap > 0.0))
            throw std::invalid_argument("scale_ladder: violated p < d rho1/2; no n1 exists");
        s.n1 = static_cast<int>(std::ceil(std::log(gap) / std::log(s.rho1))) ;
        while (std::pow(s.rho1, s.n1) >= gap) ++s.n1;
    }
    s.rho2 = std::pow(s.rho1, s.n1);
    if (!(s.p < d * (s.rho1 / 2.0 - s.rho2)))
        throw std::invalid_argument("scale_ladder: violated p < d (rho1/2 - rho2)");
    s.tau0 = ov.tau0.value_or(s.rho2 / 2.0);
    if (!(s.tau0 < s.rho2))
        throw std::invalid_argument("scale_ladder: violated tau0 < rho2");

    const double ell1 = std::pow(L0, s.rho1);
    for (int n = 0; n <= s.n1; ++n) {
        const double level = std::pow(ell1, std::pow(s.rho1, n));
        if (level < ov.min_level)
            throw std::invalid_argument(
                "scale_ladder: level L_" + std::to_string(n) + " = " + std::to_string(level) +
                " below the minimum " + std::to_string(ov.min_level) +
                "; raise L0 or lower the minimum");
        s.levels.push_back(level);
    }
    return s;
}

/// m0 >= L0^{-tau0} check for a proposed initial mass.
inline bool mass_floor_ok(const ScaleLadder& s, double m0) {
    return m0 >= std::pow(s.L0, -s.tau0);
}

}  // namespace msalab
