#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <optional>
#include <vector>

#include "msalab/goodness.hpp"
#include "msalab/spectrum.hpp"

namespace msalab {

/// Partition of the grid nodes into unit windows at integer offsets from
/// the box center (nearest-integer binning, so every node belongs to
/// exactly one window). All measurement-side window norms use this
/// partition; it makes sum_x ||chi_x psi||^2 = ||psi||^2 exact.
class WindowPartition {
  public:
    explicit WindowPartition(const GridGeometry& g) : grid_(&g) {
        std::map<std::vector<long>, size_t> index;
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            const Eigen::VectorXd rel = g.node(i) - g.box().center;
            std::vector<long> key(static_cast<size_t>(g.dim()));
            for (int ax = 0; ax < g.dim(); ++ax)
                key[static_cast<size_t>(ax)] = std::lround(rel[ax]);
            auto [it, inserted] = index.try_emplace(key, windows_.size());
            if (inserted) {
                Window w;
                w.center = g.box().center;
                for (int ax = 0; ax < g.dim(); ++ax)
                    w.center[ax] += static_cast<double>(key[static_cast<size_t>(ax)]);
                windows_.push_back(std::move(w));
            }
            windows_[it->second].nodes.push_back(i);
        }
    }

    size_t count() const { return windows_.size(); }
    const Eigen::VectorXd& center(size_t i) const { return windows_[i].center; }
    const std::vector<Eigen::Index>& nodes(size_t i) const { return windows_[i].nodes; }

    double norm(size_t i, const Eigen::Ref<const Eigen::VectorXd>& psi) const {
        double s = 0.0;
        for (auto n : windows_[i].nodes) s += psi[n] * psi[n];
        return std::sqrt(s);
    }

    /// Index of the window holding the box center.
    size_t center_window() const {
        for (size_t i = 0; i < windows_.size(); ++i)
            if ((windows_[i].center - grid_->box().center).cwiseAbs().maxCoeff() < 0.5) return i;
        return 0;
    }

  private:
    struct Window {
        Eigen::VectorXd center;
        std::vector<Eigen::Index> nodes;
    };
    const GridGeometry* grid_;
    std::vector<Window> windows_;
};

/// Exponential decay fit of one grid function: shell maxima of unit-window
/// norms against the window-center distance.
struct DecayFit {
    double mass = 0.0;       // fitted rate (positive = decay)
    double intercept = 0.0;  // log-amplitude at radius 0
    double r_squared = 0.0;
    std::vector<std::pair<double, double>> shells;  // (radius, max window norm)
    Eigen::VectorXd center;
};

/// Least-squares decay fit; empty when fewer than 3 shells carry weight
/// above 1e-14 (insufficient range). The center defaults to the window of
/// maximal mass.
inline std::optional<DecayFit> decay_rate_fit(const GridGeometry& g,
                                              const Eigen::Ref<const Eigen::VectorXd>& psi,
                                              std::optional<Eigen::VectorXd> center = {}) {
    const WindowPartition part(g);
    if (part.count() == 0) return std::nullopt;

    std::vector<double> norms(part.count());
    size_t peak = 0;
    for (size_t i = 0; i < part.count(); ++i) {
        norms[i] = part.norm(i, psi);
        if (norms[i] > norms[peak]) peak = i;
    }
    const Eigen::VectorXd c = center.value_or(part.center(peak));

    std::map<long, double> shell_max;
    for (size_t i = 0; i < part.count(); ++i) {
        const auto r = std::lround((part.center(i) - c).norm());
        auto [it, inserted] = shell_max.try_emplace(r, norms[i]);
        if (!inserted) it->second = std::max(it->second, norms[i]);
    }

    DecayFit fit;
    fit.center = c;
    for (const auto& [r, v] : shell_max) fit.shells.emplace_back(static_cast<double>(r), v);

    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    int n = 0;
    for (const auto& [r, v] : shell_max) {
        if (r < 1 || v < 1e-14) continue;
        const double y = std::log(v);
        sx += static_cast<double>(r);
        sy += y;
        sxx += static_cast<double>(r) * r;
        sxy += r * y;
        syy += y * y;
        ++n;
    }
    if (n < 3) return std::nullopt;
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-12) return std::nullopt;
    const double slope = (n * sxy - sx * sy) / denom;
    fit.mass = -slope;
    fit.intercept = (sy - slope * sx) / n;
    const double ss_tot = syy - sy * sy / n;
    const double ss_res = ss_tot - slope * (sxy - sx * sy / n);
    fit.r_squared = ss_tot > 0.0 ? std::max(0.0, 1.0 - ss_res / ss_tot) : 1.0;
    return fit;
}

struct SudecParams {
    double tau = 1.1;   // > 1
    double s = 0.5;     // in (0,1)
    double nu = 1.0;    // > d/2
    double margin = 1.0;  // boundary strip excluded from probes

    SudecParams() = default;
    SudecParams(double t, double ss, double n, double m = 1.0)
        : tau(t), s(ss), nu(n), margin(m) {
        if (!(tau > 1.0 && ss > 0.0 && ss < 1.0))
            throw std::invalid_argument("SudecParams: need tau > 1 and s in (0,1)");
    }
};

/// Minimal constant making the eigenfunction-correlation bound hold over
/// all probe pairs for one same-eigenvalue pair; the reported value is the
/// smaller of the two orientations of the asymmetric weight.
struct SudecReport {
    Eigen::Index psi = 0, phi = 0;
    double eigenvalue = 0.0;
    double constant = 0.0;
};

inline std::vector<SudecReport> sudec_check(const GridGeometry& g, const SpectralWindow& w,
                                            const SudecParams& params,
                                            double cluster_tol = 1e-8) {
    std::vector<SudecReport> out;
    if (w.empty()) return out;
    const double tol = cluster_tol * std::max(1.0, w.E0);

    const WindowPartition part(g);
    // Probe windows away from the boundary strip.
    std::vector<size_t> probes;
    for (size_t i = 0; i < part.count(); ++i) {
        bool inside = true;
        for (int ax = 0; ax < g.dim(); ++ax)
            if (g.box().hi(ax) - part.center(i)[ax] < params.margin + 0.5 ||
                part.center(i)[ax] - g.box().lo(ax) < params.margin + 0.5)
                inside = false;
        if (inside) probes.push_back(i);
    }
    if (probes.empty()) return out;

    // Weighted norms ||T^{-1} psi|| with T = <x>^nu.
    Eigen::VectorXd weight(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        const Eigen::VectorXd x = g.node(i) - g.box().center;
        weight[i] = std::pow(1.0 + x.squaredNorm(), -params.nu / 2.0);
    }

    auto oriented_constant = [&](Eigen::Index a, Eigen::Index b) {
        const Eigen::VectorXd pa = w.eigenvectors.col(a), pb = w.eigenvectors.col(b);
        const double ta = (weight.array() * pa.array()).matrix().norm();
        const double tb = (weight.array() * pb.array()).matrix().norm();
        std::vector<double> na(probes.size()), nb(probes.size());
        for (size_t i = 0; i < probes.size(); ++i) {
            na[i] = part.norm(probes[i], pa);
            nb[i] = part.norm(probes[i], pb);
        }
        double c = 0.0;
        for (size_t ix = 0; ix < probes.size(); ++ix)
            for (size_t iy = 0; iy < probes.size(); ++iy) {
                const Eigen::VectorXd y = part.center(probes[iy]) - g.box().center;
                const double dist = (part.center(probes[ix]) - part.center(probes[iy])).norm();
                const double rhs = ta * tb *
                                   std::exp(std::pow(std::sqrt(1.0 + y.squaredNorm()), params.tau)) *
                                   std::exp(-std::pow(dist, params.s));
                if (rhs > 0.0) c = std::max(c, na[ix] * nb[iy] / rhs);
            }
        return c;
    };

    for (Eigen::Index a = 0; a < w.count(); ++a)
        for (Eigen::Index b = a; b < w.count(); ++b) {
            if (std::abs(w.eigenvalues[a] - w.eigenvalues[b]) > tol) continue;
            SudecReport rep;
            rep.psi = a;
            rep.phi = b;
            rep.eigenvalue = w.eigenvalues[a];
            rep.constant = std::min(oriented_constant(a, b), oriented_constant(b, a));
            out.push_back(rep);
        }
    return out;
}

/// Eigenvalue clusters within tol * max(1, |lambda|).
inline std::vector<std::pair<double, int>> multiplicity_histogram(const SpectralWindow& w,
                                                                  double tol = 1e-8) {
    std::vector<std::pair<double, int>> clusters;
    for (Eigen::Index i = 0; i < w.count(); ++i) {
        const double lam = w.eigenvalues[i];
        if (!clusters.empty() &&
            std::abs(lam - clusters.back().first) <= tol * std::max(1.0, std::abs(lam))) {
            ++clusters.back().second;
        } else {
            clusters.emplace_back(lam, 1);
        }
    }
    return clusters;
}

struct MomentTrace {
    std::vector<double> times;
    std::vector<double> values;  // ||<x>^p e^{-itH} P chi_0||_HS^2 per time
    double sup = 0.0;
};

/// Logarithmic time grid over [0, t_max] (t = 0 included).
inline std::vector<double> log_time_grid(int count = 64, double t_max = 1e3,
                                         double t_min = 1e-1) {
    std::vector<double> times{0.0};
    for (int i = 0; i < count - 1; ++i)
        times.push_back(t_min * std::pow(t_max / t_min, static_cast<double>(i) / (count - 2)));
    return times;
}

/// Hilbert-Schmidt trace of the spectrally filtered, weighted evolution
/// restricted to the center window, evaluated through the window
/// eigen-decomposition. The sampled sup is a lower bound of the true sup
/// over all times.
inline MomentTrace dynamical_moment(const GridGeometry& g, const SpectralWindow& w, double p,
                                    const std::vector<double>& times) {
    MomentTrace trace;
    trace.times = times;
    trace.values.assign(times.size(), 0.0);
    if (w.empty()) return trace;
    const WindowPartition part(g);
    const auto& win0 = part.nodes(part.center_window());
    if (win0.empty()) return trace;

    Eigen::VectorXd wexp(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        const Eigen::VectorXd x = g.node(i) - g.box().center;
        wexp[i] = std::pow(1.0 + x.squaredNorm(), p / 2.0);  // <x>^p
    }
    // Rows of the eigenvector block at the window nodes: K x |win0|.
    Eigen::MatrixXd wwin(w.count(), static_cast<Eigen::Index>(win0.size()));
    for (size_t j = 0; j < win0.size(); ++j)
        wwin.col(static_cast<Eigen::Index>(j)) = w.eigenvectors.row(win0[j]).transpose();

    for (size_t ti = 0; ti < times.size(); ++ti) {
        Eigen::VectorXd cosv(w.count()), sinv(w.count());
        for (Eigen::Index k = 0; k < w.count(); ++k) {
            cosv[k] = std::cos(times[ti] * w.eigenvalues[k]);
            sinv[k] = std::sin(times[ti] * w.eigenvalues[k]);
        }
        const Eigen::MatrixXd re = w.eigenvectors * (cosv.asDiagonal() * wwin);
        const Eigen::MatrixXd im = w.eigenvectors * (sinv.asDiagonal() * wwin);
        double acc = 0.0;
        for (Eigen::Index i = 0; i < re.rows(); ++i) {
            const double wi = wexp[i] * wexp[i];
            for (Eigen::Index j = 0; j < re.cols(); ++j)
                acc += wi * (re(i, j) * re(i, j) + im(i, j) * im(i, j));
        }
        trace.values[ti] = acc;
        trace.sup = std::max(trace.sup, acc);
    }
    return trace;
}

/// Rigorous time-uniform upper bound of the moment trace from the spatial
/// decay profile of the window eigenfunctions: the triangle inequality over
/// the window partition, sum_x max(<x>^{2p}) (sum_k ||chi_x phi_k||
/// ||chi_0 phi_k||)^2. Tight (up to within-window weight spread and
/// eigenfunction cross terms) in the localized regime.
inline double moment_envelope_bound(const GridGeometry& g, const SpectralWindow& w, double p) {
    if (w.empty()) return 0.0;
    const WindowPartition part(g);
    const size_t c0 = part.center_window();

    std::vector<double> n0(static_cast<size_t>(w.count()));
    for (Eigen::Index k = 0; k < w.count(); ++k)
        n0[static_cast<size_t>(k)] = part.norm(c0, w.eigenvectors.col(k));

    double bound = 0.0;
    for (size_t wi = 0; wi < part.count(); ++wi) {
        double wmax = 0.0;
        for (auto i : part.nodes(wi)) {
            const Eigen::VectorXd z = g.node(i) - g.box().center;
            wmax = std::max(wmax, std::pow(1.0 + z.squaredNorm(), p));
        }
        double inner = 0.0;
        for (Eigen::Index k = 0; k < w.count(); ++k)
            inner += part.norm(wi, w.eigenvectors.col(k)) * n0[static_cast<size_t>(k)];
        bound += wmax * inner * inner;
    }
    return bound;
}

}  // namespace msalab
