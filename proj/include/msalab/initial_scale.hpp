#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "msalab/goodness.hpp"
#include "msalab/random.hpp"
#include "msalab/spectrum.hpp"

namespace msalab {

/// The delta0-lattice J inside the safety margin and its even sub-lattice
/// J_e (spacing 2 delta0).
struct InteriorLattice {
    std::vector<Eigen::VectorXd> all;   // J
    std::vector<Eigen::VectorXd> even;  // J_e
};

inline InteriorLattice interior_lattice(const Box& box, double delta0, double delta_plus) {
    InteriorLattice lat;
    const Box hat = box.shrunk(delta_plus);
    const int d = box.dim();
    const auto reach = static_cast<long>(std::floor(((hat.side - delta0) / 2.0) / delta0 + Box::geom_tol()));
    if (reach < 0) return lat;
    std::vector<long> idx(static_cast<size_t>(d), -reach);
    for (;;) {
        Eigen::VectorXd c = box.center;
        bool even = true;
        for (int i = 0; i < d; ++i) {
            c[i] += delta0 * static_cast<double>(idx[static_cast<size_t>(i)]);
            even = even && (idx[static_cast<size_t>(i)] % 2 == 0);
        }
        lat.all.push_back(c);
        if (even) lat.even.push_back(c);
        int axis = 0;
        while (axis < d) {
            if (++idx[static_cast<size_t>(axis)] <= reach) break;
            idx[static_cast<size_t>(axis)] = -reach;
            ++axis;
        }
        if (axis == d) break;
    }
    return lat;
}

/// Configuration with exactly k points in Lambda_{delta0}(j) for each
/// j in J_e and none elsewhere. With seed == 0 the points sit on a
/// deterministic diagonal jitter; otherwise they are drawn uniformly from
/// the half-size cell.
inline Configuration filled_configuration(const Box& box, double delta0, double delta_plus,
                                          int k = 1, uint64_t seed = 0) {
    const auto lat = interior_lattice(box, delta0, delta_plus);
    std::vector<Eigen::VectorXd> pts;
    SplitMix rng(seed);
    for (size_t jidx = 0; jidx < lat.even.size(); ++jidx) {
        const auto& j = lat.even[jidx];
        for (int q = 0; q < k; ++q) {
            Eigen::VectorXd p = j;
            if (seed == 0) {
                const double step = delta0 / (2.0 * static_cast<double>(k + 1));
                const double off = (static_cast<double>(q) - (k - 1) / 2.0) * step;
                for (int i = 0; i < box.dim(); ++i) p[i] += off;
            } else {
                SplitMix cell = rng.split(jidx * 64 + static_cast<uint64_t>(q));
                for (int i = 0; i < box.dim(); ++i)
                    p[i] += cell.uniform(-delta0 / 4.0, delta0 / 4.0);
            }
            pts.push_back(p);
        }
    }
    return make_configuration(pts, box.dim());
}

struct CuCalibration {
    double C_u = 0.0;
    std::vector<double> delta0;
    std::vector<double> lambda1;
};

/// C_u from the filled-lattice sweep: for each delta0 the lowest eigenvalue
/// of H restricted to the filled configuration, C_u = min lambda1
/// delta0^{2(d+1)} / 2. The returned constant reproduces
/// lambda1 >= 2 C_u delta0^{-2(d+1)} across the sweep by construction.
inline CuCalibration calibrate_Cu(const Box& box, const SingleSiteProfile& profile,
                                  const std::vector<double>& delta0_sweep, double h) {
    CuCalibration cal;
    double best = std::numeric_limits<double>::infinity();
    for (double d0 : delta0_sweep) {
        if (!(d0 > profile.delta_plus))
            throw std::invalid_argument("calibrate_Cu: sweep values must exceed delta_+");
        const Configuration x1 = filled_configuration(box, d0, profile.delta_plus);
        const DiscreteHamiltonian H = assemble(box, x1, profile, h);
        const double l1 = lowest_eigenvalue(H);
        if (!(l1 > 0.0)) throw std::logic_error("calibrate_Cu: nonpositive ground energy");
        cal.delta0.push_back(d0);
        cal.lambda1.push_back(l1);
        best = std::min(best, l1 * std::pow(d0, 2.0 * (box.dim() + 1)));
    }
    cal.C_u = best / 2.0;
    return cal;
}

/// Initial-scale triple delta_L, E_L, m_L with the density-window flags.
struct InitialScaleParams {
    double delta_L = 0.0;
    double E_L = 0.0;
    double m_L = 0.0;
    double C_u = 0.0;
    bool rho_upper_ok = true;  // rho <= (p+d+1) delta_-^{-d} log L
};

inline InitialScaleParams initial_scale_params(int d, double rho, double p, double L, double C_u,
                                               double eps0 = 0.05, double delta_minus = 1.0) {
    if (!(rho >= std::pow(L, -eps0) && rho <= std::exp(std::pow(L, d))))
        throw std::invalid_argument(
            "initial_scale_params: density outside the admissible window L^{-eps0} <= rho <= e^{L^d}");
    InitialScaleParams out;
    out.C_u = C_u;
    out.delta_L = 1.0 + std::pow((p + d + 1) / rho * std::log(L), 1.0 / d);
    out.E_L = C_u * std::pow(out.delta_L, -2.0 * (d + 1));
    out.m_L = 0.5 * std::sqrt(out.E_L);
    out.rho_upper_ok = rho <= (p + d + 1) * std::pow(delta_minus, -d) * std::log(L);
    return out;
}

/// High-disorder density rho(L) = C log L sized so that every half-cell of
/// the delta0 = delta_-/6 lattice holds at least K0 = ceil(2 E0 / u_-)
/// points except with probability L^{-p-1} (union bound over the lattice
/// with the undercount constant C_k = 2^k).
inline double high_disorder_density(int d, const SingleSiteProfile& u, double p, double E0,
                                    double L) {
    const double K0 = std::ceil(2.0 * E0 / u.u_minus);
    const double delta0 = u.delta_minus / 6.0;
    const double delta1 = delta0 / 2.0;
    const double log_target = K0 * std::log(2.0) + d * std::log(L / delta0) + (p + 1.0) * std::log(L);
    return 2.0 / std::pow(delta1, d) * log_target;
}

}  // namespace msalab
