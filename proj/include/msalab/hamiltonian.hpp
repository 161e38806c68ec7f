#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "msalab/geometry.hpp"
#include "msalab/profile.hpp"

namespace msalab {

/// Uniform interior grid of a box: nodes at lo + (i+1) h per axis,
/// i = 0 .. n-1 with n = side/h - 1 (Dirichlet truncation drops the faces).
class GridGeometry {
  public:
    GridGeometry(Box box, double h) : box_(std::move(box)), h_(h) {
        if (!(h_ > 0.0)) throw std::invalid_argument("GridGeometry: h must be > 0");
        const double ratio = box_.side / h_;
        if (std::abs(ratio - std::round(ratio)) > 1e-9)
            throw std::invalid_argument("GridGeometry: box side must be an integer multiple of h");
        nodes_per_axis_ = static_cast<Eigen::Index>(std::llround(ratio)) - 1;
        if (nodes_per_axis_ < 1)
            throw std::invalid_argument("GridGeometry: box too small for the grid spacing");
        total_ = 1;
        for (int i = 0; i < box_.dim(); ++i) total_ *= nodes_per_axis_;
    }

    const Box& box() const { return box_; }
    double h() const { return h_; }
    int dim() const { return box_.dim(); }
    Eigen::Index nodes_per_axis() const { return nodes_per_axis_; }
    Eigen::Index size() const { return total_; }

    Eigen::VectorXd node(Eigen::Index flat) const {
        Eigen::VectorXd p(dim());
        for (int i = 0; i < dim(); ++i) {
            const Eigen::Index k = flat % nodes_per_axis_;
            flat /= nodes_per_axis_;
            p[i] = box_.lo(i) + h_ * static_cast<double>(k + 1);
        }
        return p;
    }

    Eigen::Index flat_index(const Eigen::Ref<const Eigen::VectorXi>& multi) const {
        Eigen::Index f = 0;
        for (int i = dim() - 1; i >= 0; --i) f = f * nodes_per_axis_ + multi[i];
        return f;
    }

    /// Flat indices of nodes strictly inside the open box `w`.
    std::vector<Eigen::Index> nodes_in_box(const Box& w) const {
        std::vector<Eigen::Index> out;
        std::vector<std::vector<Eigen::Index>> axis_nodes(static_cast<size_t>(dim()));
        for (int i = 0; i < dim(); ++i) {
            for (Eigen::Index k = 0; k < nodes_per_axis_; ++k) {
                const double pos = box_.lo(i) + h_ * static_cast<double>(k + 1);
                if (pos > w.lo(i) && pos < w.hi(i)) axis_nodes[static_cast<size_t>(i)].push_back(k);
            }
            if (axis_nodes[static_cast<size_t>(i)].empty()) return out;
        }
        std::vector<size_t> cur(static_cast<size_t>(dim()), 0);
        Eigen::VectorXi multi(dim());
        for (;;) {
            for (int i = 0; i < dim(); ++i)
                multi[i] = static_cast<int>(axis_nodes[static_cast<size_t>(i)][cur[static_cast<size_t>(i)]]);
            out.push_back(flat_index(multi));
            int axis = 0;
            while (axis < dim()) {
                if (++cur[static_cast<size_t>(axis)] < axis_nodes[static_cast<size_t>(axis)].size()) break;
                cur[static_cast<size_t>(axis)] = 0;
                ++axis;
            }
            if (axis == dim()) break;
        }
        return out;
    }

  private:
    Box box_;
    double h_;
    Eigen::Index nodes_per_axis_ = 0;
    Eigen::Index total_ = 0;
};

/// Finite-difference H = -Delta_h + V on the interior grid, Dirichlet
/// truncation, potential sampled at the nodes. Immutable after assembly.
struct DiscreteHamiltonian {
    GridGeometry grid;
    Eigen::SparseMatrix<double> matrix;
    Eigen::VectorXd potential;

    Eigen::Index size() const { return grid.size(); }
};

namespace detail {

inline void add_profile(Eigen::VectorXd& v, const GridGeometry& g, const Eigen::VectorXd& zeta,
                        const SingleSiteProfile& u, double coeff) {
    if (coeff == 0.0) return;
    // Nodes possibly touched by the support Lambda_{delta_+}(zeta).
    Box support(zeta, u.delta_plus);
    std::vector<std::vector<Eigen::Index>> axis_nodes(static_cast<size_t>(g.dim()));
    for (int i = 0; i < g.dim(); ++i) {
        const double lo = zeta[i] - u.delta_plus / 2.0, hi = zeta[i] + u.delta_plus / 2.0;
        const auto klo = static_cast<Eigen::Index>(
            std::max(0.0, std::ceil((lo - g.box().lo(i)) / g.h() - 1.0)));
        const auto khi = static_cast<Eigen::Index>(
            std::min(static_cast<double>(g.nodes_per_axis() - 1),
                     std::floor((hi - g.box().lo(i)) / g.h() - 1.0)));
        for (Eigen::Index k = klo; k <= khi; ++k) axis_nodes[static_cast<size_t>(i)].push_back(k);
        if (axis_nodes[static_cast<size_t>(i)].empty()) return;
    }
    std::vector<size_t> cur(static_cast<size_t>(g.dim()), 0);
    Eigen::VectorXi multi(g.dim());
    Eigen::VectorXd z(g.dim());
    for (;;) {
        for (int i = 0; i < g.dim(); ++i) {
            const Eigen::Index k = axis_nodes[static_cast<size_t>(i)][cur[static_cast<size_t>(i)]];
            multi[i] = static_cast<int>(k);
            z[i] = g.box().lo(i) + g.h() * static_cast<double>(k + 1) - zeta[i];
        }
        const double val = u(z);
        if (val != 0.0) v[g.flat_index(multi)] += coeff * val;
        int axis = 0;
        while (axis < g.dim()) {
            if (++cur[static_cast<size_t>(axis)] < axis_nodes[static_cast<size_t>(axis)].size()) break;
            cur[static_cast<size_t>(axis)] = 0;
            ++axis;
        }
        if (axis == g.dim()) break;
    }
}

inline bool share_a_point(const Configuration& a, const Configuration& b) {
    for (Eigen::Index i = 0; i < a.size(); ++i)
        for (Eigen::Index j = 0; j < b.size(); ++j)
            if ((a.points.col(i) - b.points.col(j)).cwiseAbs().maxCoeff() == 0.0) return true;
    return false;
}

}  // namespace detail

/// Node potential of V_{X,(Y,t_Y),Lambda}: impurities outside the box do not
/// contribute.
inline Eigen::VectorXd assemble_potential(const GridGeometry& g, const Configuration& X,
                                          const Configuration& Y, const Eigen::VectorXd& t,
                                          const SingleSiteProfile& u) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(g.size());
    for (Eigen::Index i = 0; i < X.size(); ++i) {
        if (!g.box().contains(X.point(i))) continue;
        detail::add_profile(v, g, X.point(i), u, 1.0);
    }
    for (Eigen::Index i = 0; i < Y.size(); ++i) {
        if (!g.box().contains(Y.point(i))) continue;
        detail::add_profile(v, g, Y.point(i), u, t[i]);
    }
    return v;
}

/// H_{X,(Y,t_Y),Lambda} with the (2d+1)-point Dirichlet Laplacian.
/// t == 0 gives H_{X,Lambda}; t in {0,1}^Y matches absorbing the marked
/// points into X.
inline DiscreteHamiltonian assemble(const Box& box, const Configuration& X,
                                    const Configuration& Y, const Eigen::VectorXd& t,
                                    const SingleSiteProfile& u, double h) {
    if (Y.size() != t.size())
        throw std::invalid_argument("assemble: coefficient count must match Y");
    for (Eigen::Index i = 0; i < t.size(); ++i)
        if (!(t[i] >= 0.0 && t[i] <= 1.0))
            throw std::invalid_argument("assemble: coefficients must lie in [0,1]");
    if (!(h <= u.delta_minus / 4.0))
        throw std::invalid_argument("assemble: h must resolve the single-site support (h <= delta_-/4)");
    if (detail::share_a_point(X, Y))
        throw std::invalid_argument("assemble: X and Y must be disjoint");

    GridGeometry g(box, h);
    Eigen::VectorXd v = assemble_potential(g, X, Y, t, u);

    const double inv_h2 = 1.0 / (h * h);
    const int d = g.dim();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(g.size()) * static_cast<size_t>(2 * d + 1));
    const Eigen::Index n = g.nodes_per_axis();
    for (Eigen::Index f = 0; f < g.size(); ++f) {
        trips.emplace_back(f, f, 2.0 * d * inv_h2 + v[f]);
        Eigen::Index rem = f, stride = 1;
        for (int i = 0; i < d; ++i) {
            const Eigen::Index k = rem % n;
            rem /= n;
            if (k > 0) trips.emplace_back(f, f - stride, -inv_h2);
            if (k + 1 < n) trips.emplace_back(f, f + stride, -inv_h2);
            stride *= n;
        }
    }
    Eigen::SparseMatrix<double> m(g.size(), g.size());
    m.setFromTriplets(trips.begin(), trips.end());
    return DiscreteHamiltonian{std::move(g), std::move(m), std::move(v)};
}

inline DiscreteHamiltonian assemble(const Box& box, const Configuration& X,
                                    const SingleSiteProfile& u, double h) {
    return assemble(box, X, Configuration{}, Eigen::VectorXd(0), u, h);
}

/// Eigenvalues of the free Dirichlet Laplacian on this grid, ascending:
/// (4/h^2) sum_i sin^2(pi k_i h / (2L)).
inline Eigen::VectorXd free_laplacian_eigenvalues(const GridGeometry& g) {
    const Eigen::Index n = g.nodes_per_axis();
    const double L = g.box().side;
    Eigen::VectorXd axis(n);
    for (Eigen::Index k = 1; k <= n; ++k) {
        const double s = std::sin(M_PI * static_cast<double>(k) * g.h() / (2.0 * L));
        axis[k - 1] = 4.0 / (g.h() * g.h()) * s * s;
    }
    Eigen::VectorXd all = Eigen::VectorXd::Zero(g.size());
    Eigen::Index total = 1;
    for (int i = 0; i < g.dim(); ++i) total *= n;
    for (Eigen::Index f = 0; f < total; ++f) {
        Eigen::Index rem = f;
        double sum = 0.0;
        for (int i = 0; i < g.dim(); ++i) {
            sum += axis[rem % n];
            rem /= n;
        }
        all[f] = sum;
    }
    std::sort(all.begin(), all.end());
    return all;
}

/// Coordinate-format dump (row col value per line) for cross-validation
/// against external solvers.
inline void write_matrix_coo(const Eigen::SparseMatrix<double>& m, std::ostream& os) {
    for (int k = 0; k < m.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%ld %ld %.17g\n", static_cast<long>(it.row()),
                          static_cast<long>(it.col()), it.value());
            os << buf;
        }
}

}  // namespace msalab
