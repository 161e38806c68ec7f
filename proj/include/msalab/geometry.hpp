#pragma once

#include <Eigen/Dense>

#include <cmath>

#include <stdexcept>
#include <vector>

namespace msalab {

using Point = Eigen::VectorXd;

/// Open axis-aligned cube: center + (-side/2, side/2)^d.
struct Box {
    Eigen::VectorXd center;
    double side = 0.0;

    Box() = default;
    Box(Eigen::VectorXd c, double s) : center(std::move(c)), side(s) {
        if (side <= 0.0) throw std::invalid_argument("Box: side must be positive");
        if (center.size() < 1) throw std::invalid_argument("Box: dimension must be >= 1");
    }

    static Box centered(int dim, double side) { return Box(Eigen::VectorXd::Zero(dim), side); }

    int dim() const { return static_cast<int>(center.size()); }
    double volume() const { return std::pow(side, dim()); }
    double lo(int axis) const { return center[axis] - side / 2.0; }
    double hi(int axis) const { return center[axis] + side / 2.0; }

    bool contains(const Eigen::Ref<const Eigen::VectorXd>& p) const {
        for (int i = 0; i < dim(); ++i)
            if (!(p[i] > lo(i) && p[i] < hi(i))) return false;
        return true;
    }

    /// True iff `inner` lies inside this box (closure-in-closure suffices for
    /// open boxes of the same family).
    bool contains_box(const Box& inner) const {
        if (inner.dim() != dim()) return false;
        for (int i = 0; i < dim(); ++i) {
            if (inner.lo(i) < lo(i) - geom_tol() || inner.hi(i) > hi(i) + geom_tol()) return false;
        }
        return true;
    }

    Box shrunk(double margin) const {
        if (side - margin <= 0.0) throw std::invalid_argument("Box::shrunk: margin eats the box");
        return Box(center, side - margin);
    }

    /// Absolute slack used when comparing box faces assembled from floating
    /// point arithmetic on centers and sides.
    static constexpr double geom_tol() { return 1e-12; }
};

/// Finite set of pairwise distinct points, stored as columns.
struct Configuration {
    Eigen::MatrixXd points;  // d x n

    Configuration() = default;
    explicit Configuration(Eigen::MatrixXd pts) : points(std::move(pts)) {}

    int dim() const { return static_cast<int>(points.rows()); }
    Eigen::Index size() const { return points.cols(); }
    bool empty() const { return points.cols() == 0; }
    Eigen::VectorXd point(Eigen::Index i) const { return points.col(i); }

    /// N_X(A): number of points falling in `box`.
    Eigen::Index count_in(const Box& box) const {
        Eigen::Index n = 0;
        for (Eigen::Index i = 0; i < points.cols(); ++i)
            if (box.contains(points.col(i))) ++n;
        return n;
    }
};

inline Configuration make_configuration(const std::vector<Eigen::VectorXd>& pts, int dim) {
    Eigen::MatrixXd m(dim, static_cast<Eigen::Index>(pts.size()));
    for (size_t i = 0; i < pts.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = pts[i];
    return Configuration(std::move(m));
}

/// Disjoint union of two configurations.
inline Configuration merge(const Configuration& a, const Configuration& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    Eigen::MatrixXd m(a.points.rows(), a.points.cols() + b.points.cols());
    m << a.points, b.points;
    return Configuration(std::move(m));
}

/// Point set with one Bernoulli mark per point.
struct MarkedConfiguration {
    Eigen::MatrixXd points;       // d x n
    std::vector<uint8_t> marks;   // n entries in {0,1}

    int dim() const { return static_cast<int>(points.rows()); }
    Eigen::Index size() const { return points.cols(); }

    Configuration as_configuration() const { return Configuration(points); }
};

/// (X, X'): points with mark 1, points with mark 0.
inline std::pair<Configuration, Configuration> split_marked(const MarkedConfiguration& m) {
    Eigen::Index n1 = 0;
    for (uint8_t b : m.marks) n1 += (b != 0);
    Eigen::MatrixXd x(m.points.rows(), n1), xp(m.points.rows(), m.size() - n1);
    Eigen::Index i1 = 0, i0 = 0;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        if (m.marks[static_cast<size_t>(i)]) x.col(i1++) = m.points.col(i);
        else xp.col(i0++) = m.points.col(i);
    }
    return {Configuration(std::move(x)), Configuration(std::move(xp))};
}

}  // namespace msalab
