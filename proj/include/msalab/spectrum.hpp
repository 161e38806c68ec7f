#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <string>
#include <optional>
#include <stdexcept>
#include <vector>

#include "msalab/hamiltonian.hpp"

namespace msalab {

/// Above this dimension eigenproblems go through shift-invert Lanczos
/// instead of a dense solve.
inline constexpr Eigen::Index kDenseCutoff = 4000;
inline constexpr double kSolverTol = 1e-8;

struct Spectrum {
    Eigen::VectorXd values;   // ascending
    Eigen::MatrixXd vectors;  // columns match values; may be partial
    bool complete = false;    // true iff every eigenvalue is present
};

inline Spectrum dense_spectrum(const Eigen::SparseMatrix<double>& m, bool with_vectors = true) {
    Eigen::MatrixXd dense = Eigen::MatrixXd(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        dense, with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("dense_spectrum: eigensolver failed to converge");
    Spectrum s;
    s.values = es.eigenvalues();
    if (with_vectors) s.vectors = es.eigenvectors();
    s.complete = true;
    return s;
}

/// Smallest `k` eigenpairs of an SPD sparse matrix by Lanczos on the
/// Cholesky inverse, full reorthogonalization.
inline Spectrum lanczos_smallest(const Eigen::SparseMatrix<double>& m, Eigen::Index k,
                                 double tol = kSolverTol) {
    const Eigen::Index n = m.rows();
    if (k >= n) return dense_spectrum(m);
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(m);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("lanczos_smallest: Cholesky factorization failed (matrix not SPD?)");

    const Eigen::Index max_steps = std::min<Eigen::Index>(n, std::max<Eigen::Index>(3 * k + 40, 80));
    Eigen::MatrixXd V(n, max_steps + 1);
    Eigen::VectorXd alpha(max_steps), beta(max_steps);
    // Deterministic start vector.
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] += 0.5 * std::sin(static_cast<double>(i + 1));
    v.normalize();
    V.col(0) = v;

    Eigen::Index steps = 0;
    for (Eigen::Index j = 0; j < max_steps; ++j) {
        Eigen::VectorXd w = llt.solve(V.col(j));
        alpha[j] = V.col(j).dot(w);
        w -= alpha[j] * V.col(j);
        if (j > 0) w -= beta[j - 1] * V.col(j - 1);
        // Full reorthogonalization, twice.
        for (int rep = 0; rep < 2; ++rep)
            w -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * w);
        beta[j] = w.norm();
        steps = j + 1;
        if (beta[j] < 1e-14) break;
        V.col(j + 1) = w / beta[j];
    }

    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(steps, steps);
    for (Eigen::Index j = 0; j < steps; ++j) {
        T(j, j) = alpha[j];
        if (j + 1 < steps) T(j, j + 1) = T(j + 1, j) = beta[j];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    // Largest Ritz values of H^{-1} give the smallest eigenvalues of H.
    Spectrum s;
    s.values.resize(k);
    s.vectors.resize(n, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const Eigen::Index src = steps - 1 - i;  // i-th largest Ritz value of H^{-1}
        const double theta = es.eigenvalues()[src];
        if (theta <= 0.0) throw std::runtime_error("lanczos_smallest: nonpositive Ritz value");
        s.values[i] = 1.0 / theta;
        s.vectors.col(i) = V.leftCols(steps) * es.eigenvectors().col(src);
        s.vectors.col(i).normalize();
    }
    // Residual acceptance; a failure here means the Krylov space was too small.
    for (Eigen::Index i = 0; i < k; ++i) {
        const double resid = (m * s.vectors.col(i) - s.values[i] * s.vectors.col(i)).norm();
        if (resid > tol * std::max(1.0, s.values[i]))
            throw std::runtime_error("lanczos_smallest: residual " + std::to_string(resid) +
                                     " after " + std::to_string(steps) + " steps for eigenvalue " +
                                     std::to_string(s.values[i]));
    }
    s.complete = false;
    return s;
}

inline Spectrum compute_spectrum(const DiscreteHamiltonian& H, bool with_vectors = true) {
    if (H.size() <= kDenseCutoff) return dense_spectrum(H.matrix, with_vectors);
    // Iterative fallback: resolve the lower part of the spectrum only.
    return lanczos_smallest(H.matrix, std::min<Eigen::Index>(H.size() - 1, 64));
}

inline double lowest_eigenvalue(const DiscreteHamiltonian& H) {
    if (H.size() <= kDenseCutoff) return dense_spectrum(H.matrix, false).values[0];
    return lanczos_smallest(H.matrix, 1).values[0];
}

/// ||R(E)|| = 1/dist(E, spec H) for self-adjoint H. Returns +inf when E sits
/// within 1e-12 of an eigenvalue (resolvent blow-up).
inline double resolvent_norm(const Spectrum& s, double E) {
    double dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < s.values.size(); ++i)
        dist = std::min(dist, std::abs(s.values[i] - E));
    if (dist <= 1e-12) return std::numeric_limits<double>::infinity();
    return 1.0 / dist;
}

inline double resolvent_norm(const DiscreteHamiltonian& H, double E) {
    return resolvent_norm(compute_spectrum(H, false), E);
}

inline bool is_blowup(double norm) { return std::isinf(norm); }

/// Window sub-blocks of the resolvent R(E). With a complete spectrum the
/// block is Q_x D Q_y^T; otherwise each window column set is solved once
/// through a sparse LU of (H - E) and cached.
class ResolventWindows {
  public:
    ResolventWindows(const DiscreteHamiltonian& H, const Spectrum& s, double E)
        : H_(&H), spec_(&s), E_(E) {
        if (is_blowup(resolvent_norm(s, E)))
            throw std::domain_error("ResolventWindows: E is an eigenvalue (resolvent blow-up)");
        if (!s.complete) {
            shifted_ = H.matrix;
            for (Eigen::Index i = 0; i < shifted_.rows(); ++i) shifted_.coeffRef(i, i) -= E;
            shifted_.makeCompressed();
            lu_.compute(shifted_);
            if (lu_.info() != Eigen::Success)
                throw std::runtime_error("ResolventWindows: LU factorization failed");
        }
    }

    /// || chi_x R(E) chi_y || for unit windows centered at x and y.
    double block_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                      double window_side = 1.0) const {
        const auto ix = H_->grid.nodes_in_box(Box(x, window_side));
        const auto iy = H_->grid.nodes_in_box(Box(y, window_side));
        if (ix.empty() || iy.empty()) return 0.0;
        Eigen::MatrixXd block(static_cast<Eigen::Index>(ix.size()),
                              static_cast<Eigen::Index>(iy.size()));
        if (spec_->complete) {
            const Eigen::MatrixXd& Q = spec_->vectors;
            Eigen::MatrixXd qy(static_cast<Eigen::Index>(iy.size()), Q.cols());
            for (size_t j = 0; j < iy.size(); ++j)
                qy.row(static_cast<Eigen::Index>(j)) = Q.row(iy[j]);
            Eigen::VectorXd dinv = (spec_->values.array() - E_).inverse();
            Eigen::MatrixXd qx(static_cast<Eigen::Index>(ix.size()), Q.cols());
            for (size_t i = 0; i < ix.size(); ++i)
                qx.row(static_cast<Eigen::Index>(i)) = Q.row(ix[i]);
            block = qx * dinv.asDiagonal() * qy.transpose();
        } else {
            Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(H_->size(), static_cast<Eigen::Index>(iy.size()));
            for (size_t j = 0; j < iy.size(); ++j) rhs(iy[j], static_cast<Eigen::Index>(j)) = 1.0;
            Eigen::MatrixXd sol = lu_.solve(rhs);
            for (size_t i = 0; i < ix.size(); ++i)
                block.row(static_cast<Eigen::Index>(i)) = sol.row(ix[i]);
        }
        return block.jacobiSvd().singularValues()[0];
    }

  private:
    const DiscreteHamiltonian* H_;
    const Spectrum* spec_;
    double E_;
    Eigen::SparseMatrix<double> shifted_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

/// || chi_x R(E) chi_y || for a single pair.
inline double local_decay(const DiscreteHamiltonian& H, const Spectrum& s, double E,
                          const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                          double window_side = 1.0) {
    return ResolventWindows(H, s, E).block_norm(x, y, window_side);
}

/// Eigenpairs with eigenvalue in [0, E0]; residuals are verified against
/// the solver tolerance.
struct SpectralWindow {
    double E0 = 0.0;
    Eigen::VectorXd eigenvalues;  // ascending, within [0, E0]
    Eigen::MatrixXd eigenvectors; // l2-normalized coefficient columns
    double max_residual = 0.0;

    Eigen::Index count() const { return eigenvalues.size(); }
    bool empty() const { return eigenvalues.size() == 0; }
};

inline SpectralWindow window_eigenpairs(const DiscreteHamiltonian& H, double E0,
                                        double tol = kSolverTol) {
    if (!(E0 > 0.0)) throw std::invalid_argument("window_eigenpairs: E0 must be > 0");
    Spectrum s;
    if (H.size() <= kDenseCutoff) {
        s = dense_spectrum(H.matrix);
    } else {
        // Grow the Krylov window until the top of [0, E0] is resolved.
        Eigen::Index k = 32;
        for (;;) {
            s = lanczos_smallest(H.matrix, std::min<Eigen::Index>(k, H.size() - 1));
            if (s.values[s.values.size() - 1] > E0 || k >= H.size() - 1) break;
            k *= 2;
        }
    }
    SpectralWindow w;
    w.E0 = E0;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < s.values.size(); ++i)
        if (s.values[i] >= 0.0 && s.values[i] <= E0) keep.push_back(i);
    w.eigenvalues.resize(static_cast<Eigen::Index>(keep.size()));
    w.eigenvectors.resize(H.size(), static_cast<Eigen::Index>(keep.size()));
    for (size_t i = 0; i < keep.size(); ++i) {
        w.eigenvalues[static_cast<Eigen::Index>(i)] = s.values[keep[i]];
        w.eigenvectors.col(static_cast<Eigen::Index>(i)) = s.vectors.col(keep[i]);
        const double resid = (H.matrix * w.eigenvectors.col(static_cast<Eigen::Index>(i)) -
                              w.eigenvalues[static_cast<Eigen::Index>(i)] *
                                  w.eigenvectors.col(static_cast<Eigen::Index>(i)))
                                 .norm();
        w.max_residual = std::max(w.max_residual, resid);
    }
    if (w.max_residual > tol * std::max(1.0, E0))
        throw std::runtime_error("window_eigenpairs: residual above tolerance");
    return w;
}

}  // namespace msalab
