#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace msalab {

/// Single-site bump u with u_- chi_{delta_-} <= u <= u_+ chi_{delta_+}.
/// The indicator shape attains the sandwich with equality; the trapezoid
/// ramps linearly (in the sup-norm radius) between the two supports and is
/// the choice whenever Lipschitz continuity in the impurity position
/// matters.
struct SingleSiteProfile {
    enum class Shape { indicator, trapezoid };

    double u_plus = 1.0;
    double u_minus = 1.0;
    double delta_plus = 1.0;
    double delta_minus = 1.0;
    Shape shape = Shape::indicator;

    SingleSiteProfile() = default;
    SingleSiteProfile(double up, double um, double dp, double dm, Shape s)
        : u_plus(up), u_minus(um), delta_plus(dp), delta_minus(dm), shape(s) {
        validate();
    }

    static SingleSiteProfile indicator(double amplitude = 1.0, double support = 1.0) {
        return SingleSiteProfile(amplitude, amplitude, support, support, Shape::indicator);
    }

    static SingleSiteProfile trapezoid(double amplitude, double dp, double dm) {
        return SingleSiteProfile(amplitude, amplitude, dp, dm, Shape::trapezoid);
    }

    void validate() const {
        if (!(u_plus > 0.0 && u_minus > 0.0 && u_minus <= u_plus))
            throw std::invalid_argument("SingleSiteProfile: need 0 < u_- <= u_+");
        if (!(delta_minus > 0.0 && delta_minus <= delta_plus))
            throw std::invalid_argument("SingleSiteProfile: need 0 < delta_- <= delta_+");
        if (shape == Shape::indicator && delta_minus != delta_plus)
            throw std::invalid_argument("SingleSiteProfile: indicator requires delta_- = delta_+");
    }

    double sup_norm() const { return u_plus; }

    /// u(z) for displacement z from the impurity.
    double operator()(const Eigen::Ref<const Eigen::VectorXd>& z) const {
        const double r = z.cwiseAbs().maxCoeff();
        if (r >= delta_plus / 2.0) return 0.0;
        if (shape == Shape::indicator) return u_plus;
        if (r <= delta_minus / 2.0) return u_plus;
        return u_plus * (delta_plus / 2.0 - r) / ((delta_plus - delta_minus) / 2.0);
    }

    /// Lipschitz constant of u as a function of the impurity position.
    double lipschitz() const {
        if (shape == Shape::indicator) return std::numeric_limits<double>::infinity();
        return u_plus / ((delta_plus - delta_minus) / 2.0);
    }
};

}  // namespace msalab
