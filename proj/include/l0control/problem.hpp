#pragma once

#include "l0control/grid.hpp"
#include "l0control/pointwise_cost.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace l0control {

enum class NonlinearityFamily { linear, cubic, atan };

inline std::string to_string(NonlinearityFamily f) {
    switch (f) {
        case NonlinearityFamily::linear: return "linear";
        case NonlinearityFamily::cubic: return "cubic";
        case NonlinearityFamily::atan: return "atan";
    }
    return "?";
}

/// Monotone reaction term a(x, y) from a fixed whitelist of families, with
/// per-node coefficient fields c0 >= 0 (and c3 >= 0 for the cubic family).
/// Every family satisfies a(x, 0) = 0 and da/dy >= 0.
class Nonlinearity {
public:
    static Nonlinearity linear(Vector c0) {
        return Nonlinearity(NonlinearityFamily::linear, std::move(c0), Vector());
    }
    static Nonlinearity cubic(Vector c0, Vector c3) {
        return Nonlinearity(NonlinearityFamily::cubic, std::move(c0), std::move(c3));
    }
    static Nonlinearity arctan(Vector c0) {
        return Nonlinearity(NonlinearityFamily::atan, std::move(c0), Vector());
    }

    NonlinearityFamily family() const { return family_; }
    const Vector& c0() const { return c0_; }
    const Vector& c3() const { return c3_; }

    double value(Eigen::Index i, double y) const {
        switch (family_) {
            case NonlinearityFamily::linear: return c0_[i] * y;
            case NonlinearityFamily::cubic: return c0_[i] * y + c3_[i] * y * y * y;
            case NonlinearityFamily::atan: return c0_[i] * std::atan(y);
        }
        return 0.0;
    }

    double dy(Eigen::Index i, double y) const {
        switch (family_) {
            case NonlinearityFamily::linear: return c0_[i];
            case NonlinearityFamily::cubic: return c0_[i] + 3.0 * c3_[i] * y * y;
            case NonlinearityFamily::atan: return c0_[i] / (1.0 + y * y);
        }
        return 0.0;
    }

    double dyy(Eigen::Index i, double y) const {
        switch (family_) {
            case NonlinearityFamily::linear: return 0.0;
            case NonlinearityFamily::cubic: return 6.0 * c3_[i] * y;
            case NonlinearityFamily::atan: {
                const double d = 1.0 + y * y;
                return -2.0 * c0_[i] * y / (d * d);
            }
        }
        return 0.0;
    }

    Vector value(const Vector& y) const {
        return map(y, [this](Eigen::Index i, double yi) { return value(i, yi); });
    }
    Vector dy(const Vector& y) const {
        return map(y, [this](Eigen::Index i, double yi) { return dy(i, yi); });
    }
    Vector dyy(const Vector& y) const {
        return map(y, [this](Eigen::Index i, double yi) { return dyy(i, yi); });
    }

    void validate(Eigen::Index n) const {
        if (c0_.size() != n)
            throw std::invalid_argument("Nonlinearity: c0 size does not match grid");
        if ((c0_.array() < 0.0).any())
            throw std::invalid_argument("Nonlinearity: c0 must be nonnegative");
        if (family_ == NonlinearityFamily::cubic) {
            if (c3_.size() != n)
                throw std::invalid_argument("Nonlinearity: c3 size does not match grid");
            if ((c3_.array() < 0.0).any())
                throw std::invalid_argument("Nonlinearity: c3 must be nonnegative");
        }
    }

private:
    Nonlinearity(NonlinearityFamily f, Vector c0, Vector c3)
        : family_(f), c0_(std::move(c0)), c3_(std::move(c3)) {}

    template <class F>
    Vector map(const Vector& y, F f) const {
        Vector out(y.size());
        for (Eigen::Index i = 0; i < y.size(); ++i) out[i] = f(i, y[i]);
        return out;
    }

    NonlinearityFamily family_;
    Vector c0_;
    Vector c3_;
};

/// Tracking objective L(x, y) = (y - y_d(x))^2 / 2. Its second derivative is
/// identically one and L >= 0, so the required lower bound is zero.
struct TrackingObjective {
    Vector target;

    double value(Eigen::Index i, double y) const {
        const double d = y - target[i];
        return 0.5 * d * d;
    }
    double dy(Eigen::Index i, double y) const { return y - target[i]; }
    static double dyy() { return 1.0; }
};

/// Full description of the control problem: grid, isotropic diffusion
/// coefficient, reaction term, tracking target and the cost parameters
/// alpha >= 0, beta > 0, gamma in (0, inf].
class ProblemSpec {
public:
    ProblemSpec(Grid grid, Vector kappa, Nonlinearity nonlinearity, Vector target,
                double alpha, double beta, double gamma)
        : grid_(grid),
          kappa_(std::move(kappa)),
          nonlinearity_(std::move(nonlinearity)),
          objective_{std::move(target)},
          alpha_(alpha),
          beta_(beta),
          gamma_(gamma) {
        const Eigen::Index n = grid_.size();
        if (kappa_.size() != n)
            throw std::invalid_argument("ProblemSpec: kappa size does not match grid");
        if ((kappa_.array() <= 0.0).any())
            throw std::invalid_argument("ProblemSpec: kappa must be positive everywhere");
        if (objective_.target.size() != n)
            throw std::invalid_argument("ProblemSpec: target size does not match grid");
        if (!objective_.target.allFinite())
            throw std::invalid_argument("ProblemSpec: target must be finite");
        nonlinearity_.validate(n);
        if (!(beta_ > 0.0)) throw std::invalid_argument("ProblemSpec: beta must be positive");
        if (alpha_ < 0.0) throw std::invalid_argument("ProblemSpec: alpha must be nonnegative");
        if (!(gamma_ > 0.0)) throw std::invalid_argument("ProblemSpec: gamma must be positive");
        if (alpha_ == 0.0 && std::isinf(gamma_))
            throw std::invalid_argument(
                "ProblemSpec: gamma must be finite when alpha = 0 (unbounded controls need "
                "a quadratic cost)");
    }

    const Grid& grid() const { return grid_; }
    const Vector& kappa() const { return kappa_; }
    const Nonlinearity& nonlinearity() const { return nonlinearity_; }
    const TrackingObjective& objective() const { return objective_; }
    const Vector& target() const { return objective_.target; }
    double alpha() const { return alpha_; }
    double beta() const { return beta_; }
    double gamma() const { return gamma_; }

    /// Declared ellipticity constant: the minimum of kappa.
    double ellipticity() const { return kappa_.minCoeff(); }

    CostParams cost_params() const { return CostParams(alpha_, beta_, gamma_); }

    /// Support threshold guarding float noise in hard-threshold solver output.
    double zero_tol() const {
        return 1e-12 * std::max(1.0, std::isfinite(gamma_) ? gamma_ : 1.0);
    }

    /// Discrete L0 measure of the support of u with this problem's zero_tol.
    double support_measure(const GridField& u) const;

    ProblemSpec with_beta(double beta) const {
        ProblemSpec s(*this);
        s.beta_ = beta;
        if (!(beta > 0.0)) throw std::invalid_argument("ProblemSpec: beta must be positive");
        return s;
    }

private:
    Grid grid_;
    Vector kappa_;
    Nonlinearity nonlinearity_;
    TrackingObjective objective_;
    double alpha_;
    double beta_;
    double gamma_;
};

/// Discrete Lebesgue measure of {|u| > zero_tol}.
inline double l0_norm(const GridField& u, double zero_tol) {
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < u.size(); ++i)
        if (std::abs(u[i]) > zero_tol) ++count;
    return static_cast<double>(count) * u.grid().cell_volume();
}

inline double ProblemSpec::support_measure(const GridField& u) const {
    return l0_norm(u, zero_tol());
}

/// Pointwise clamp onto the admissible set [-gamma, gamma]; identity for
/// gamma = inf.
inline GridField uad_project(const GridField& u, double gamma) {
    if (std::isinf(gamma)) return u;
    return GridField(u.grid(), u.values().cwiseMax(-gamma).cwiseMin(gamma));
}

}  // namespace l0control
