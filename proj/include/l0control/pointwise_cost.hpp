#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace l0control {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class CostRegime {
    interior_kink,  ///< alpha > 0 and sqrt(2 beta / alpha) < gamma
    l1              ///< envelope degenerates to a multiple of |u|
};

/// Parameters of the pointwise control cost alpha/2 u^2 + beta |u|_0 on
/// [-gamma, gamma], together with the derived thresholds of its convex
/// envelope.
struct CostParams {
    double alpha;
    double beta;
    double gamma;
    double kink;               ///< s = sqrt(2 beta / alpha); +inf when alpha = 0
    double adjoint_threshold;  ///< sqrt(2 alpha beta)
    double bang_threshold;     ///< alpha gamma / 2 + beta / gamma; +inf when gamma = inf
    CostRegime regime;

    CostParams(double alpha_, double beta_, double gamma_)
        : alpha(alpha_), beta(beta_), gamma(gamma_) {
        if (!(beta > 0.0)) throw std::invalid_argument("CostParams: beta must be positive");
        if (alpha < 0.0) throw std::invalid_argument("CostParams: alpha must be nonnegative");
        if (!(gamma > 0.0)) throw std::invalid_argument("CostParams: gamma must be positive");
        if (alpha == 0.0 && std::isinf(gamma))
            throw std::invalid_argument("CostParams: gamma must be finite when alpha = 0");
        kink = alpha > 0.0 ? std::sqrt(2.0 * beta / alpha) : kInf;
        adjoint_threshold = std::sqrt(2.0 * alpha * beta);
        bang_threshold = std::isinf(gamma) ? kInf : 0.5 * alpha * gamma + beta / gamma;
        regime = (alpha > 0.0 && kink < gamma) ? CostRegime::interior_kink : CostRegime::l1;
        if (alpha > 0.0 && std::isfinite(gamma)) {
            // bang_threshold - adjoint_threshold = (sqrt(alpha gamma) - sqrt(2 beta / gamma))^2 / 2
            const double lhs = bang_threshold - adjoint_threshold;
            const double d = std::sqrt(alpha * gamma) - std::sqrt(2.0 * beta / gamma);
            const double rhs = 0.5 * d * d;
            if (std::abs(lhs - rhs) > 1e-10 * std::max(1.0, std::abs(lhs)))
                throw std::logic_error("CostParams: threshold identity violated");
        }
    }

    bool interior_kink() const { return regime == CostRegime::interior_kink; }
};

namespace detail {

inline double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

enum class KinkSide { below, at, above };

/// Classify |u| against the kink s with relative tolerance 1e-12*s.
inline KinkSide kink_side(double abs_u, const CostParams& p) {
    const double tol = 1e-12 * p.kink;
    if (abs_u > p.kink + tol) return KinkSide::above;
    if (abs_u < p.kink - tol) return KinkSide::below;
    return KinkSide::at;
}

inline void require_interior_kink(const CostParams& p, const char* op) {
    if (!p.interior_kink())
        throw std::domain_error(std::string(op) + ": requires the interior-kink regime");
}

}  // namespace detail

/// Pointwise integrand of the nonsmooth cost: alpha/2 u^2 + beta [u != 0].
inline double l0_cost(double u, const CostParams& p) {
    return 0.5 * p.alpha * u * u + (u != 0.0 ? p.beta : 0.0);
}

/// Convex envelope of l0_cost on [-gamma, gamma].
inline double envelope_cost(double u, const CostParams& p) {
    const double au = std::abs(u);
    if (p.interior_kink()) {
        if (au >= p.kink) return 0.5 * p.alpha * u * u + p.beta;
        return p.adjoint_threshold * au;
    }
    return p.bang_threshold * au;
}

/// Directional derivative of the envelope at u in direction v.
inline double envelope_dir1(double u, double v, const CostParams& p) {
    if (p.interior_kink()) {
        const double au = std::abs(u);
        if (au >= p.kink) return p.alpha * u * v;
        if (u != 0.0) return p.adjoint_threshold * detail::sgn(u) * v;
        return p.adjoint_threshold * std::abs(v);
    }
    if (u != 0.0) return p.bang_threshold * detail::sgn(u) * v;
    return p.bang_threshold * std::abs(v);
}

/// One-sided second directional derivative of the envelope: alpha h^2 on the
/// quadratic branch (with the outward one-sided cases at |u| = s), else 0.
inline double envelope_dir2(double u, double h, const CostParams& p) {
    detail::require_interior_kink(p, "envelope_dir2");
    switch (detail::kink_side(std::abs(u), p)) {
        case detail::KinkSide::above:
            return p.alpha * h * h;
        case detail::KinkSide::at:
            if ((u > 0.0 && h >= 0.0) || (u < 0.0 && h <= 0.0)) return p.alpha * h * h;
            return 0.0;
        case detail::KinkSide::below:
            return 0.0;
    }
    return 0.0;
}

/// Sign-restricted quadratic lower surrogate of the envelope curvature:
/// alpha v^2 where |u| >= s and sign(v) = sign(u), else 0.
inline double envelope_restricted_quad(double u, double v, const CostParams& p) {
    detail::require_interior_kink(p, "envelope_restricted_quad");
    if (v == 0.0 || u == 0.0) return 0.0;
    if (detail::kink_side(std::abs(u), p) == detail::KinkSide::below) return 0.0;
    return detail::sgn(v) == detail::sgn(u) ? p.alpha * v * v : 0.0;
}

/// Second-order Taylor remainder of the envelope:
/// g(u+h) - g(u) - g'(u;h) - g''(u;h^2)/2.
inline double envelope_taylor_remainder(double u, double h, const CostParams& p) {
    detail::require_interior_kink(p, "envelope_taylor_remainder");
    return envelope_cost(u + h, p) - envelope_cost(u, p) - envelope_dir1(u, h, p) -
           0.5 * envelope_dir2(u, h, p);
}

/// Lower bound of the Taylor remainder: 0 on |u| <= s, and
/// -alpha/2 [(s - |u+h|)_+]^2 on the quadratic branch.
inline double remainder_lower_bound(double u, double h, const CostParams& p) {
    detail::require_interior_kink(p, "remainder_lower_bound");
    if (detail::kink_side(std::abs(u), p) != detail::KinkSide::above) return 0.0;
    const double def = std::max(0.0, p.kink - std::abs(u + h));
    return -0.5 * p.alpha * def * def;
}

enum class HamiltonianCase {
    bang = 1,           ///< |phi| above the bang threshold, u* = -sign(phi) gamma
    bang_tie = 2,       ///< tie between 0 and the bang value
    zero_capped = 3,    ///< |phi| >= alpha gamma but below the bang threshold
    interior = 4,       ///< sqrt(2 alpha beta) < |phi| < alpha gamma, u* = -phi/alpha
    interior_tie = 5,   ///< tie between 0 and -phi/alpha
    zero = 6,           ///< |phi| < sqrt(2 alpha beta)
    a0_neg_bang,        ///< alpha = 0, u* = -gamma
    a0_zero,            ///< alpha = 0, u* = 0
    a0_pos_bang,        ///< alpha = 0, u* = +gamma
    a0_tie              ///< alpha = 0, tie between 0 and a bang value
};

inline std::string to_string(HamiltonianCase c) {
    switch (c) {
        case HamiltonianCase::bang: return "case1";
        case HamiltonianCase::bang_tie: return "case2";
        case HamiltonianCase::zero_capped: return "case3";
        case HamiltonianCase::interior: return "case4";
        case HamiltonianCase::interior_tie: return "case5";
        case HamiltonianCase::zero: return "case6";
        case HamiltonianCase::a0_neg_bang: return "neg-bang";
        case HamiltonianCase::a0_zero: return "zero";
        case HamiltonianCase::a0_pos_bang: return "pos-bang";
        case HamiltonianCase::a0_tie: return "tie";
    }
    return "?";
}

/// Result of the pointwise Hamiltonian minimization: the set of global
/// minimizers (one, or two at a tie) and the active case.
struct ScalarCaseResult {
    std::vector<double> minimizers;
    HamiltonianCase label;
};

/// All global minimizers of u -> phi u + alpha/2 u^2 + beta |u|_0 over
/// [-gamma, gamma]. Ties are detected with relative tolerance 1e-12 and
/// reported as two-element sets.
inline ScalarCaseResult hamiltonian_argmin(double phi, const CostParams& p) {
    const auto tol = [](double x) { return 1e-12 * std::max(1.0, std::abs(x)); };
    const double aphi = std::abs(phi);
    if (p.alpha == 0.0) {
        const double bang = -detail::sgn(phi) * p.gamma;
        const double d = aphi * p.gamma - p.beta;
        if (std::abs(d) <= tol(p.beta)) return {{0.0, bang}, HamiltonianCase::a0_tie};
        if (d > 0.0)
            return {{bang}, bang < 0.0 ? HamiltonianCase::a0_neg_bang : HamiltonianCase::a0_pos_bang};
        return {{0.0}, HamiltonianCase::a0_zero};
    }
    const double ag = p.alpha * p.gamma;  // +inf when gamma = inf
    if (std::isfinite(p.gamma) && aphi >= ag - tol(ag)) {
        const double bang = -detail::sgn(phi) * p.gamma;
        const double d = aphi - p.bang_threshold;
        if (std::abs(d) <= tol(p.bang_threshold)) return {{0.0, bang}, HamiltonianCase::bang_tie};
        if (d > 0.0) return {{bang}, HamiltonianCase::bang};
        return {{0.0}, HamiltonianCase::zero_capped};
    }
    const double d = aphi - p.adjoint_threshold;
    if (std::abs(d) <= tol(p.adjoint_threshold))
        return {{0.0, -phi / p.alpha}, HamiltonianCase::interior_tie};
    if (d > 0.0) return {{-phi / p.alpha}, HamiltonianCase::interior};
    return {{0.0}, HamiltonianCase::zero};
}

/// Objective value phi u + alpha/2 u^2 + beta |u|_0 used by the maximum
/// principle residual (the state-dependent term cancels in differences).
inline double hamiltonian_control_part(double phi, double u, const CostParams& p,
                                       double zero_tol = 0.0) {
    return phi * u + 0.5 * p.alpha * u * u + (std::abs(u) > zero_tol ? p.beta : 0.0);
}

/// All minimizers over [-gamma, gamma] of (v - w)^2 / (2t) + alpha/2 v^2 + beta |v|_0.
/// Compares v = 0 against the clamped quadratic minimizer; ties return both.
inline std::vector<double> prox_l0_cost(double w, double t, const CostParams& p) {
    if (!(t > 0.0)) throw std::invalid_argument("prox_l0_cost: step must be positive");
    double vhat = w / (1.0 + t * p.alpha);
    if (std::isfinite(p.gamma)) vhat = std::clamp(vhat, -p.gamma, p.gamma);
    if (vhat == 0.0) return {0.0};
    const double cost0 = w * w / (2.0 * t);
    const double dv = vhat - w;
    const double costv = dv * dv / (2.0 * t) + 0.5 * p.alpha * vhat * vhat + p.beta;
    const double tol = 1e-12 * std::max(1.0, std::max(std::abs(cost0), std::abs(costv)));
    if (std::abs(cost0 - costv) <= tol) return {0.0, vhat};
    return cost0 < costv ? std::vector<double>{0.0} : std::vector<double>{vhat};
}

/// Unique minimizer over [-gamma, gamma] of (v - w)^2 / (2t) + g(v), where g
/// is the convex envelope. Branch analysis over the smooth pieces of g; the
/// soft-threshold dead zone is |w| <= t sqrt(2 alpha beta).
inline double prox_envelope(double w, double t, const CostParams& p) {
    if (!(t > 0.0)) throw std::invalid_argument("prox_envelope: step must be positive");
    const double aw = std::abs(w);
    const double s = detail::sgn(w);
    if (p.interior_kink()) {
        const double shift = t * p.adjoint_threshold;
        if (aw <= shift) return 0.0;
        if (aw <= p.kink + shift) return s * (aw - shift);
        double v = aw / (1.0 + t * p.alpha);
        if (std::isfinite(p.gamma)) v = std::min(v, p.gamma);
        return s * v;
    }
    const double v = std::max(0.0, aw - t * p.bang_threshold);
    return s * std::min(v, p.gamma);
}

/// Piecewise-linear lower convex hull of sampled points of l0_cost, used as
/// an independent test oracle for envelope_cost. The sample grid is symmetric
/// and contains u = 0 exactly.
struct EnvelopeOracle {
    std::vector<double> u;       ///< sample abscissae
    std::vector<double> value;   ///< hull value at each sample
    std::vector<char> vertex;    ///< 1 if the sample is a hull vertex
};

inline EnvelopeOracle convex_envelope_oracle(const CostParams& p, long samples) {
    if (!std::isfinite(p.gamma))
        throw std::invalid_argument("convex_envelope_oracle: requires finite gamma");
    if (samples < 1000)
        throw std::invalid_argument("convex_envelope_oracle: need at least 1000 samples");
    const long half = samples / 2;
    const double step = p.gamma / static_cast<double>(half);
    EnvelopeOracle out;
    const long n = 2 * half + 1;
    out.u.resize(n);
    out.value.assign(n, 0.0);
    out.vertex.assign(n, 0);
    std::vector<double> y(n);
    for (long i = 0; i < n; ++i) {
        const double u = static_cast<double>(i - half) * step;
        out.u[i] = u;
        y[i] = l0_cost(u, p);
    }
    // Monotone-chain lower hull over points sorted by u; collinear points are dropped.
    std::vector<long> hull;
    for (long i = 0; i < n; ++i) {
        while (hull.size() >= 2) {
            const long a = hull[hull.size() - 2], b = hull[hull.size() - 1];
            const double cross =
                (out.u[b] - out.u[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (out.u[i] - out.u[a]);
            if (cross <= 0.0) hull.pop_back();
            else break;
        }
        hull.push_back(i);
    }
    for (long v : hull) out.vertex[v] = 1;
    std::size_t seg = 0;
    for (long i = 0; i < n; ++i) {
        if (out.vertex[i]) {
            out.value[i] = y[i];
            continue;
        }
        while (seg + 1 < hull.size() && hull[seg + 1] < i) ++seg;
        const long a = hull[seg], b = hull[seg + 1];
        const double t = (out.u[i] - out.u[a]) / (out.u[b] - out.u[a]);
        out.value[i] = y[a] + t * (y[b] - y[a]);
    }
    return out;
}

}  // namespace l0control
