#pragma once

#include "l0control/pde.hpp"
#include "l0control/report.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace l0control {

/// One evaluation of the objective at a control u: state, adjoint and all
/// cost pieces. Immutable after construction.
struct EvalCache {
    GridField u;
    GridField y;
    GridField phi;
    double F;         ///< tracking term
    double l2_term;   ///< alpha/2 ||u||^2
    double l0_term;   ///< beta ||u||_0
    double G;         ///< envelope term
    double J;         ///< F + l2_term + l0_term
    double J_pc;      ///< F + G
    int newton_iterations;
    double state_residual;
};

// --- Envelope functionals: node-wise application, midpoint quadrature. ---

inline double eval_G(const CostParams& p, const GridField& u) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) s += envelope_cost(u[i], p);
    return s * u.grid().cell_volume();
}

inline double G_dir1(const CostParams& p, const GridField& u, const GridField& v) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) s += envelope_dir1(u[i], v[i], p);
    return s * u.grid().cell_volume();
}

inline double G_dir2(const CostParams& p, const GridField& u, const GridField& v) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) s += envelope_dir2(u[i], v[i], p);
    return s * u.grid().cell_volume();
}

inline double G_tilde(const CostParams& p, const GridField& u, const GridField& v) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) s += envelope_restricted_quad(u[i], v[i], p);
    return s * u.grid().cell_volume();
}

/// Integrated Taylor remainder of G, summed node-wise so that unaffected
/// nodes cancel exactly.
inline double G_taylor_remainder(const CostParams& p, const GridField& u, const GridField& h) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) s += envelope_taylor_remainder(u[i], h[i], p);
    return s * u.grid().cell_volume();
}

/// Solve state and adjoint at u and integrate every objective piece.
inline EvalCache evaluate(const PdeSystem& sys, const GridField& u,
                          const NewtonSettings& settings = {}) {
    const ProblemSpec& spec = sys.spec();
    StateSolution st = sys.solve_state(u, settings);
    GridField phi = sys.solve_adjoint(st.y);
    const double vol = sys.grid().cell_volume();
    double F = 0.0;
    for (Eigen::Index i = 0; i < st.y.size(); ++i)
        F += spec.objective().value(i, st.y[i]);
    F *= vol;
    const double l2_term = 0.5 * spec.alpha() * inner(u, u);
    const double l0_term = spec.beta() * spec.support_measure(u);
    const double G = eval_G(spec.cost_params(), u);
    return {u, std::move(st.y), std::move(phi), F,      l2_term,
            l0_term, G, F + l2_term + l0_term, F + G, st.iterations, st.residual};
}

/// Riesz representative of F'(u): the adjoint state.
inline const GridField& grad_F(const EvalCache& cache) { return cache.phi; }

/// Bilinear Hessian form F''(u)(v1, v2) = ∫ (L_yy - phi a_yy) z_{v1} z_{v2} dx,
/// evaluated with two linearized solves sharing one factorization.
inline double hess_F_apply(const PdeSystem& sys, const EvalCache& cache, const GridField& v1,
                           const GridField& v2) {
    LinearizedFactor K = sys.factorize(cache.y);
    Vector z1 = K.solve(v1.values());
    Vector z2 = K.solve(v2.values());
    const Nonlinearity& a = sys.spec().nonlinearity();
    double s = 0.0;
    for (Eigen::Index i = 0; i < z1.size(); ++i) {
        const double c = TrackingObjective::dyy() - cache.phi[i] * a.dyy(i, cache.y[i]);
        s += c * z1[i] * z2[i];
    }
    return s * sys.grid().cell_volume();
}

/// Curvature coefficient field L_yy - phi a_yy at a cache point.
inline Vector hessian_weight(const PdeSystem& sys, const EvalCache& cache) {
    const Nonlinearity& a = sys.spec().nonlinearity();
    Vector c(cache.y.size());
    for (Eigen::Index i = 0; i < c.size(); ++i)
        c[i] = TrackingObjective::dyy() - cache.phi[i] * a.dyy(i, cache.y[i]);
    return c;
}

namespace detail {

inline GridField random_direction(const Grid& grid, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Vector d(grid.size());
    do {
        for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = unif(rng);
    } while (l2_norm(grid, d) == 0.0);
    d /= l2_norm(grid, d);
    return GridField(grid, std::move(d));
}

}  // namespace detail

/// Sample the ratio ||F'(u) - F'(ubar)|| / ||z_{u - ubar}|| over random
/// (direction, radius) pairs in the L2 ball. Diagnostic only.
inline json probe_lipschitz_F1(const PdeSystem& sys, const GridField& ubar, double radius,
                               int trials, std::mt19937_64& rng,
                               const NewtonSettings& settings = {}) {
    if (trials < 1) throw std::invalid_argument("probe_lipschitz_F1: trials must be >= 1");
    EvalCache base = evaluate(sys, ubar, settings);
    LinearizedFactor K = sys.factorize(base.y);
    std::uniform_real_distribution<double> unif01(0.0, 1.0);
    json ratios = json::array();
    double max_ratio = 0.0;
    for (int t = 0; t < trials; ++t) {
        GridField d = detail::random_direction(sys.grid(), rng);
        const double r = radius * (1.0 - unif01(rng) * 0.999);
        GridField u(sys.grid(), ubar.values() + r * d.values());
        EvalCache c = evaluate(sys, u, settings);
        Vector diff = u.values() - ubar.values();
        const double zn = l2_norm(sys.grid(), K.solve(diff));
        if (zn == 0.0) continue;
        const double ratio = l2_norm(sys.grid(), c.phi.values() - base.phi.values()) / zn;
        ratios.push_back(ratio);
        max_ratio = std::max(max_ratio, ratio);
    }
    return json{{"radius", radius},
                {"trials", trials},
                {"max_ratio", max_ratio},
                {"unbounded_flag", max_ratio > 1e6},
                {"ratios", ratios}};
}

/// Sample |(F''(u) - F''(ubar))(u - ubar)^2| / ||z_{u - ubar}||^2; the ratio
/// shrinks with the radius when the Hessian is continuous at ubar.
inline json probe_hess_continuity(const PdeSystem& sys, const GridField& ubar, double radius,
                                  int trials, std::mt19937_64& rng,
                                  const NewtonSettings& settings = {}) {
    if (trials < 1) throw std::invalid_argument("probe_hess_continuity: trials must be >= 1");
    EvalCache base = evaluate(sys, ubar, settings);
    LinearizedFactor K = sys.factorize(base.y);
    std::uniform_real_distribution<double> unif01(0.0, 1.0);
    json ratios = json::array();
    double max_ratio = 0.0;
    for (int t = 0; t < trials; ++t) {
        GridField d = detail::random_direction(sys.grid(), rng);
        const double r = radius * (1.0 - unif01(rng) * 0.999);
        GridField u(sys.grid(), ubar.values() + r * d.values());
        GridField step(sys.grid(), u.values() - ubar.values());
        EvalCache c = evaluate(sys, u, settings);
        const double zn = l2_norm(sys.grid(), K.solve(step.values()));
        if (zn == 0.0) continue;
        const double hu = hess_F_apply(sys, c, step, step);
        const double hb = hess_F_apply(sys, base, step, step);
        const double ratio = std::abs(hu - hb) / (zn * zn);
        ratios.push_back(ratio);
        max_ratio = std::max(max_ratio, ratio);
    }
    return json{{"radius", radius},
                {"trials", trials},
                {"max_ratio", max_ratio},
                {"ratios", ratios}};
}

}  // namespace l0control
