#pragma once

#include "l0control/pointwise_cost.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace l0control {

// Brute-force search oracles. They evaluate objectives directly and never
// reuse the closed-form branch logic they are meant to check.

namespace oracle {

/// Golden-section minimization of a unimodal function on [lo, hi].
template <class F>
double golden_min(F&& f, double lo, double hi, int iters = 200) {
    const double gr = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int i = 0; i < iters && b - a > 1e-15 * (1.0 + std::abs(a) + std::abs(b)); ++i) {
        if (f1 <= f2) {
            b = x2; x2 = x1; f2 = f1;
            x1 = b - gr * (b - a); f1 = f(x1);
        } else {
            a = x1; x1 = x2; f1 = f2;
            x2 = a + gr * (b - a); f2 = f(x2);
        }
    }
    return f1 <= f2 ? x1 : x2;
}

struct SearchResult {
    double value;
    std::vector<double> minimizers;
    double grid_best_value;   ///< best value seen on the raw grid scan
    double grid_best_point;
};

/// Minimize a quadratic-plus-jump objective q(u) + beta [u != 0] over
/// [lo, hi]: exhaustive grid scan, golden refinement of the smooth part, and
/// the explicit candidates {0, lo, hi}. Near-ties are reported as sets.
template <class F>
SearchResult grid_candidate_search(F&& smooth, double beta, double lo, double hi,
                                   long grid_points) {
    const auto full = [&](double u) { return smooth(u) + (u != 0.0 ? beta : 0.0); };
    // Blocked scan tracking the best block, then a rescan of the winner.
    const long m = grid_points;
    const double du = (hi - lo) / static_cast<double>(m - 1);
    double best = kInf;
    long best_block = 0;
    const long block = 4096;
    for (long b0 = 0; b0 < m; b0 += block) {
        const long b1 = std::min(m, b0 + block);
        double bmin = kInf;
        for (long i = b0; i < b1; ++i) {
            const double u = lo + du * static_cast<double>(i);
            const double f = smooth(u);
            if (f < bmin) bmin = f;
        }
        if (bmin < best) {
            best = bmin;
            best_block = b0;
        }
    }
    double gbest = kInf, gpoint = 0.0;
    for (long i = best_block; i < std::min(m, best_block + block); ++i) {
        const double u = lo + du * static_cast<double>(i);
        const double f = smooth(u);
        if (f < gbest) {
            gbest = f;
            gpoint = u;
        }
    }
    std::vector<double> candidates{0.0, lo, hi, gpoint,
                                   golden_min(smooth, std::max(lo, gpoint - 2 * du),
                                              std::min(hi, gpoint + 2 * du))};
    SearchResult out;
    out.grid_best_value = gbest + beta;
    out.grid_best_point = gpoint;
    out.value = kInf;
    for (double c : candidates) out.value = std::min(out.value, full(c));
    const double tol = 1e-12 * std::max(1.0, std::abs(out.value));
    for (double c : candidates) {
        if (full(c) > out.value + tol) continue;
        bool dup = false;
        for (double m2 : out.minimizers)
            if (std::abs(m2 - c) <= 1e-9 * (1.0 + std::abs(c))) dup = true;
        if (!dup) out.minimizers.push_back(c);
    }
    return out;
}

/// Brute-force global minimizers of u -> phi u + alpha/2 u^2 + beta |u|_0
/// over [-gamma, gamma] (bounded search window for gamma = inf).
inline SearchResult hamiltonian_search(double phi, const CostParams& p, long grid_points) {
    double lo, hi;
    if (std::isfinite(p.gamma)) {
        lo = -p.gamma;
        hi = p.gamma;
    } else {
        const double r = std::abs(phi) / p.alpha + 1.0;
        lo = -r;
        hi = r;
    }
    const auto smooth = [&](double u) { return phi * u + 0.5 * p.alpha * u * u; };
    return grid_candidate_search(smooth, p.beta, lo, hi, grid_points);
}

/// Brute-force minimizers of (v - w)^2 / (2t) + alpha/2 v^2 + beta |v|_0
/// over [-gamma, gamma].
inline SearchResult prox_l0_search(double w, double t, const CostParams& p, long grid_points) {
    const double r = std::isfinite(p.gamma) ? p.gamma : std::abs(w) + 1.0;
    const auto smooth = [&](double v) {
        const double d = v - w;
        return d * d / (2.0 * t) + 0.5 * p.alpha * v * v;
    };
    return grid_candidate_search(smooth, p.beta, -r, r, grid_points);
}

/// Brute-force minimizer of (v - w)^2 / (2t) + g(v) over [-gamma, gamma];
/// the objective is convex, so golden section applies directly.
inline double prox_envelope_search(double w, double t, const CostParams& p) {
    const double r = std::isfinite(p.gamma)
                         ? p.gamma
                         : std::abs(w) + p.kink + 1.0;
    const auto f = [&](double v) {
        const double d = v - w;
        return d * d / (2.0 * t) + envelope_cost(v, p);
    };
    double v = golden_min(f, -r, r, 300);
    // Snap near-zero results: the kink at 0 attracts the minimizer exactly.
    if (std::abs(v) < 1e-11 && f(0.0) <= f(v)) return 0.0;
    return v;
}

}  // namespace oracle
}  // namespace l0control
