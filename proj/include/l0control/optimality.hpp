#pragma once

#include "l0control/functionals.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace l0control {

// Equality tolerances for classifying solver output against the first-order
// thresholds: looser than the solver tolerance, tighter than any tau.
inline constexpr double kTieTol = 1e-9;       ///< |phi| against sqrt(2 alpha beta)
inline constexpr double kBoundTol = 1e-12;    ///< relative, u against +-gamma

inline double stationarity_eq_tol(const GridField& phi) {
    return 1e-8 * (1.0 + linf_norm(phi));
}

enum class NodeTag : std::uint8_t { free_dir = 0, zero_forced, nonneg_forced, nonpos_forced };

enum class ConeKind {
    tangent,      ///< tangent cone of the box constraint at ubar
    critical,     ///< first-order critical cone of the nonsmooth problem
    critical_pc,  ///< critical cone of the partially convexified problem
    tau_active    ///< tau-extended cone: zero where first-order slack >= tau
};

inline std::string to_string(ConeKind k) {
    switch (k) {
        case ConeKind::tangent: return "tangent";
        case ConeKind::critical: return "critical";
        case ConeKind::critical_pc: return "critical-pc";
        case ConeKind::tau_active: return "tau-active";
    }
    return "?";
}

inline std::string to_string(NodeTag t) {
    switch (t) {
        case NodeTag::free_dir: return "free";
        case NodeTag::zero_forced: return "zero";
        case NodeTag::nonneg_forced: return "nonneg";
        case NodeTag::nonpos_forced: return "nonpos";
    }
    return "?";
}

/// Per-node direction constraints of a critical cone.
struct ConeMask {
    ConeKind kind;
    double tau = 0.0;
    std::vector<NodeTag> tags;

    Eigen::Index free_count() const {
        Eigen::Index n = 0;
        for (NodeTag t : tags)
            if (t != NodeTag::zero_forced) ++n;
        return n;
    }

    bool contains(const GridField& v, double tol = 1e-12) const {
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            switch (tags[i]) {
                case NodeTag::free_dir: break;
                case NodeTag::zero_forced:
                    if (std::abs(v[i]) > tol) return false;
                    break;
                case NodeTag::nonneg_forced:
                    if (v[i] < -tol) return false;
                    break;
                case NodeTag::nonpos_forced:
                    if (v[i] > tol) return false;
                    break;
            }
        }
        return true;
    }

    /// Project a field onto the cone: zero out forbidden nodes, fold signs.
    GridField project(const GridField& v) const {
        Vector out = v.values();
        for (Eigen::Index i = 0; i < out.size(); ++i) {
            switch (tags[i]) {
                case NodeTag::free_dir: break;
                case NodeTag::zero_forced: out[i] = 0.0; break;
                case NodeTag::nonneg_forced: out[i] = std::abs(out[i]); break;
                case NodeTag::nonpos_forced: out[i] = -std::abs(out[i]); break;
            }
        }
        return GridField(v.grid(), std::move(out));
    }
};

namespace detail {

inline NodeTag merge_tags(NodeTag a, NodeTag b) {
    if (a == b) return a;
    if (a == NodeTag::free_dir) return b;
    if (b == NodeTag::free_dir) return a;
    return NodeTag::zero_forced;  // zero dominates; opposite signs intersect to zero
}

inline bool at_bound(double u, double gamma, int side) {
    if (!std::isfinite(gamma)) return false;
    return std::abs(u - side * gamma) <= kBoundTol * std::max(1.0, gamma);
}

}  // namespace detail

/// Build the per-node constraint mask of the requested cone from a cache at
/// a (near-)stationary control.
inline ConeMask build_cone(const ProblemSpec& spec, const EvalCache& cache, ConeKind kind,
                           double tau = 0.0) {
    const CostParams p = spec.cost_params();
    const Eigen::Index n = cache.u.size();
    const double gamma = spec.gamma();
    const double thr = p.adjoint_threshold;
    if (kind == ConeKind::tau_active) {
        if (!(tau > 0.0)) throw std::invalid_argument("build_cone: tau must be positive");
        if (!(tau < thr))
            throw std::invalid_argument("build_cone: tau must be below sqrt(2 alpha beta)");
    }
    if ((kind == ConeKind::critical_pc || kind == ConeKind::tau_active) && !p.interior_kink())
        throw std::domain_error("build_cone: cone requires the interior-kink regime");

    ConeMask mask{kind, tau, std::vector<NodeTag>(n, NodeTag::free_dir)};
    const double eq_tol = stationarity_eq_tol(cache.phi);
    for (Eigen::Index i = 0; i < n; ++i) {
        NodeTag t = NodeTag::free_dir;
        // Tangent-cone baseline at the box bounds.
        if (detail::at_bound(cache.u[i], gamma, -1)) t = NodeTag::nonneg_forced;
        else if (detail::at_bound(cache.u[i], gamma, +1)) t = NodeTag::nonpos_forced;
        const double phi = cache.phi[i];
        const double aphi = std::abs(phi);
        const bool u_zero = std::abs(cache.u[i]) <= spec.zero_tol();
        switch (kind) {
            case ConeKind::tangent:
                break;
            case ConeKind::critical:
                if (u_zero || std::abs(phi + spec.alpha() * cache.u[i]) > eq_tol)
                    t = NodeTag::zero_forced;
                break;
            case ConeKind::critical_pc:
                if (aphi < thr - kTieTol) t = NodeTag::zero_forced;
                else if (u_zero && std::abs(phi - thr) <= kTieTol)
                    t = detail::merge_tags(t, NodeTag::nonpos_forced);
                else if (u_zero && std::abs(phi + thr) <= kTieTol)
                    t = detail::merge_tags(t, NodeTag::nonneg_forced);
                if (std::isfinite(gamma) && aphi > spec.alpha() * gamma + kTieTol)
                    t = NodeTag::zero_forced;
                break;
            case ConeKind::tau_active:
                if (aphi <= thr - tau) t = NodeTag::zero_forced;
                else if (std::isfinite(gamma) && aphi >= spec.alpha() * gamma + tau)
                    t = NodeTag::zero_forced;
                else {
                    if (u_zero && std::abs(phi - thr) <= kTieTol)
                        t = detail::merge_tags(t, NodeTag::nonpos_forced);
                    else if (u_zero && std::abs(phi + thr) <= kTieTol)
                        t = detail::merge_tags(t, NodeTag::nonneg_forced);
                }
                break;
        }
        mask.tags[i] = t;
    }
    return mask;
}

/// Residual of the pointwise maximum principle. The tracking term cancels in
/// the Hamiltonian difference, so only the control part enters.
struct PMPReport {
    double max_residual = 0.0;
    Vector residual;
    std::vector<HamiltonianCase> cases;
    Eigen::Index sparsity_violations = 0;
    double tie_measure = 0.0;

    json to_json() const {
        json histogram = json::object();
        for (HamiltonianCase c : cases) {
            std::string k = to_string(c);
            histogram[k] = histogram.value(k, 0) + 1;
        }
        return json{{"max_residual", max_residual},
                    {"sparsity_violations", sparsity_violations},
                    {"tie_measure", tie_measure},
                    {"case_histogram", histogram}};
    }
};

struct SparsityReport {
    Eigen::Index violations = 0;
    std::vector<Eigen::Index> locations;

    json to_json() const {
        return json{{"violations", violations}, {"locations", locations}};
    }
};

/// Node-wise check of the support structure implied by the maximum
/// principle: small |phi| forces u = 0, and nonzero u is bounded away from
/// zero (alpha > 0) or sits at the bound (alpha = 0).
inline SparsityReport check_sparsity_structure(const ProblemSpec& spec, const EvalCache& cache) {
    const CostParams p = spec.cost_params();
    SparsityReport rep;
    const double ztol = spec.zero_tol();
    for (Eigen::Index i = 0; i < cache.u.size(); ++i) {
        const double u = cache.u[i];
        const double aphi = std::abs(cache.phi[i]);
        const bool nonzero = std::abs(u) > ztol;
        bool bad = false;
        if (p.alpha > 0.0) {
            if (aphi < p.adjoint_threshold - kTieTol && nonzero) bad = true;
            const double lo = std::min(p.kink, p.gamma);
            if (nonzero && std::abs(u) < lo - kTieTol * std::max(1.0, lo)) bad = true;
        } else {
            if (aphi < p.beta / p.gamma - kTieTol && nonzero) bad = true;
            if (nonzero && std::abs(std::abs(u) - p.gamma) > kTieTol * std::max(1.0, p.gamma))
                bad = true;
        }
        if (bad) {
            ++rep.violations;
            rep.locations.push_back(i);
        }
    }
    return rep;
}

inline PMPReport pmp_residual(const ProblemSpec& spec, const EvalCache& cache) {
    const CostParams p = spec.cost_params();
    const Eigen::Index n = cache.u.size();
    PMPReport rep;
    rep.residual = Vector::Zero(n);
    rep.cases.resize(n, HamiltonianCase::zero);
    const double ztol = spec.zero_tol();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double phi = cache.phi[i];
        ScalarCaseResult r = hamiltonian_argmin(phi, p);
        const double best = hamiltonian_control_part(phi, r.minimizers.front(), p);
        const double value = hamiltonian_control_part(phi, cache.u[i], p, ztol);
        rep.residual[i] = std::max(0.0, value - best);
        rep.cases[i] = r.label;
        if (std::abs(std::abs(phi) - p.adjoint_threshold) <= kTieTol)
            rep.tie_measure += spec.grid().cell_volume();
    }
    rep.max_residual = linf_norm(rep.residual);
    rep.sparsity_violations = check_sparsity_structure(spec, cache).violations;
    return rep;
}

/// Discrete surrogate of the sparsity threshold beta*: with M = ||phi_0||_inf
/// at the zero control, any beta above it makes u = 0 stationary with margin.
inline double beta_star(const ProblemSpec& spec, const EvalCache& cache_at_zero) {
    const double M = linf_norm(cache_at_zero.phi);
    if (spec.alpha() > 0.0) return M * M / (2.0 * spec.alpha());
    return spec.gamma() * M;
}

struct PcStationarityReport {
    double max_residual = 0.0;
    Vector residual;

    json to_json() const { return json{{"max_residual", max_residual}}; }
};

/// Violation of the pointwise variational inequality of the convexified
/// problem: per node the worst of phi v + g'(u; v) < 0 over admissible unit
/// directions.
inline PcStationarityReport pc_stationarity_residual(const ProblemSpec& spec,
                                                     const EvalCache& cache) {
    const CostParams p = spec.cost_params();
    const Eigen::Index n = cache.u.size();
    PcStationarityReport rep;
    rep.residual = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = cache.u[i];
        const double phi = cache.phi[i];
        double worst = 0.0;
        if (!detail::at_bound(u, spec.gamma(), +1))
            worst = std::max(worst, -(phi + envelope_dir1(u, 1.0, p)));
        if (!detail::at_bound(u, spec.gamma(), -1))
            worst = std::max(worst, -(-phi + envelope_dir1(u, -1.0, p)));
        rep.residual[i] = worst;
    }
    rep.max_residual = linf_norm(rep.residual);
    return rep;
}

/// Node-wise verification of the solution structure of the convexified
/// problem in the interior-kink regime: the four adjoint-threshold
/// implications, the tie-set measure, and (when that measure vanishes) the
/// support lower bound |u| >= s.
struct PcStructureReport {
    Eigen::Index small_phi_violations = 0;   ///< |phi| < thr but u != 0
    Eigen::Index tie_interval_violations = 0;///< phi = +-thr but u outside [0, +-s]
    Eigen::Index projection_violations = 0;  ///< |phi| > thr but u != clamp(-phi/alpha)
    double max_projection_error = 0.0;
    double tie_measure = 0.0;
    Eigen::Index support_bound_violations = 0;
    bool tie_set_empty = false;

    Eigen::Index total() const {
        return small_phi_violations + tie_interval_violations + projection_violations +
               support_bound_violations;
    }

    json to_json() const {
        return json{{"small_phi_violations", small_phi_violations},
                    {"tie_interval_violations", tie_interval_violations},
                    {"projection_violations", projection_violations},
                    {"max_projection_error", max_projection_error},
                    {"tie_measure", tie_measure},
                    {"tie_set_empty", tie_set_empty},
                    {"support_bound_violations", support_bound_violations}};
    }
};

inline PcStructureReport check_pc_structure(const ProblemSpec& spec, const EvalCache& cache) {
    const CostParams p = spec.cost_params();
    if (!p.interior_kink())
        throw std::domain_error("check_pc_structure: requires the interior-kink regime");
    PcStructureReport rep;
    const double ztol = spec.zero_tol();
    const double proj_tol = 1e-8 * std::max(1.0, p.gamma);
    for (Eigen::Index i = 0; i < cache.u.size(); ++i) {
        const double u = cache.u[i];
        const double phi = cache.phi[i];
        const double aphi = std::abs(phi);
        if (aphi < p.adjoint_threshold - kTieTol) {
            if (std::abs(u) > ztol) ++rep.small_phi_violations;
        } else if (std::abs(aphi - p.adjoint_threshold) <= kTieTol) {
            rep.tie_measure += spec.grid().cell_volume();
            const double lo = phi < 0.0 ? -ztol : -p.kink - proj_tol;
            const double hi = phi < 0.0 ? p.kink + proj_tol : ztol;
            if (u < lo || u > hi) ++rep.tie_interval_violations;
        } else {
            const double proj = std::clamp(-phi / p.alpha, -p.gamma, p.gamma);
            const double err = std::abs(u - proj);
            rep.max_projection_error = std::max(rep.max_projection_error, err);
            if (err > proj_tol) ++rep.projection_violations;
        }
    }
    rep.tie_set_empty = rep.tie_measure == 0.0;
    if (rep.tie_set_empty) {
        for (Eigen::Index i = 0; i < cache.u.size(); ++i) {
            const double au = std::abs(cache.u[i]);
            if (au > ztol && au < p.kink - 1e-9 * std::max(1.0, p.kink))
                ++rep.support_bound_violations;
        }
    }
    return rep;
}

/// Membership test for the tau-slack cone: F'(ubar)v + G'(ubar; v) against
/// tau ||z_v||.
struct SlackConeResult {
    bool member;
    double margin;       ///< tau ||z_v|| - first-order term
    double first_order;  ///< <phi, v> + G'(ubar; v)
    double z_norm;
};

inline SlackConeResult in_slack_cone(const PdeSystem& sys, const EvalCache& cache,
                                     const GridField& v, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("in_slack_cone: tau must be positive");
    const double fo = inner(cache.phi, v) + G_dir1(sys.spec().cost_params(), cache.u, v);
    const double zn = l2_norm(sys.grid(), sys.factorize(cache.y).solve(v.values()));
    return {fo <= tau * zn + 1e-14, tau * zn - fo, fo, zn};
}

/// First-order growth off the tau-active cone: on the set where a tangent
/// direction w violates the cone's pointwise conditions,
/// F'(ubar)w + G'(ubar; w) >= tau ||w||_{L1} holds at stationary points.
struct FirstOrderGrowthReport {
    double lhs;            ///< F'(ubar)w + G'(ubar; w)
    double rhs;            ///< tau ||w||_{L1(violating set)}
    double slack;          ///< lhs - rhs
    double omega_measure;  ///< measure of the violating set

    json to_json() const {
        return json{{"lhs", lhs}, {"rhs", rhs}, {"slack", slack}, {"omega_measure", omega_measure}};
    }
};

inline FirstOrderGrowthReport first_order_growth_bound(const ProblemSpec& spec,
                                                       const EvalCache& cache, const GridField& w,
                                                       double tau) {
    const CostParams p = spec.cost_params();
    if (!p.interior_kink())
        throw std::domain_error("first_order_growth_bound: requires the interior-kink regime");
    if (!(tau > 0.0) || !(tau < p.adjoint_threshold))
        throw std::invalid_argument("first_order_growth_bound: need 0 < tau < sqrt(2 alpha beta)");
    const double thr = p.adjoint_threshold;
    const double vol = spec.grid().cell_volume();
    const double ztol = spec.zero_tol();
    FirstOrderGrowthReport rep{0.0, 0.0, 0.0, 0.0};
    double w_l1_omega = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double phi = cache.phi[i];
        const double aphi = std::abs(phi);
        const bool u_zero = std::abs(cache.u[i]) <= ztol;
        const bool wi_nonzero = w[i] != 0.0;
        bool in_omega = false;
        if (u_zero && std::abs(phi + thr) <= kTieTol && w[i] < 0.0) in_omega = true;
        if (u_zero && std::abs(phi - thr) <= kTieTol && w[i] > 0.0) in_omega = true;
        if (wi_nonzero && (aphi <= thr - tau ||
                           (std::isfinite(spec.gamma()) &&
                            aphi >= spec.alpha() * spec.gamma() + tau)))
            in_omega = true;
        if (in_omega) {
            rep.omega_measure += vol;
            w_l1_omega += std::abs(w[i]) * vol;
        }
    }
    rep.lhs = inner(cache.phi, w) + G_dir1(p, cache.u, w);
    rep.rhs = tau * w_l1_omega;
    rep.slack = rep.lhs - rep.rhs;
    return rep;
}

// --- Cone CSV export: node, tag. ---
inline void write_cone_csv(const std::string& path, const ConeMask& mask) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "index,tag\n";
    for (std::size_t i = 0; i < mask.tags.size(); ++i)
        out << i << ',' << to_string(mask.tags[i]) << '\n';
}

/// Draw a random direction inside the cone (uniform per node, folded onto
/// the sign constraints, zeroed where forced).
inline GridField random_cone_direction(const ConeMask& mask, const Grid& grid,
                                       std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Vector v(grid.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double x = unif(rng);
        switch (mask.tags[i]) {
            case NodeTag::free_dir: v[i] = x; break;
            case NodeTag::zero_forced: v[i] = 0.0; break;
            case NodeTag::nonneg_forced: v[i] = std::abs(x); break;
            case NodeTag::nonpos_forced: v[i] = -std::abs(x); break;
        }
    }
    return GridField(grid, std::move(v));
}

}  // namespace l0control
