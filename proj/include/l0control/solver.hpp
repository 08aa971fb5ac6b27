#pragma once

#include "l0control/soc.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace l0control {

struct SolverSettings {
    int max_iterations = 2000;
    double tolerance = 1e-8;       ///< stationarity residual at which to stop
    double initial_step = 0.0;     ///< 0: power-iteration estimate of 1/L
    double step_growth = 1.3;
    int cycle_window = 10;
    NewtonSettings newton;
    std::vector<std::uint8_t> restriction;  ///< nonzero entries force u = 0 (reduced problem)
};

enum class SolveStatus { converged, max_iterations, stalled };

inline std::string to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::converged: return "converged";
        case SolveStatus::max_iterations: return "max-iterations";
        case SolveStatus::stalled: return "stalled";
    }
    return "?";
}

struct SolveTrace {
    std::vector<double> objective;       ///< J_pc or J per iteration
    std::vector<double> residual;
    std::vector<double> support;         ///< support measure per iteration
    int iterations = 0;
    double final_residual = 0.0;
    int cycles_detected = 0;
};

struct SolveResult {
    GridField u;
    EvalCache cache;
    SolveTrace trace;
    SolveStatus status;
};

namespace detail {

/// Power-iteration estimate of the squared norm of the control-to-state map
/// in the discrete L2 metric, i.e. the gradient Lipschitz constant of the
/// tracking term for the linearized problem.
inline double gradient_lipschitz_estimate(const PdeSystem& sys, const GridField& y) {
    LinearizedFactor K = sys.factorize(y);
    Vector v = Vector::Ones(sys.grid().size());
    v /= v.norm();
    double lambda = 0.0;
    for (int it = 0; it < 40; ++it) {
        Vector w = K.solve(K.solve(v));
        lambda = v.dot(w);
        const double n = w.norm();
        if (n == 0.0) break;
        v = w / n;
    }
    return std::max(lambda, 1e-14);
}

inline std::size_t support_hash(const Vector& u, double ztol) {
    std::size_t h = 1469598103934665603ull;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        int s = std::abs(u[i]) <= ztol ? 0 : (u[i] > 0 ? 1 : 2);
        h = (h ^ static_cast<std::size_t>(s)) * 1099511628211ull;
    }
    return h;
}

inline void apply_restriction(Vector& u, const std::vector<std::uint8_t>& restriction) {
    if (restriction.empty()) return;
    for (Eigen::Index i = 0; i < u.size(); ++i)
        if (restriction[i]) u[i] = 0.0;
}

}  // namespace detail

/// Proximal-gradient solve of the partially convexified problem
/// min F(u) + G(u) over the admissible box: u <- prox_g(u - t phi_u) with
/// monotone backtracking; the stopping criterion (and certificate) is the
/// pointwise stationarity residual.
inline SolveResult solve_pc(const PdeSystem& sys, const GridField& u0,
                            const SolverSettings& settings = {}) {
    const ProblemSpec& spec = sys.spec();
    const CostParams p = spec.cost_params();
    Vector u = uad_project(u0, spec.gamma()).values();
    detail::apply_restriction(u, settings.restriction);
    EvalCache cache = evaluate(sys, GridField(sys.grid(), u), settings.newton);
    double t = settings.initial_step > 0.0
                   ? settings.initial_step
                   : 1.0 / (1.5 * detail::gradient_lipschitz_estimate(sys, cache.y));
    SolveTrace trace;
    SolveStatus status = SolveStatus::max_iterations;
    for (int it = 0; it < settings.max_iterations; ++it) {
        PcStationarityReport res = pc_stationarity_residual(spec, cache);
        trace.objective.push_back(cache.J_pc);
        trace.residual.push_back(res.max_residual);
        trace.support.push_back(spec.support_measure(cache.u));
        trace.iterations = it;
        trace.final_residual = res.max_residual;
        if (res.max_residual <= settings.tolerance) {
            status = SolveStatus::converged;
            break;
        }
        bool accepted = false;
        for (int bt = 0; bt < 60 && !accepted; ++bt) {
            Vector ut(u.size());
            for (Eigen::Index i = 0; i < u.size(); ++i)
                ut[i] = prox_envelope(u[i] - t * cache.phi[i], t, p);
            detail::apply_restriction(ut, settings.restriction);
            Vector du = ut - u;
            const double dn2 = du.squaredNorm() * sys.grid().cell_volume();
            if (dn2 == 0.0) break;
            EvalCache ct = evaluate(sys, GridField(sys.grid(), ut), settings.newton);
            // Descent-lemma acceptance for the smooth part.
            const double model =
                cache.F + inner(cache.phi, GridField(sys.grid(), du)) + dn2 / (2.0 * t);
            if (ct.F <= model + 1e-12 * (1.0 + std::abs(cache.F))) {
                u = std::move(ut);
                cache = std::move(ct);
                t *= settings.step_growth;
                accepted = true;
            } else {
                t *= 0.5;
            }
        }
        if (!accepted) {
            status = SolveStatus::stalled;
            break;
        }
    }
    return {cache.u, cache, std::move(trace), status};
}

/// Hard-threshold fixed-point iteration on the maximum principle for the
/// nonsmooth problem: u <- prox of the L0 cost at (u - t phi_u), ties broken
/// toward zero, with cycle detection, step adaptation and a pointwise
/// polish step. The output is PMP-stationary, not certified optimal.
inline SolveResult solve_l0(const PdeSystem& sys, const GridField& u0,
                            const SolverSettings& settings = {}) {
    const ProblemSpec& spec = sys.spec();
    const CostParams p = spec.cost_params();
    const double ztol = spec.zero_tol();
    Vector u = uad_project(u0, spec.gamma()).values();
    detail::apply_restriction(u, settings.restriction);
    EvalCache cache = evaluate(sys, GridField(sys.grid(), u), settings.newton);
    double t = settings.initial_step > 0.0
                   ? settings.initial_step
                   : 1.0 / (1.5 * detail::gradient_lipschitz_estimate(sys, cache.y));
    SolveTrace trace;
    SolveStatus status = SolveStatus::max_iterations;
    std::deque<std::size_t> history;
    for (int it = 0; it < settings.max_iterations; ++it) {
        PMPReport res = pmp_residual(spec, cache);
        trace.objective.push_back(cache.J);
        trace.residual.push_back(res.max_residual);
        trace.support.push_back(spec.support_measure(cache.u));
        trace.iterations = it;
        trace.final_residual = res.max_residual;
        // The pointwise-minimization residual is quadratic in the distance to
        // stationarity where the convexified residual is linear; require both
        // so the output certifies the convexified inequality at 10x tolerance.
        if (res.max_residual <= settings.tolerance &&
            pc_stationarity_residual(spec, cache).max_residual <= 10.0 * settings.tolerance) {
            status = SolveStatus::converged;
            break;
        }
        const std::size_t h = detail::support_hash(u, ztol);
        if (std::find(history.begin(), history.end(), h) != history.end() &&
            history.back() != h) {
            ++trace.cycles_detected;
            t *= 0.5;
            history.clear();
        } else {
            history.push_back(h);
            if (static_cast<int>(history.size()) > settings.cycle_window) history.pop_front();
        }
        bool accepted = false;
        for (int bt = 0; bt < 60 && !accepted; ++bt) {
            Vector ut(u.size());
            for (Eigen::Index i = 0; i < u.size(); ++i) {
                std::vector<double> m = prox_l0_cost(u[i] - t * cache.phi[i], t, p);
                // Tie-break toward zero: prefer sparsity.
                ut[i] = m.size() == 2 ? 0.0 : m.front();
            }
            detail::apply_restriction(ut, settings.restriction);
            if ((ut - u).cwiseAbs().maxCoeff() == 0.0) break;
            EvalCache ct = evaluate(sys, GridField(sys.grid(), ut), settings.newton);
            if (ct.J <= cache.J + 1e-12 * (1.0 + std::abs(cache.J))) {
                u = std::move(ut);
                cache = std::move(ct);
                t *= settings.step_growth;
                accepted = true;
            } else {
                t *= 0.5;
            }
        }
        if (!accepted) {
            // Stalled at a prox fixed point that is not yet pointwise optimal:
            // flip the worst maximum-principle violations directly when that
            // lowers the objective.
            std::vector<Eigen::Index> order(u.size());
            std::iota(order.begin(), order.end(), Eigen::Index(0));
            std::sort(order.begin(), order.end(),
                      [&](Eigen::Index a, Eigen::Index b) { return res.residual[a] > res.residual[b]; });
            Vector ut = u;
            bool improved = false;
            for (Eigen::Index k = 0; k < u.size() && res.residual[order[k]] > settings.tolerance;
                 ++k) {
                const Eigen::Index i = order[k];
                ScalarCaseResult r = hamiltonian_argmin(cache.phi[i], p);
                double cand = r.minimizers.size() == 2 ? 0.0 : r.minimizers.front();
                Vector utry = ut;
                utry[i] = cand;
                detail::apply_restriction(utry, settings.restriction);
                EvalCache ct = evaluate(sys, GridField(sys.grid(), utry), settings.newton);
                if (ct.J < cache.J - 1e-14 * (1.0 + std::abs(cache.J))) {
                    ut = std::move(utry);
                    u = ut;
                    cache = std::move(ct);
                    improved = true;
                    break;
                }
            }
            if (!improved) {
                status = SolveStatus::stalled;
                break;
            }
            t = std::max(t, 1.0);
        }
    }
    return {cache.u, cache, std::move(trace), status};
}

/// Solve the convexified problem and test whether its solution transfers to
/// the nonsmooth problem: empty adjoint tie set, node-wise envelope equality
/// and coincidence of the two objective values.
inline json solve_transfer(const PdeSystem& sys, const SolverSettings& settings = {}) {
    const ProblemSpec& spec = sys.spec();
    const CostParams p = spec.cost_params();
    if (!p.interior_kink())
        throw std::domain_error("solve_transfer: requires the interior-kink regime");
    SolveResult r = solve_pc(sys, GridField::zeros(sys.grid()), settings);
    double tie_measure = 0.0;
    double max_envelope_gap = 0.0;
    for (Eigen::Index i = 0; i < r.u.size(); ++i) {
        if (std::abs(std::abs(r.cache.phi[i]) - p.adjoint_threshold) <= kTieTol)
            tie_measure += spec.grid().cell_volume();
        max_envelope_gap = std::max(
            max_envelope_gap, std::abs(envelope_cost(r.u[i], p) - l0_cost(r.u[i], p)));
    }
    const double obj_gap = std::abs(r.cache.J - r.cache.J_pc);
    const bool transfer = tie_measure == 0.0 &&
                          max_envelope_gap <= 1e-12 &&
                          obj_gap <= 1e-12 * std::max(1.0, std::abs(r.cache.J));
    return json{{"solver_status", to_string(r.status)},
                {"residual", r.trace.final_residual},
                {"tie_measure", tie_measure},
                {"max_envelope_gap", max_envelope_gap},
                {"J", r.cache.J},
                {"J_pc", r.cache.J_pc},
                {"objective_gap", obj_gap},
                {"transfer_holds", transfer}};
}

struct SweepRow {
    double beta;
    double beta_star;
    bool above_beta_star;
    double support_l0;
    double support_pc;
    double J;
    double J_pc;
    bool transfer_holds;
    std::string status_l0;
    std::string status_pc;
    std::string error;
};

/// Solve both problems across an increasing beta grid with warm starts and
/// tabulate support, objective values and the transfer verdict per cell.
inline std::vector<SweepRow> sweep_beta(const ProblemSpec& base, const std::vector<double>& betas,
                                        const SolverSettings& settings = {}) {
    if (betas.empty()) throw std::invalid_argument("sweep_beta: beta grid must be nonempty");
    for (std::size_t i = 1; i < betas.size(); ++i)
        if (!(betas[i] > betas[i - 1]))
            throw std::invalid_argument("sweep_beta: beta grid must be increasing");
    std::vector<SweepRow> rows;
    std::optional<GridField> warm_l0, warm_pc;
    for (double beta : betas) {
        SweepRow row{beta, 0.0, false, 0.0, 0.0, 0.0, 0.0, false, "", "", ""};
        try {
            ProblemSpec spec = base.with_beta(beta);
            PdeSystem sys(spec);
            const CostParams p = spec.cost_params();
            EvalCache zero = evaluate(sys, GridField::zeros(spec.grid()), settings.newton);
            row.beta_star = beta_star(spec, zero);
            row.above_beta_star = beta > row.beta_star;
            GridField s0 = warm_l0 ? *warm_l0 : GridField::zeros(spec.grid());
            SolveResult rl0 = solve_l0(sys, s0, settings);
            GridField s1 = warm_pc ? *warm_pc : GridField::zeros(spec.grid());
            SolveResult rpc = solve_pc(sys, s1, settings);
            row.support_l0 = spec.support_measure(rl0.u);
            row.support_pc = spec.support_measure(rpc.u);
            row.J = rl0.cache.J;
            row.J_pc = rpc.cache.J_pc;
            row.status_l0 = to_string(rl0.status);
            row.status_pc = to_string(rpc.status);
            if (p.interior_kink()) {
                double tie = 0.0, gap = 0.0;
                for (Eigen::Index i = 0; i < rpc.u.size(); ++i) {
                    if (std::abs(std::abs(rpc.cache.phi[i]) - p.adjoint_threshold) <= kTieTol)
                        tie += spec.grid().cell_volume();
                    gap = std::max(gap,
                                   std::abs(envelope_cost(rpc.u[i], p) - l0_cost(rpc.u[i], p)));
                }
                row.transfer_holds = tie == 0.0 && gap <= 1e-12;
            }
            warm_l0 = rl0.u;
            warm_pc = rpc.u;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "beta,beta_star,above_beta_star,support_l0,support_pc,J,J_pc,transfer,"
           "status_l0,status_pc,error\n";
    char buf[512];
    for (const SweepRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%d,%s,%s,%s\n",
                      r.beta, r.beta_star, int(r.above_beta_star), r.support_l0, r.support_pc,
                      r.J, r.J_pc, int(r.transfer_holds), r.status_l0.c_str(),
                      r.status_pc.c_str(), r.error.c_str());
        out << buf;
    }
}

inline void write_trace_csv(const std::string& path, const SolveTrace& trace) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "iteration,objective,residual,support\n";
    char buf[160];
    for (std::size_t i = 0; i < trace.objective.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", i, trace.objective[i],
                      trace.residual[i], trace.support[i]);
        out << buf;
    }
}

inline IsolationReport isolated_stationarity_probe(const PdeSystem& sys, const EvalCache& cache,
                                                   double rho, int trials, std::mt19937_64& rng,
                                                   const SolverSettings& settings) {
    if (trials < 1)
        throw std::invalid_argument("isolated_stationarity_probe: trials must be >= 1");
    const Grid& grid = sys.grid();
    IsolationReport rep;
    rep.starts = trials;
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::uniform_real_distribution<double> unif01(0.0, 1.0);
    for (int t = 0; t < trials; ++t) {
        Vector d(grid.size());
        for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = unif(rng);
        const double dn = l2_norm(grid, d);
        if (dn == 0.0) continue;
        Vector u0 = cache.u.values() + (rho * unif01(rng) / dn) * d;
        SolveResult r = solve_pc(sys, uad_project(GridField(grid, u0), sys.spec().gamma()),
                                 settings);
        if (r.status != SolveStatus::converged) continue;
        ++rep.converged;
        const double dist = l2_norm(grid, r.u.values() - cache.u.values());
        rep.max_distance = std::max(rep.max_distance, dist);
        if (dist > 1e-6) {
            bool known = false;
            for (const Vector& lim : rep.distinct_limits)
                if (l2_norm(grid, r.u.values() - lim) <= 1e-5) known = true;
            if (!known) rep.distinct_limits.push_back(r.u.values());
        }
    }
    rep.pass = rep.converged == rep.starts && rep.distinct_limits.empty();
    return rep;
}

}  // namespace l0control
