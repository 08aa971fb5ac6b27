#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace l0control;

namespace {

SolverSettings settings(double tol = 1e-9) {
    SolverSettings s;
    s.tolerance = tol;
    s.newton.tolerance = 1e-13;
    return s;
}

/// Fixed-step projected proximal descent run very deep: an independent
/// reference for the convex problem.
GridField reference_convex_solve(const PdeSystem& sys, double step, int iters) {
    const CostParams p = sys.spec().cost_params();
    Vector u = Vector::Zero(sys.grid().size());
    for (int it = 0; it < iters; ++it) {
        EvalCache c = evaluate(sys, GridField(sys.grid(), u), {1e-13, 50, 0.5, 1e-4});
        Vector un(u.size());
        for (Eigen::Index i = 0; i < u.size(); ++i)
            un[i] = prox_envelope(u[i] - step * c.phi[i], step, p);
        if ((un - u).lpNorm<Eigen::Infinity>() < 1e-14) return GridField(sys.grid(), un);
        u = un;
    }
    return GridField(sys.grid(), u);
}

}  // namespace

TEST(SolvePc, StrongSparsityWeightDrivesEverythingToZero) {
    std::mt19937_64 rng(61);
    ProblemSpec base = l0test::standard_cubic_1d();
    PdeSystem bsys(base);
    EvalCache zero = evaluate(bsys, GridField::zeros(base.grid()));
    ProblemSpec strong = base.with_beta(1.5 * beta_star(base, zero));
    PdeSystem sys(strong);
    for (int t = 0; t < 3; ++t) {
        GridField u0 = uad_project(l0test::random_field(strong.grid(), rng, 2.0), strong.gamma());
        SolveResult r = solve_pc(sys, u0, settings());
        EXPECT_EQ(r.status, SolveStatus::converged);
        EXPECT_LE(linf_norm(r.u), 1e-9);
    }
}

TEST(SolvePc, MatchesIndependentConvexReference) {
    ProblemSpec spec = l0test::linear_quadratic_1d();
    PdeSystem sys(spec);
    SolveResult r = solve_pc(sys, GridField::zeros(spec.grid()), settings(1e-10));
    ASSERT_EQ(r.status, SolveStatus::converged);
    GridField ref = reference_convex_solve(sys, 0.05, 20000);
    EXPECT_LE(l2_norm(GridField(spec.grid(), r.u.values() - ref.values())), 1e-7);
}

TEST(SolvePc, CertificateAndMonotoneTrace) {
    ProblemSpec spec = l0test::standard_cubic_1d();
    PdeSystem sys(spec);
    SolveResult r = solve_pc(sys, GridField::zeros(spec.grid()), settings());
    ASSERT_EQ(r.status, SolveStatus::converged);
    EXPECT_LE(pc_stationarity_residual(spec, r.cache).max_residual, 1e-9);
    EXPECT_EQ(check_pc_structure(spec, r.cache).total(), 0);
    for (std::size_t i = 1; i < r.trace.objective.size(); ++i)
        EXPECT_LE(r.trace.objective[i], r.trace.objective[i - 1] + 1e-12);
}

TEST(SolveL0, StrongSparsityWeightYieldsZero) {
    std::mt19937_64 rng(62);
    ProblemSpec base = l0test::standard_cubic_1d();
    PdeSystem bsys(base);
    EvalCache zero = evaluate(bsys, GridField::zeros(base.grid()));
    ProblemSpec strong = base.with_beta(1.01 * beta_star(base, zero));
    PdeSystem sys(strong);
    for (int t = 0; t < 3; ++t) {
        GridField u0 = uad_project(l0test::random_field(strong.grid(), rng, 2.0), strong.gamma());
        SolveResult r = solve_l0(sys, u0, settings());
        EXPECT_EQ(r.status, SolveStatus::converged);
        EXPECT_LE(linf_norm(r.u), 1e-9);
        EXPECT_DOUBLE_EQ(strong.support_measure(r.u), 0.0);
    }
}

TEST(SolveL0, CertificatesAndMonotoneTrace) {
    ProblemSpec spec = l0test::standard_cubic_1d();
    PdeSystem sys(spec);
    SolveResult r = solve_l0(sys, GridField::zeros(spec.grid()), settings());
    ASSERT_EQ(r.status, SolveStatus::converged);
    EXPECT_LE(pmp_residual(spec, r.cache).max_residual, 1e-9);
    EXPECT_EQ(check_sparsity_structure(spec, r.cache).violations, 0);
    EXPECT_LE(pc_stationarity_residual(spec, r.cache).max_residual, 1e-8);
    for (std::size_t i = 1; i < r.trace.objective.size(); ++i)
        EXPECT_LE(r.trace.objective[i], r.trace.objective[i - 1] + 1e-12);
}

TEST(SolveL0, RestrictionMaskIsAFixedPointAtTheSolution) {
    ProblemSpec spec = l0test::standard_cubic_1d();
    PdeSystem sys(spec);
    SolverSettings s = settings();
    SolveResult r = solve_l0(sys, GridField::zeros(spec.grid()), s);
    ASSERT_EQ(r.status, SolveStatus::converged);
    // Reduced problem on the solution's own support: resolving from the
    // solution must not move it.
    s.restriction.assign(spec.grid().size(), 0);
    for (Eigen::Index i = 0; i < r.u.size(); ++i)
        if (std::abs(r.u[i]) <= spec.zero_tol()) s.restriction->at(i) = 1;
    SolveResult r2 = solve_l0(sys, r.u, s);
    EXPECT_EQ(r2.status, SolveStatus::converged);
    EXPECT_LE(linf_norm(GridField(spec.grid(), r2.u.values() - r.u.values())), 1e-8);
}

TEST(SolveTransfer, StandardProblemTransfersAndPlateauIsFlagged) {
    ProblemSpec spec = l0test::standard_cubic_1d();
    PdeSystem sys(spec);
    json rep = solve_transfer(sys, settings(1e-10));
    EXPECT_TRUE(rep["transfer_holds"].get<bool>());
    EXPECT_DOUBLE_EQ(rep["tie_measure"].get<double>(), 0.0);
    EXPECT_LE(rep["max_envelope_gap"].get<double>(), 1e-12);
    EXPECT_LE(rep["objective_gap"].get<double>(),
              1e-12 * std::max(1.0, std::abs(rep["J"].get<double>())));

    // Constructed adjoint plateau exactly at the threshold: u = 0 stays
    // stationary but the tie set has positive measure.
    Grid g = Grid::line(31);
    const Eigen::Index n = g.size();
    ProblemSpec proto(g, Vector::Ones(n), Nonlinearity::linear(Vector::Zero(n)),
                      Vector::Zero(n), 1.0, 0.05, 2.0);
    const double thr = proto.cost_params().adjoint_threshold;
    PdeSystem psys(proto);
    Vector phi_target = Vector::Zero(n);
    for (Eigen::Index i = 10; i < 20; ++i) phi_target[i] = thr;
    // Adjoint equation at y = 0: A phi = y - y_d, so y_d := -A phi.
    Vector yd = -(psys.op().matrix() * phi_target);
    ProblemSpec plateau(g, Vector::Ones(n), Nonlinearity::linear(Vector::Zero(n)), yd, 1.0,
                        0.05, 2.0);
    PdeSystem ssys(plateau);
    json prep = solve_transfer(ssys, settings(1e-10));
    EXPECT_FALSE(prep["transfer_holds"].get<bool>());
    EXPECT_GT(prep["tie_measure"].get<double>(), 0.0);
}

TEST(SweepBeta, TableAcrossTheThreshold) {
    ProblemSpec base = l0test::standard_cubic_1d(31);
    PdeSystem bsys(base);
    EvalCache zero = evaluate(bsys, GridField::zeros(base.grid()));
    const double bs = beta_star(base, zero);
    std::vector<double> betas{1e-3 * bs, 1e-2 * bs, 0.1 * bs, 0.5 * bs, 1.05 * bs, 2.0 * bs};
    std::vector<SweepRow> rows = sweep_beta(base, betas, settings());
    ASSERT_EQ(rows.size(), betas.size());
    for (const SweepRow& r : rows) {
        EXPECT_TRUE(r.error.empty()) << r.error;
        EXPECT_EQ(r.status_l0, "converged");
    }
    // Above the threshold the support vanishes; the support history is
    // reported, not asserted monotone.
    EXPECT_DOUBLE_EQ(rows.back().support_l0, 0.0);
    EXPECT_DOUBLE_EQ(rows[rows.size() - 2].support_l0, 0.0);
    EXPECT_GT(rows.front().support_l0, 0.0);
    EXPECT_THROW(sweep_beta(base, {}, settings()), std::invalid_argument);
    EXPECT_THROW(sweep_beta(base, {0.2, 0.1}, settings()), std::invalid_argument);
}

TEST(SweepBeta, SmallBetaApproachesTheUnrestrictedSupport) {
    ProblemSpec base = l0test::linear_quadratic_1d(31);
    std::vector<SweepRow> rows = sweep_beta(base, {1e-8, 1e-6}, settings());
    // With a vanishing sparsity weight the smooth problem's solution is
    // supported everywhere the unconstrained minimizer is nonzero.
    EXPECT_GE(rows.front().support_l0, 0.9 * base.grid().domain_measure());
}
