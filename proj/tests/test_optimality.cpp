#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace l0control;

namespace {

SolverSettings tight_solver(double tol = 1e-11) {
    SolverSettings s;
    s.tolerance = tol;
    s.newton.tolerance = 1e-13;
    return s;
}

}  // namespace

TEST(PmpResidual, SolverFixedPointHasVanishingResidual) {
    ProblemSpec spec = l0test::standard_cubic_1d();
    PdeSystem sys(spec);
    SolveResult r = solve_l0(sys, GridField::zeros(spec.grid()), tight_solver());
    ASSERT_EQ(r.status, SolveStatus::converged);
    PMPReport rep = pmp_residual(spec, r.cache);
    EXPECT_LE(rep.max_residual, 1e-10);
    EXPECT_EQ(rep.sparsity_violations, 0);
}

TEST(PmpResidual, SaturatedControlAgainstSmallAdjoint) {
    // At u = gamma with small |phi| the zero control wins by beta + alpha
    // gamma^2/2 + phi gamma.
    Grid g = Grid::line(9);
    ProblemSpec spec(g, Vector::Ones(9), Nonlinearity::linear(Vector::Zero(9)),
                     Vector::Zero(9), 1.0, 1.0, 2.0);
    PdeSystem sys(spec);
    EvalCache c = evaluate(sys, GridField::constant(g, spec.gamma()));
    PMPReport rep = pmp_residual(spec, c);
    const CostParams p = spec.cost_params();
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        ASSERT_LT(std::abs(c.phi[i]), p.adjoint_threshold);  // zero is optimal there
        const double expect =
            c.phi[i] * spec.gamma() + 0.5 * spec.alpha() * spec.gamma() * spec.gamma() +
            spec.beta();
        EXPECT_NEAR(rep.residual[i], expect, 1e-12);
    }
}

TEST(PmpResidual, DependsOnlyOnControlAndAdjoint) {
    std::mt19937_64 rng(51);
    ProblemSpec spec = l0test::standard_cubic_1d(17);
    PdeSystem sys(spec);
    GridField u = l0test::random_field(spec.grid(), rng);
    EvalCache a = evaluate(sys, u);
    EvalCache b = a;
    b.y.values().array() += 5.0;  // the tracking term cancels in the Hamiltonian difference
    b.F += 123.0;
    PMPReport ra = pmp_residual(spec, a);
    PMPReport rb = pmp_residual(spec, b);
    EXPECT_EQ(ra.residual, rb.residual);
}

TEST(SparsityStructure, FlagsConstructedViolation) {
    ProblemSpec spec = l0test::standard_cubic_1d();
    PdeSystem sys(spec);
    EvalCache zero = evaluate(sys, GridField::zeros(spec.grid()));
    EXPECT_EQ(check_sparsity_structure(spec, zero).violations, 0);

    SolveResult r = solve_l0(sys, GridField::zeros(spec.grid()), tight_solver());
    EXPECT_EQ(check_sparsity_structure(spec, r.cache).violations, 0);

    EvalCache bad = r.cache;
    const double s = spec.cost_params().kink;
    Eigen::Index node = 0;
    bad.u.values()[node] = 0.5 * s;  // nonzero but below the support bound
    SparsityReport rep = check_sparsity_structure(spec, bad);
    EXPECT_EQ(rep.violations, 1);
    ASSERT_EQ(rep.locations.size(), 1u);
    EXPECT_EQ(rep.locations[0], node);
}

TEST(BetaStar, ZeroTargetMakesZeroControlAlwaysStationary) {
    ProblemSpec spec = l0test::linear_quadratic_1d(33, 0.05, 0.0);
    PdeSystem sys(spec);
    EvalCache zero = evaluate(sys, GridField::zeros(spec.grid()));
    EXPECT_DOUBLE_EQ(beta_star(spec, zero), 0.0);
    EXPECT_LE(pmp_residual(spec, zero).max_residual, 1e-15);
}

TEST(BetaStar, ThresholdSeparatesZeroFromNonzeroStationarity) {
    ProblemSpec base = l0test::standard_cubic_1d();
    PdeSystem bsys(base);
    EvalCache zero = evaluate(bsys, GridField::zeros(base.grid()));
    const double bs = beta_star(base, zero);
    ASSERT_GT(bs, 0.0);

    ProblemSpec above = base.with_beta(1.01 * bs);
    PdeSystem asys(above);
    EvalCache azero = evaluate(asys, GridField::zeros(base.grid()));
    EXPECT_LE(pmp_residual(above, azero).max_residual, 1e-14);
    const CostParams ap = above.cost_params();
    for (Eigen::Index i = 0; i < base.grid().size(); ++i) {
        ScalarCaseResult r = hamiltonian_argmin(azero.phi[i], ap);
        ASSERT_EQ(r.minimizers.size(), 1u);
        EXPECT_DOUBLE_EQ(r.minimizers[0], 0.0);
    }

    ProblemSpec below = base.with_beta(0.5 * bs);
    PdeSystem bsys2(below);
    EvalCache bzero = evaluate(bsys2, GridField::zeros(base.grid()));
    EXPECT_GT(pmp_residual(below, bzero).max_residual, 0.0);
}

TEST(PcStationarity, NodeValuesAndSolverCertificate) {
    Grid g = Grid::line(3);
    ProblemSpec spec(g, Vector::Ones(3), Nonlinearity::linear(Vector::Zero(3)), Vector::Zero(3),
                     1.0, 2.0, 10.0);  // sqrt(2ab) = 2
    PdeSystem sys(spec);
    EvalCache c = evaluate(sys, GridField::zeros(g));
    c.phi.values() << 1.5, 2.1, -3.0;
    PcStationarityReport rep = pc_stationarity_residual(spec, c);
    EXPECT_DOUBLE_EQ(rep.residual[0], 0.0);
    EXPECT_NEAR(rep.residual[1], 0.1, 1e-14);
    EXPECT_NEAR(rep.residual[2], 1.0, 1e-14);

    ProblemSpec std1 = l0test::standard_cubic_1d();
    PdeSystem ssys(std1);
    SolveResult r = solve_pc(ssys, GridField::zeros(std1.grid()), tight_solver(1e-9));
    ASSERT_EQ(r.status, SolveStatus::converged);
    EXPECT_LE(pc_stationarity_residual(std1, r.cache).max_residual, 1e-9);
}

TEST(PcStructure, SolverOutputCleanAndConstructedViolationFlagged) {
    ProblemSpec spec = l0test::standard_cubic_1d();
    PdeSystem sys(spec);
    SolveResult r = solve_pc(sys, GridField::zeros(spec.grid()), tight_solver(1e-10));
    PcStructureReport rep = check_pc_structure(spec, r.cache);
    EXPECT_EQ(rep.total(), 0);
    EXPECT_TRUE(rep.tie_set_empty);

    EvalCache bad = r.cache;
    // A node strictly inside (0, s) where |phi| is away from the threshold.
    const CostParams p = spec.cost_params();
    Eigen::Index node = -1;
    for (Eigen::Index i = 0; i < bad.u.size(); ++i)
        if (std::abs(std::abs(bad.phi[i]) - p.adjoint_threshold) > 1e-3) {
            node = i;
            break;
        }
    ASSERT_GE(node, 0);
    bad.u.values()[node] = 0.5 * p.kink;
    EXPECT_GT(check_pc_structure(spec, bad).total(), 0);
}

TEST(ConeMask, TangentAndMembership) {
    Grid g = Grid::line(4);
    ProblemSpec spec(g, Vector::Ones(4), Nonlinearity::linear(Vector::Zero(4)), Vector::Zero(4),
                     1.0, 0.02, 1.0);
    PdeSystem sys(spec);
    EvalCache c = evaluate(sys, GridField::zeros(g));
    c.u.values() << -1.0, 1.0, 0.3, 0.0;
    ConeMask tangent = build_cone(spec, c, ConeKind::tangent);
    EXPECT_EQ(tangent.tags[0], NodeTag::nonneg_forced);
    EXPECT_EQ(tangent.tags[1], NodeTag::nonpos_forced);
    EXPECT_EQ(tangent.tags[2], NodeTag::free_dir);
    GridField ok(g, (Vector(4) << 0.5, -0.5, 7.0, -7.0).finished());
    EXPECT_TRUE(tangent.contains(ok));
    GridField badv(g, (Vector(4) << -0.5, 0.0, 0.0, 0.0).finished());
    EXPECT_FALSE(tangent.contains(badv));
    EXPECT_TRUE(tangent.contains(tangent.project(badv)));
}

TEST(ConeMask, CriticalConeCollapsesWhenAlphaVanishes) {
    Grid g = Grid::line(17);
    ProblemSpec spec(g, Vector::Ones(17), Nonlinearity::linear(Vector::Zero(17)),
                     l0test::sine_target(g, 4.0), 0.0, 0.05, 1.0);
    PdeSystem sys(spec);
    SolveResult r = solve_l0(sys, GridField::zeros(g), tight_solver(1e-10));
    ASSERT_EQ(r.status, SolveStatus::converged);
    ConeMask mask = build_cone(spec, r.cache, ConeKind::critical);
    for (NodeTag t : mask.tags) EXPECT_EQ(t, NodeTag::zero_forced);
}

TEST(ConeMask, TauConeIsTrivialAboveBetaStar) {
    ProblemSpec base = l0test::standard_cubic_1d();
    PdeSystem bsys(base);
    EvalCache zero = evaluate(bsys, GridField::zeros(base.grid()));
    const double bs = beta_star(base, zero);
    ProblemSpec above = base.with_beta(1.2 * bs);
    PdeSystem asys(above);
    EvalCache azero = evaluate(asys, GridField::zeros(base.grid()));
    const CostParams p = above.cost_params();
    const double M = linf_norm(azero.phi);
    const double tau = 0.5 * (p.adjoint_threshold - M);
    ASSERT_GT(tau, 0.0);
    ConeMask mask = build_cone(above, azero, ConeKind::tau_active, tau);
    EXPECT_EQ(mask.free_count(), 0);
}

TEST(ConeMask, CriticalConeIsContainedInTheConvexifiedOne) {
    std::mt19937_64 rng(52);
    ProblemSpec spec = l0test::standard_cubic_1d();
    PdeSystem sys(spec);
    SolveResult r = solve_pc(sys, GridField::zeros(spec.grid()), tight_solver(1e-10));
    ConeMask cu = build_cone(spec, r.cache, ConeKind::critical);
    ConeMask cpc = build_cone(spec, r.cache, ConeKind::critical_pc);
    for (int t = 0; t < 1000; ++t) {
        GridField v = random_cone_direction(cu, spec.grid(), rng);
        EXPECT_TRUE(cpc.contains(v));
    }
    EXPECT_THROW(build_cone(spec, r.cache, ConeKind::tau_active, 0.0), std::invalid_argument);
    EXPECT_THROW(build_cone(spec, r.cache, ConeKind::tau_active,
                            2.0 * spec.cost_params().adjoint_threshold),
                 std::invalid_argument);
}

TEST(SlackCone, TrivialAndCriticalDirectionsAreMembers) {
    std::mt19937_64 rng(53);
    ProblemSpec spec = l0test::standard_cubic_1d();
    PdeSystem sys(spec);
    SolveResult r = solve_pc(sys, GridField::zeros(spec.grid()), tight_solver(1e-10));
    const double tau = 0.05 * spec.cost_params().adjoint_threshold;
    SlackConeResult z = in_slack_cone(sys, r.cache, GridField::zeros(spec.grid()), tau);
    EXPECT_TRUE(z.member);
    EXPECT_NEAR(z.margin, 0.0, 1e-14);
    ConeMask cpc = build_cone(spec, r.cache, ConeKind::critical_pc);
    for (int t = 0; t < 50; ++t) {
        GridField v = random_cone_direction(cpc, spec.grid(), rng);
        EXPECT_TRUE(in_slack_cone(sys, r.cache, v, tau).member);
    }
}

TEST(SlackCone, SaturatedAdjointDirectionsAreExcluded) {
    // Small box and strong target saturate the control; where |phi| exceeds
    // alpha gamma + 2 tau, a tangent direction grows first order faster than
    // tau ||z||.
    ProblemSpec spec = l0test::linear_quadratic_1d(63, 0.02, 8.0, 0.5);
    PdeSystem sys(spec);
    SolveResult r = solve_pc(sys, GridField::zeros(spec.grid()), tight_solver(1e-10));
    ASSERT_EQ(r.status, SolveStatus::converged);
    const double ag = spec.alpha() * spec.gamma();
    double excess = 0.0;
    for (Eigen::Index i = 0; i < r.u.size(); ++i)
        excess = std::max(excess, std::abs(r.cache.phi[i]) - ag);
    ASSERT_GT(excess, 0.0) << "instance must saturate the box";
    const double tau = std::min(0.4 * excess, 0.5 * spec.cost_params().adjoint_threshold);
    Vector v = Vector::Zero(r.u.size());
    for (Eigen::Index i = 0; i < r.u.size(); ++i)
        if (std::abs(r.cache.phi[i]) >= ag + 2.0 * tau) v[i] = -detail::sgn(r.u[i]);
    ASSERT_GT(v.cwiseAbs().sum(), 0.0);
    SlackConeResult s = in_slack_cone(sys, r.cache, GridField(spec.grid(), v), tau);
    EXPECT_FALSE(s.member);
}

TEST(FirstOrderGrowth, BoundHoldsOnRandomTangentDirections) {
    std::mt19937_64 rng(54);
    ProblemSpec spec = l0test::standard_cubic_1d();
    PdeSystem sys(spec);
    SolveResult r = solve_pc(sys, GridField::zeros(spec.grid()), tight_solver(1e-12));
    ASSERT_EQ(r.status, SolveStatus::converged);
    const double tau = 0.1 * spec.cost_params().adjoint_threshold;

    FirstOrderGrowthReport zero =
        first_order_growth_bound(spec, r.cache, GridField::zeros(spec.grid()), tau);
    EXPECT_DOUBLE_EQ(zero.lhs, 0.0);
    EXPECT_DOUBLE_EQ(zero.rhs, 0.0);

    ConeMask tangent = build_cone(spec, r.cache, ConeKind::tangent);
    for (int t = 0; t < 1000; ++t) {
        GridField w = random_cone_direction(tangent, spec.grid(), rng);
        FirstOrderGrowthReport rep = first_order_growth_bound(spec, r.cache, w, tau);
        EXPECT_GE(rep.slack, -1e-10);
    }
}

TEST(FirstOrderGrowth, EmptyViolatingSetStillNonnegative) {
    ProblemSpec spec = l0test::standard_cubic_1d();
    PdeSystem sys(spec);
    SolveResult r = solve_pc(sys, GridField::zeros(spec.grid()), tight_solver(1e-12));
    const CostParams p = spec.cost_params();
    const double tau = 0.1 * p.adjoint_threshold;
    // Support the direction only on nodes inside the tau band (no clause fires).
    Vector w = Vector::Zero(r.u.size());
    for (Eigen::Index i = 0; i < r.u.size(); ++i) {
        const double a = std::abs(r.cache.phi[i]);
        if (a > p.adjoint_threshold - tau + 1e-6 && a < p.adjoint_threshold - 1e-6 &&
            std::abs(r.u[i]) <= spec.zero_tol())
            w[i] = 1.0;
    }
    FirstOrderGrowthReport rep =
        first_order_growth_bound(spec, r.cache, GridField(spec.grid(), w), tau);
    EXPECT_DOUBLE_EQ(rep.omega_measure, 0.0);
    EXPECT_DOUBLE_EQ(rep.rhs, 0.0);
    EXPECT_GE(rep.lhs, -1e-12);
}

TEST(VariationalInequalities, StationaryPointsSatisfyTheSignedBounds) {
    std::mt19937_64 rng(55);
    // alpha > 0: the multiplier phi + alpha u pairs nonnegatively with
    // tangent directions vanishing on the inactive set.
    ProblemSpec spec = l0test::standard_cubic_1d();
    PdeSystem sys(spec);
    SolveResult r = solve_l0(sys, GridField::zeros(spec.grid()), tight_solver(1e-12));
    ASSERT_EQ(r.status, SolveStatus::converged);
    ConeMask tangent = build_cone(spec, r.cache, ConeKind::tangent);
    for (int t = 0; t < 1000; ++t) {
        GridField v = random_cone_direction(tangent, spec.grid(), rng);
        for (Eigen::Index i = 0; i < v.size(); ++i)
            if (std::abs(r.u[i]) <= spec.zero_tol()) v.values()[i] = 0.0;
        const double pairing =
            inner(spec.grid(), r.cache.phi.values() + spec.alpha() * r.u.values(), v.values());
        EXPECT_GE(pairing, -1e-10);
    }

    // alpha = 0: the adjoint pairing dominates (beta/gamma) ||v||_1.
    Grid g = Grid::line(31);
    ProblemSpec a0(g, Vector::Ones(31), Nonlinearity::linear(Vector::Zero(31)),
                   l0test::sine_target(g, 6.0), 0.0, 0.05, 1.0);
    PdeSystem a0sys(a0);
    SolveResult r0 = solve_l0(a0sys, GridField::zeros(g), tight_solver(1e-12));
    ASSERT_EQ(r0.status, SolveStatus::converged);
    ConeMask tangent0 = build_cone(a0, r0.cache, ConeKind::tangent);
    for (int t = 0; t < 1000; ++t) {
        GridField v = random_cone_direction(tangent0, g, rng);
        for (Eigen::Index i = 0; i < v.size(); ++i)
            if (std::abs(r0.u[i]) <= a0.zero_tol()) v.values()[i] = 0.0;
        const double pairing = inner(r0.cache.phi, v);
        EXPECT_GE(pairing, (a0.beta() / a0.gamma()) * l1_norm(v) - 1e-10);
    }
}

TEST(SolverCertificates, PmpImpliesConvexifiedStationarityAndEnvelopeEquality) {
    for (ProblemSpec spec : {l0test::standard_cubic_1d(), l0test::standard_cubic_2d()}) {
        PdeSystem sys(spec);
        SolverSettings s = tight_solver(1e-9);
        SolveResult r = solve_l0(sys, GridField::zeros(spec.grid()), s);
        ASSERT_EQ(r.status, SolveStatus::converged);
        EXPECT_LE(pmp_residual(spec, r.cache).max_residual, s.tolerance);
        EXPECT_LE(pc_stationarity_residual(spec, r.cache).max_residual, 10.0 * s.tolerance);
        const CostParams p = spec.cost_params();
        for (Eigen::Index i = 0; i < r.u.size(); ++i)
            EXPECT_NEAR(envelope_cost(r.u[i], p), l0_cost(r.u[i], p), 1e-12);
    }
}

TEST(ConeMask, CsvExport) {
    Grid g = Grid::line(5);
    ProblemSpec spec(g, Vector::Ones(5), Nonlinearity::linear(Vector::Zero(5)), Vector::Zero(5),
                     1.0, 0.02, 1.0);
    PdeSystem sys(spec);
    EvalCache c = evaluate(sys, GridField::zeros(g));
    ConeMask mask = build_cone(spec, c, ConeKind::critical);
    const std::string path =
        (std::filesystem::temp_directory_path() / "l0control_cone.csv").string();
    write_cone_csv(path, mask);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "index,tag");
    int rows = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    EXPECT_EQ(rows, 5);
    std::filesystem::remove(path);
}
