#include "test_support.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <random>

using namespace l0control;
using l0test::kPi;

namespace {

ProblemSpec laplace_1d(int n, double alpha = 1.0, double beta = 1.0, double gamma = 10.0) {
    Grid g = Grid::line(n);
    return ProblemSpec(g, Vector::Ones(g.size()), Nonlinearity::linear(Vector::Zero(g.size())),
                       Vector::Zero(g.size()), alpha, beta, gamma);
}

}  // namespace

TEST(EllipticOperator, HandAssembledStencil1D) {
    // kappa = 1, 3 interior nodes, h = 1/4: rows are (1/h^2) * (2, -1).
    PdeSystem sys(laplace_1d(3));
    Eigen::MatrixXd A = Eigen::MatrixXd(sys.op().matrix());
    EXPECT_DOUBLE_EQ(A(0, 0), 32.0);
    EXPECT_DOUBLE_EQ(A(0, 1), -16.0);
    EXPECT_DOUBLE_EQ(A(1, 0), -16.0);
    EXPECT_DOUBLE_EQ(A(1, 1), 32.0);
    EXPECT_DOUBLE_EQ(A(1, 2), -16.0);
    EXPECT_DOUBLE_EQ(A(0, 2), 0.0);
    EXPECT_TRUE(A.isApprox(A.transpose()));
}

TEST(EllipticOperator, StencilSparsityPattern2D) {
    Grid g = Grid::box(4, 5);
    ProblemSpec spec(g, Vector::Ones(g.size()), Nonlinearity::linear(Vector::Zero(g.size())),
                     Vector::Zero(g.size()), 1.0, 1.0, 10.0);
    EllipticOperator op = EllipticOperator::assemble(spec);
    const SparseMatrix& A = op.matrix();
    for (int k = 0; k < A.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(A, k); it; ++it) {
            auto a = g.multi_index(it.row());
            auto b = g.multi_index(it.col());
            const int d = std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]);
            EXPECT_LE(d, 1);  // 5-point stencil only
        }
}

TEST(EllipticOperator, ConstantFieldResidualSitsAtTheBoundary) {
    PdeSystem sys(laplace_1d(9));
    const double h = sys.grid().spacing(0);
    Vector y = Vector::Constant(9, 3.0);
    Vector Ay = sys.op().matrix() * y;
    for (int i = 1; i < 8; ++i) EXPECT_NEAR(Ay[i], 0.0, 1e-10);
    EXPECT_NEAR(Ay[0], 3.0 / (h * h), 1e-9);
    EXPECT_NEAR(Ay[8], 3.0 / (h * h), 1e-9);
    // Affine fields are annihilated away from the boundary as well.
    Vector lin(9);
    for (int i = 0; i < 9; ++i) lin[i] = 2.0 * sys.grid().coord(0, i) - 0.5;
    Vector Al = sys.op().matrix() * lin;
    for (int i = 1; i < 8; ++i) EXPECT_NEAR(Al[i], 0.0, 1e-9);
}

TEST(EllipticOperator, SmallestEigenvalueApproximatesDirichletLaplacian) {
    PdeSystem sys(laplace_1d(127));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Eigen::MatrixXd(sys.op().matrix()));
    const double lmin = eig.eigenvalues()(0);
    EXPECT_NEAR(lmin, kPi * kPi, 0.01 * kPi * kPi);
}

TEST(EllipticOperator, HarmonicMeanFacesForVariableCoefficient) {
    Grid g = Grid::line(3);
    Vector kappa(3);
    kappa << 1.0, 2.0, 4.0;
    ProblemSpec spec(g, kappa, Nonlinearity::linear(Vector::Zero(3)), Vector::Zero(3), 1.0,
                     1.0, 10.0);
    Eigen::MatrixXd A = Eigen::MatrixXd(EllipticOperator::assemble(spec).matrix());
    const double ih2 = 16.0;
    EXPECT_DOUBLE_EQ(A(0, 1), -ih2 * (2.0 * 1.0 * 2.0 / 3.0));
    EXPECT_DOUBLE_EQ(A(1, 2), -ih2 * (2.0 * 2.0 * 4.0 / 6.0));
    EXPECT_DOUBLE_EQ(A(0, 0), ih2 * (1.0 + 4.0 / 3.0));  // boundary face uses kappa_0
    EXPECT_TRUE(A.isApprox(A.transpose()));
}

TEST(SolveState, ZeroControlGivesZeroState) {
    ProblemSpec spec = l0test::standard_cubic_1d();
    PdeSystem sys(spec);
    StateSolution st = sys.solve_state(GridField::zeros(spec.grid()));
    EXPECT_LE(linf_norm(st.y), 1e-13);
    EXPECT_LE(st.iterations, 2);
}

TEST(SolveState, LinearCaseMatchesDirectSolve) {
    std::mt19937_64 rng(21);
    ProblemSpec spec = laplace_1d(63);
    PdeSystem sys(spec);
    GridField u = l0test::random_field(spec.grid(), rng, 2.0);
    StateSolution st = sys.solve_state(u);
    Vector direct = sys.factorize(GridField::zeros(spec.grid())).solve(u.values());
    EXPECT_LE((st.y.values() - direct).norm() / direct.norm(), 1e-10);
}

TEST(SolveState, RecoversManufacturedSolution) {
    ProblemSpec spec = l0test::standard_cubic_1d(127);
    PdeSystem sys(spec);
    const Grid& g = spec.grid();
    Vector ystar(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) ystar[i] = std::sin(kPi * g.coord(0, i));
    Vector u = sys.op().matrix() * ystar + spec.nonlinearity().value(ystar);
    StateSolution st = sys.solve_state(GridField(g, u));
    EXPECT_LE(linf_norm(GridField(g, st.y.values() - ystar)), 1e-9);
}

TEST(SolveState, DiscreteMaximumPrinciple) {
    std::mt19937_64 rng(22);
    Grid g = Grid::line(31);
    Vector c0 = Vector::Constant(g.size(), 0.7);
    ProblemSpec spec(g, Vector::Ones(g.size()), Nonlinearity::linear(c0), Vector::Zero(g.size()),
                     1.0, 1.0, 10.0);
    PdeSystem sys(spec);
    std::uniform_real_distribution<double> unif(0.0, 3.0);
    for (int t = 0; t < 50; ++t) {
        Vector u(g.size());
        for (Eigen::Index i = 0; i < g.size(); ++i) u[i] = unif(rng);
        StateSolution st = sys.solve_state(GridField(g, u));
        EXPECT_GE(st.y.values().minCoeff(), -1e-12);
    }
}

TEST(SolveState, NewtonStaysWithinTenIterations) {
    std::mt19937_64 rng(23);
    for (int t = 0; t < 10; ++t) {
        ProblemSpec spec = l0test::standard_cubic_1d();
        PdeSystem sys(spec);
        GridField u = l0test::random_field(spec.grid(), rng, 2.0);
        StateSolution st = sys.solve_state(u);
        EXPECT_LE(st.iterations, 10);
        EXPECT_LE(st.residual, 1e-12);
    }
    ProblemSpec spec2 = l0test::standard_cubic_2d();
    PdeSystem sys2(spec2);
    GridField u2 = l0test::random_field(spec2.grid(), rng, 2.0);
    EXPECT_LE(sys2.solve_state(u2).iterations, 10);
}

TEST(SolveState, ReportsNonConvergenceOnImpossibleSettings) {
    ProblemSpec spec = l0test::standard_cubic_1d();
    PdeSystem sys(spec);
    NewtonSettings s;
    s.max_iterations = 1;
    s.tolerance = 1e-14;
    try {
        sys.solve_state(GridField::constant(spec.grid(), 1.5), s);
        FAIL() << "expected NonConvergence";
    } catch (const NonConvergence& e) {
        EXPECT_GE(e.residual, 0.0);
    }
}

TEST(SolveLinearized, HomogeneitySuperpositionAndOracle) {
    std::mt19937_64 rng(24);
    ProblemSpec spec = l0test::standard_cubic_1d();
    PdeSystem sys(spec);
    GridField u = l0test::random_field(spec.grid(), rng);
    StateSolution st = sys.solve_state(u);

    GridField z0 = sys.solve_linearized(st.y, GridField::zeros(spec.grid()));
    EXPECT_LE(linf_norm(z0), 1e-14);

    GridField v1 = l0test::random_field(spec.grid(), rng);
    GridField v2 = l0test::random_field(spec.grid(), rng);
    GridField z1 = sys.solve_linearized(st.y, v1);
    GridField z2 = sys.solve_linearized(st.y, v2);
    GridField z12 =
        sys.solve_linearized(st.y, GridField(spec.grid(), v1.values() + v2.values()));
    EXPECT_LE(linf_norm(GridField(spec.grid(), z12.values() - z1.values() - z2.values())),
              1e-12);

    // Pure Laplacian: z = A^{-1} v.
    ProblemSpec lspec = laplace_1d(33);
    PdeSystem lsys(lspec);
    GridField v = l0test::random_field(lspec.grid(), rng);
    GridField z = lsys.solve_linearized(GridField::zeros(lspec.grid()), v);
    Vector direct = lsys.factorize(GridField::zeros(lspec.grid())).solve(v.values());
    EXPECT_LE((z.values() - direct).norm() / direct.norm(), 1e-12);
}

TEST(SolveLinearized, MatrixEqualsNewtonJacobian) {
    std::mt19937_64 rng(25);
    ProblemSpec spec = l0test::standard_cubic_1d(17);
    PdeSystem sys(spec);
    GridField y = l0test::random_field(spec.grid(), rng);
    SparseMatrix K = sys.jacobian(y.values());
    // The Newton residual is differentiated by the same assembly.
    Vector u = Vector::Zero(spec.grid().size());
    const double h = 1e-7;
    for (Eigen::Index j = 0; j < 5; ++j) {
        Vector e = Vector::Zero(spec.grid().size());
        e[j] = h;
        Vector fd = (sys.state_residual(y.values() + e, u) - sys.state_residual(y.values(), u)) / h;
        Vector col = K * (e / h);
        EXPECT_LE((fd - col).norm(), 1e-5 * col.norm());
    }
}

TEST(SolveAdjoint, ZeroAtTargetAndLinearOracle) {
    std::mt19937_64 rng(26);
    Grid g = Grid::line(33);
    GridField y = l0test::random_field(g, rng);
    // Target equal to the state: zero right-hand side.
    ProblemSpec spec(g, Vector::Ones(g.size()), Nonlinearity::cubic(Vector::Ones(g.size()),
                                                                    Vector::Ones(g.size())),
                     y.values(), 1.0, 1.0, 10.0);
    PdeSystem sys(spec);
    EXPECT_LE(linf_norm(sys.solve_adjoint(y)), 1e-14);

    ProblemSpec lspec = laplace_1d(33);
    PdeSystem lsys(lspec);
    GridField phi = lsys.solve_adjoint(y);
    Vector direct = lsys.factorize(y).solve(y.values() - lspec.target());
    EXPECT_LE((phi.values() - direct).norm(), 1e-12 * (1.0 + direct.norm()));
}

TEST(SolveAdjoint, DualityIdentity) {
    std::mt19937_64 rng(27);
    ProblemSpec spec = l0test::standard_cubic_1d();
    PdeSystem sys(spec);
    GridField u = l0test::random_field(spec.grid(), rng);
    StateSolution st = sys.solve_state(u);
    GridField phi = sys.solve_adjoint(st.y);
    Vector rhs = st.y.values() - spec.target();
    for (int t = 0; t < 20; ++t) {
        GridField v = l0test::random_field(spec.grid(), rng);
        GridField z = sys.solve_linearized(st.y, v);
        const double lhs = inner(phi, v);
        const double r = inner(spec.grid(), rhs, z.values());
        EXPECT_NEAR(lhs, r, 1e-10 * std::max(1.0, std::abs(lhs)));
    }
}

TEST(EstimateCz, SpikeHomogeneityAndGridStability) {
    std::mt19937_64 rng(28);
    ProblemSpec spec = laplace_1d(64);
    PdeSystem sys(spec);
    GridField y0 = GridField::zeros(spec.grid());

    // Single-node spike: the ratio is the L2 norm of that column of the
    // inverse over the L1 mass of the spike.
    Vector spike = Vector::Zero(64);
    spike[31] = 1.0;
    GridField z = sys.solve_linearized(y0, GridField(spec.grid(), spike));
    const double expect = l2_norm(z) / l1_norm(spec.grid(), spike);
    Vector doubled = 2.0 * spike;
    GridField z2 = sys.solve_linearized(y0, GridField(spec.grid(), doubled));
    EXPECT_NEAR(l2_norm(z2) / l1_norm(spec.grid(), doubled), expect, 1e-12);

    // Green's-function bound for the unit interval: sup G = 1/4.
    const double est64 = sys.estimate_cz(y0, 200, rng);
    EXPECT_LE(est64, 0.26);
    ProblemSpec spec128 = laplace_1d(128);
    PdeSystem sys128(spec128);
    const double est128 = sys128.estimate_cz(GridField::zeros(spec128.grid()), 200, rng);
    EXPECT_LE(std::abs(est64 - est128) / est64, 0.10);
    EXPECT_THROW(sys.estimate_cz(y0, 0, rng), std::invalid_argument);
}
