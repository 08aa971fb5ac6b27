#pragma once

#include "l0control/problem.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace l0control {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct NewtonSettings {
    double tolerance = 1e-12;   ///< absolute max-norm residual tolerance
    int max_iterations = 50;
    double backtrack_factor = 0.5;
    double armijo_constant = 1e-4;
};

/// Signals a state solve that did not reach the residual tolerance. With a
/// monotone reaction term this indicates a data or settings problem.
class NonConvergence : public std::runtime_error {
public:
    NonConvergence(int iterations_, double residual_)
        : std::runtime_error("state solve did not converge after " +
                             std::to_string(iterations_) + " iterations (residual " +
                             std::to_string(residual_) + ")"),
          iterations(iterations_),
          residual(residual_) {}
    int iterations;
    double residual;
};

/// Finite-difference discretization of -div(kappa grad .) with homogeneous
/// Dirichlet boundary: 3-point stencil in 1D, 5-point in 2D, harmonic-mean
/// face coefficients for variable kappa. The matrix is symmetric positive
/// definite, so the adjoint operator coincides with it.
class EllipticOperator {
public:
    static EllipticOperator assemble(const ProblemSpec& spec) {
        const Grid& g = spec.grid();
        const Vector& kappa = spec.kappa();
        const Eigen::Index n = g.size();
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(5 * n);
        const auto face = [&](Eigen::Index a, Eigen::Index b) {
            // Harmonic mean between neighbouring nodes; a boundary face uses
            // the interior value itself.
            if (b < 0) return kappa[a];
            return 2.0 * kappa[a] * kappa[b] / (kappa[a] + kappa[b]);
        };
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto mi = g.multi_index(k);
            double diag = 0.0;
            for (int axis = 0; axis < g.dim(); ++axis) {
                const double ih2 = 1.0 / (g.spacing(axis) * g.spacing(axis));
                const int stride = axis == 0 ? 1 : g.nodes(0);
                const int pos = mi[axis];
                const Eigen::Index lo = pos > 0 ? k - stride : -1;
                const Eigen::Index hi = pos < g.nodes(axis) - 1 ? k + stride : -1;
                const double kl = face(k, lo);
                const double kh = face(k, hi);
                diag += (kl + kh) * ih2;
                if (lo >= 0) trip.emplace_back(k, lo, -kl * ih2);
                if (hi >= 0) trip.emplace_back(k, hi, -kh * ih2);
            }
            trip.emplace_back(k, k, diag);
        }
        SparseMatrix A(n, n);
        A.setFromTriplets(trip.begin(), trip.end());
        A.makeCompressed();
        return EllipticOperator(g, std::move(A), spec.ellipticity());
    }

    const Grid& grid() const { return grid_; }
    const SparseMatrix& matrix() const { return matrix_; }
    double ellipticity() const { return lambda_A_; }

    /// Max absolute row sum; sets the float rounding floor of residuals.
    double row_norm() const { return row_norm_; }

private:
    EllipticOperator(Grid g, SparseMatrix A, double lambda)
        : grid_(g), matrix_(std::move(A)), lambda_A_(lambda) {
        Vector rs = Vector::Zero(matrix_.rows());
        for (int k = 0; k < matrix_.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(matrix_, k); it; ++it)
                rs[it.row()] += std::abs(it.value());
        row_norm_ = rs.size() ? rs.maxCoeff() : 0.0;
    }

    Grid grid_;
    SparseMatrix matrix_;
    double lambda_A_;
    double row_norm_ = 0.0;
};

struct StateSolution {
    GridField y;
    int iterations;
    double residual;
};

/// Cholesky factorization of the linearized operator A + diag(da/dy(., y)),
/// reusable across right-hand sides. Not shared across threads.
class LinearizedFactor {
public:
    LinearizedFactor(const Grid& grid, const SparseMatrix& K) : grid_(grid) {
        ldlt_.compute(K);
        if (ldlt_.info() != Eigen::Success)
            throw std::runtime_error("linearized operator factorization failed");
    }

    Vector solve(const Vector& rhs) const {
        Vector z = ldlt_.solve(rhs);
        if (ldlt_.info() != Eigen::Success)
            throw std::runtime_error("linearized solve failed");
        return z;
    }

    GridField solve(const GridField& rhs) const {
        return GridField(grid_, solve(rhs.values()));
    }

private:
    Grid grid_;
    Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
};

/// The three PDE solves of the problem: semilinear state equation, the
/// linearized equation and the adjoint equation, all sharing one assembled
/// elliptic operator. Solves are pure functions of their inputs.
class PdeSystem {
public:
    explicit PdeSystem(ProblemSpec spec)
        : spec_(std::move(spec)), op_(EllipticOperator::assemble(spec_)) {}

    const ProblemSpec& spec() const { return spec_; }
    const EllipticOperator& op() const { return op_; }
    const Grid& grid() const { return spec_.grid(); }

    /// A + diag(da/dy(., y)); also the Newton Jacobian of the state residual.
    SparseMatrix jacobian(const Vector& y) const {
        SparseMatrix K = op_.matrix();
        Vector d = spec_.nonlinearity().dy(y);
        for (Eigen::Index i = 0; i < d.size(); ++i) K.coeffRef(i, i) += d[i];
        return K;
    }

    Vector state_residual(const Vector& y, const Vector& u) const {
        return op_.matrix() * y + spec_.nonlinearity().value(y) - u;
    }

    /// Damped Newton for A y + a(., y) = u from the zero initial iterate.
    /// Stops at the max-norm residual tolerance, or at the float rounding
    /// floor eps * ||A|| (1 + ||y||) when that lies above the tolerance and
    /// backtracking cannot make further progress.
    StateSolution solve_state(const GridField& u, const NewtonSettings& s = {}) const {
        if (!(s.tolerance > 0.0) || s.max_iterations < 1)
            throw std::invalid_argument("solve_state: invalid Newton settings");
        const Eigen::Index n = grid().size();
        const auto floor_at = [&](const Vector& y) {
            return 2.0 * std::numeric_limits<double>::epsilon() *
                   (op_.row_norm() * (1.0 + linf_norm(y)) + linf_norm(u.values()));
        };
        Vector y = Vector::Zero(n);
        Vector r = state_residual(y, u.values());
        double rnorm = r.norm();
        for (int it = 0; it < s.max_iterations; ++it) {
            if (linf_norm(r) <= s.tolerance)
                return {GridField(grid(), y), it, linf_norm(r)};
            LinearizedFactor K(grid(), jacobian(y));
            Vector d = K.solve(-r);
            double step = 1.0;
            for (;;) {
                Vector yt = y + step * d;
                Vector rt = state_residual(yt, u.values());
                const double rtnorm = rt.norm();
                if (rtnorm <= (1.0 - s.armijo_constant * step) * rnorm) {
                    y = std::move(yt);
                    r = std::move(rt);
                    rnorm = rtnorm;
                    break;
                }
                step *= s.backtrack_factor;
                if (step < 1e-12) {
                    if (linf_norm(r) <= floor_at(y))
                        return {GridField(grid(), y), it, linf_norm(r)};
                    throw NonConvergence(it, linf_norm(r));
                }
            }
        }
        if (linf_norm(r) <= std::max(s.tolerance, floor_at(y)))
            return {GridField(grid(), y), s.max_iterations, linf_norm(r)};
        throw NonConvergence(s.max_iterations, linf_norm(r));
    }

    LinearizedFactor factorize(const GridField& y) const {
        return LinearizedFactor(grid(), jacobian(y.values()));
    }

    /// Solve (A + diag(da/dy(., y))) z = v.
    GridField solve_linearized(const GridField& y, const GridField& v) const {
        return factorize(y).solve(v);
    }

    /// Solve (A + diag(da/dy(., y))) phi = dL/dy(., y); the operator is
    /// symmetric, so no transposition is involved.
    GridField solve_adjoint(const GridField& y) const {
        Vector rhs = y.values() - spec_.target();
        return GridField(grid(), factorize(y).solve(rhs));
    }

    /// Empirical estimate of the constant in ||z_v||_{L2} <= C ||v||_{L1}:
    /// the maximum ratio over random directions.
    double estimate_cz(const GridField& y, int trials, std::mt19937_64& rng) const {
        if (trials < 1) throw std::invalid_argument("estimate_cz: trials must be >= 1");
        LinearizedFactor K = factorize(y);
        std::uniform_real_distribution<double> unif(-1.0, 1.0);
        double best = 0.0;
        for (int t = 0; t < trials; ++t) {
            Vector v(grid().size());
            for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = unif(rng);
            const double denom = l1_norm(grid(), v);
            if (denom == 0.0) continue;
            best = std::max(best, l2_norm(grid(), K.solve(v)) / denom);
        }
        return best;
    }

private:
    ProblemSpec spec_;
    EllipticOperator op_;
};

}  // namespace l0control
