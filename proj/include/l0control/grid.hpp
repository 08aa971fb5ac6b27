#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace l0control {

using Vector = Eigen::VectorXd;

/// Uniform axis-aligned grid on an interval (1D) or box (2D) with
/// homogeneous Dirichlet boundary. Only interior nodes carry unknowns;
/// boundary values are implicitly zero for state-like fields, and control
/// fields are stored on the same interior nodes.
class Grid {
public:
    static Grid line(int interior_nodes, double extent = 1.0) {
        return Grid(1, {interior_nodes, 1}, {extent, 1.0});
    }

    static Grid box(int nx, int ny, double lx = 1.0, double ly = 1.0) {
        return Grid(2, {nx, ny}, {lx, ly});
    }

    int dim() const { return dim_; }
    int nodes(int axis) const { return n_[axis]; }
    double extent(int axis) const { return length_[axis]; }
    double spacing(int axis) const { return h_[axis]; }

    /// Interior node count N.
    Eigen::Index size() const {
        return dim_ == 1 ? n_[0] : Eigen::Index(n_[0]) * n_[1];
    }

    /// Quadrature weight of one node (midpoint rule).
    double cell_volume() const {
        return dim_ == 1 ? h_[0] : h_[0] * h_[1];
    }

    double domain_measure() const {
        return dim_ == 1 ? length_[0] : length_[0] * length_[1];
    }

    int index(int ix, int iy = 0) const { return ix + n_[0] * iy; }

    std::array<int, 2> multi_index(Eigen::Index k) const {
        if (dim_ == 1) return {static_cast<int>(k), 0};
        return {static_cast<int>(k % n_[0]), static_cast<int>(k / n_[0])};
    }

    /// Physical coordinate of interior node k along the given axis.
    double coord(int axis, Eigen::Index k) const {
        return (multi_index(k)[axis] + 1) * h_[axis];
    }

    bool operator==(const Grid& other) const = default;

private:
    Grid(int dim, std::array<int, 2> n, std::array<double, 2> length)
        : dim_(dim), n_(n), length_(length) {
        if (dim_ != 1 && dim_ != 2)
            throw std::invalid_argument("Grid: dim must be 1 or 2");
        for (int a = 0; a < dim_; ++a) {
            if (n_[a] < 1)
                throw std::invalid_argument("Grid: need at least one interior node per axis");
            if (!(length_[a] > 0.0) || !std::isfinite(length_[a]))
                throw std::invalid_argument("Grid: extents must be positive and finite");
            h_[a] = length_[a] / (n_[a] + 1);
        }
        if (dim_ == 1) {
            n_[1] = 1;
            length_[1] = 1.0;
            h_[1] = 1.0;
        }
    }

    int dim_;
    std::array<int, 2> n_;
    std::array<double, 2> length_;
    std::array<double, 2> h_{1.0, 1.0};
};

/// A real-valued function on the interior nodes of a grid. Used for
/// controls, states, adjoints and directions alike.
class GridField {
public:
    GridField(Grid grid, Vector values) : grid_(grid), values_(std::move(values)) {
        if (values_.size() != grid_.size())
            throw std::invalid_argument("GridField: value count does not match grid");
        if (!values_.allFinite())
            throw std::invalid_argument("GridField: values must be finite");
    }

    static GridField zeros(const Grid& grid) {
        return GridField(grid, Vector::Zero(grid.size()));
    }

    static GridField constant(const Grid& grid, double value) {
        return GridField(grid, Vector::Constant(grid.size(), value));
    }

    const Grid& grid() const { return grid_; }
    Eigen::Index size() const { return values_.size(); }

    Vector& values() { return values_; }
    const Vector& values() const { return values_; }

    double operator[](Eigen::Index i) const { return values_[i]; }
    double& operator[](Eigen::Index i) { return values_[i]; }

private:
    Grid grid_;
    Vector values_;
};

// Discrete norms with node-wise (midpoint) quadrature:
//   ||f||_1 = sum |f_i| vol,  ||f||_2^2 = sum f_i^2 vol,  ||f||_inf = max |f_i|.

inline double l1_norm(const Grid& grid, const Vector& v) {
    return v.lpNorm<1>() * grid.cell_volume();
}

inline double l2_norm(const Grid& grid, const Vector& v) {
    return v.norm() * std::sqrt(grid.cell_volume());
}

inline double linf_norm(const Vector& v) {
    return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
}

/// L2 inner product ∫ a b dx.
inline double inner(const Grid& grid, const Vector& a, const Vector& b) {
    return a.dot(b) * grid.cell_volume();
}

inline double l1_norm(const GridField& f) { return l1_norm(f.grid(), f.values()); }
inline double l2_norm(const GridField& f) { return l2_norm(f.grid(), f.values()); }
inline double linf_norm(const GridField& f) { return linf_norm(f.values()); }
inline double inner(const GridField& a, const GridField& b) {
    return inner(a.grid(), a.values(), b.values());
}

}  // namespace l0control
