#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <stdexcept>

namespace mfg {

/// Uniform periodic grid on the unit torus in one or two dimensions.
///
/// Nodes are x_i = i*h (dim 1) or x_{i,j} = (i*h, j*h) (dim 2) with
/// h = 1/n_per_axis. Node ordering is row-major over (i,j): index = i*n + j,
/// so axis 1 is the x direction and axis 2 the y direction. All matrices and
/// Jacobians built on a grid use this ordering.
struct TorusGrid {
    int dim = 2;
    int n_per_axis = 0;
    double spacing = 0.0;

    TorusGrid() = default;
    TorusGrid(int dim_, int n) : dim(dim_), n_per_axis(n), spacing(1.0 / n) {
        if (dim_ != 1 && dim_ != 2)
            throw std::invalid_argument("TorusGrid: dim must be 1 or 2");
        if (n <= 0)
            throw std::invalid_argument("TorusGrid: n_per_axis must be positive");
    }

    int node_count() const { return dim == 1 ? n_per_axis : n_per_axis * n_per_axis; }
    int stencil_width() const { return 2 * dim; }
    /// Weight of the discrete pairing: h^dim.
    double cell_weight() const { return dim == 1 ? spacing : spacing * spacing; }

    int index(int i, int j = 0) const { return dim == 1 ? i : i * n_per_axis + j; }

    /// Periodic neighbor along `axis` (1 or 2), `step` nodes away.
    int shift(int idx, int axis, int step) const {
        const int n = n_per_axis;
        auto wrap = [n](int v) { return ((v % n) + n) % n; };
        if (dim == 1) return wrap(idx + step);
        int i = idx / n, j = idx % n;
        if (axis == 1) i = wrap(i + step);
        else j = wrap(j + step);
        return i * n + j;
    }

    double coord(int idx, int axis) const {
        if (dim == 1) return idx * spacing;
        return axis == 1 ? (idx / n_per_axis) * spacing : (idx % n_per_axis) * spacing;
    }

    bool operator==(const TorusGrid&) const = default;
};

/// Grid function: nodal values in the grid's row-major ordering.
struct Field {
    TorusGrid grid;
    Eigen::VectorXd values;

    Field() = default;
    explicit Field(const TorusGrid& g) : grid(g), values(Eigen::VectorXd::Zero(g.node_count())) {}
    Field(const TorusGrid& g, Eigen::VectorXd v) : grid(g), values(std::move(v)) {
        if (values.size() != grid.node_count())
            throw std::invalid_argument("Field: value length does not match grid node count");
    }
};

/// Per-node upwind stencil tuples, one row per node, 2*dim columns.
/// Column order: (D1+ y, D1- y) for dim 1 and (D1+ y, D1- y, D2+ y, D2- y)
/// for dim 2, all evaluated at the node itself.
struct UpwindStencilField {
    TorusGrid grid;
    Eigen::MatrixXd values;
};

/// One-sided difference (D_axis^sign y) with periodic wrap. axis is 1 or 2,
/// sign is +1 or -1.
Eigen::VectorXd one_sided_diff(const TorusGrid& grid, const Eigen::VectorXd& y, int axis, int sign);

/// Three-point (dim 1) or five-point (dim 2) periodic Laplacian; approximates
/// the continuous Laplacian, so it is negative semidefinite.
Eigen::VectorXd laplacian(const TorusGrid& grid, const Eigen::VectorXd& y);

/// All one-sided differences collected per node; see UpwindStencilField.
Eigen::MatrixXd upwind_stencil(const TorusGrid& grid, const Eigen::VectorXd& y);

/// Discrete pairing <a,b>_h = h^dim * sum_i a_i b_i. Uses a fixed-order
/// pairwise summation so the result does not depend on any parallel schedule.
double inner_h(const TorusGrid& grid, const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Fixed-order pairwise sum of the entries of v (same accumulation order as
/// inner_h).
double pairwise_sum(const Eigen::VectorXd& v);

/// Sparse matrix of the periodic Laplacian in the grid ordering.
Eigen::SparseMatrix<double> laplacian_matrix(const TorusGrid& grid);

/// Solves (I - Lap_h)^repeats out = rhs with a cached sparse Cholesky
/// factorization. The factorization is cached per grid since nonlocal
/// couplings apply it at every residual evaluation.
Eigen::VectorXd helmholtz_solve(const TorusGrid& grid, const Eigen::VectorXd& rhs, int repeats);

/// Dense matrix of (I - Lap_h)^{-repeats}, cached per (grid, repeats).
/// Used when assembling Jacobians of nonlocal couplings.
const Eigen::MatrixXd& helmholtz_inverse_dense(const TorusGrid& grid, int repeats);

// Field-level wrappers.
Field one_sided_diff(const Field& y, int axis, int sign);
Field laplacian(const Field& y);
UpwindStencilField upwind_stencil(const Field& y);
double inner_h(const Field& a, const Field& b);
Field helmholtz_solve(const Field& rhs, int repeats);

}  // namespace mfg
