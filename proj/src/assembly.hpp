#pragma once

#include <Eigen/Sparse>
#include <vector>

#include "torus_grid.hpp"

namespace mfg {

using Triplets = std::vector<Eigen::Triplet<double>>;

/// Rows i of: scale * rowscale_i * (D_axis^sign v)_i, inserted at (row0, col0).
inline void add_diff_rowscaled(const TorusGrid& grid, int axis, int sign,
                               const Eigen::VectorXd& rowscale, int row0, int col0, double scale,
                               Triplets& out) {
    const double inv_h = 1.0 / grid.spacing;
    const int n = grid.node_count();
    for (int i = 0; i < n; ++i) {
        const double c = scale * rowscale[i] * inv_h;
        if (c == 0.0) continue;
        if (sign > 0) {
            out.emplace_back(row0 + i, col0 + grid.shift(i, axis, 1), c);
            out.emplace_back(row0 + i, col0 + i, -c);
        } else {
            out.emplace_back(row0 + i, col0 + i, c);
            out.emplace_back(row0 + i, col0 + grid.shift(i, axis, -1), -c);
        }
    }
}

/// Rows i of: scale * (D_axis^sign (colscale .* v))_i, inserted at (row0, col0).
inline void add_diff_colscaled(const TorusGrid& grid, int axis, int sign,
                               const Eigen::VectorXd& colscale, int row0, int col0, double scale,
                               Triplets& out) {
    const double inv_h = 1.0 / grid.spacing;
    const int n = grid.node_count();
    for (int i = 0; i < n; ++i) {
        if (sign > 0) {
            const int ip = grid.shift(i, axis, 1);
            out.emplace_back(row0 + i, col0 + ip, scale * colscale[ip] * inv_h);
            out.emplace_back(row0 + i, col0 + i, -scale * colscale[i] * inv_h);
        } else {
            const int im = grid.shift(i, axis, -1);
            out.emplace_back(row0 + i, col0 + i, scale * colscale[i] * inv_h);
            out.emplace_back(row0 + i, col0 + im, -scale * colscale[im] * inv_h);
        }
    }
}

/// Rows i of: scale * (D_da^ds ( w .* (D_qa^qs v) ))_i at (row0, col0);
/// the divergence-form second-order pattern of the transport linearization.
inline void add_div_form(const TorusGrid& grid, int da, int ds, const Eigen::VectorXd& w, int qa,
                         int qs, int row0, int col0, double scale, Triplets& out) {
    const double inv_h = 1.0 / grid.spacing;
    const int n = grid.node_count();
    auto inner = [&](int node, int row, double coeff) {
        // emit coeff * w_node * (D_qa^qs v)_node distributed onto v entries
        const double c = coeff * w[node] * inv_h;
        if (c == 0.0) return;
        if (qs > 0) {
            out.emplace_back(row0 + row, col0 + grid.shift(node, qa, 1), c);
            out.emplace_back(row0 + row, col0 + node, -c);
        } else {
            out.emplace_back(row0 + row, col0 + node, c);
            out.emplace_back(row0 + row, col0 + grid.shift(node, qa, -1), -c);
        }
    };
    for (int i = 0; i < n; ++i) {
        if (ds > 0) {
            inner(grid.shift(i, da, 1), i, scale * inv_h);
            inner(i, i, -scale * inv_h);
        } else {
            inner(i, i, scale * inv_h);
            inner(grid.shift(i, da, -1), i, -scale * inv_h);
        }
    }
}

/// Laplacian entries scaled by `scale` at (row0, col0).
inline void add_laplacian(const TorusGrid& grid, int row0, int col0, double scale, Triplets& out) {
    const double inv_h2 = scale / (grid.spacing * grid.spacing);
    const int n = grid.node_count();
    for (int i = 0; i < n; ++i) {
        out.emplace_back(row0 + i, col0 + i, -2.0 * grid.dim * inv_h2);
        for (int axis = 1; axis <= grid.dim; ++axis) {
            out.emplace_back(row0 + i, col0 + grid.shift(i, axis, 1), inv_h2);
            out.emplace_back(row0 + i, col0 + grid.shift(i, axis, -1), inv_h2);
        }
    }
}

inline void add_identity(int n, int row0, int col0, double scale, Triplets& out) {
    for (int i = 0; i < n; ++i) out.emplace_back(row0 + i, col0 + i, scale);
}

/// Stencil component l -> (axis, sign) of the one-sided difference it holds.
inline void stencil_component(int l, int& axis, int& sign) {
    axis = l / 2 + 1;
    sign = (l % 2 == 0) ? +1 : -1;
}

}  // namespace mfg
