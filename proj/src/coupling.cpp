#include "coupling.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mfg {

Coupling Coupling::power(double exponent) {
    Coupling c;
    c.kind_ = Kind::Power;
    c.exponent_ = exponent;
    return c;
}

Coupling Coupling::log_scaled(double k) {
    if (k == 0.0) throw std::invalid_argument("log_scaled: k must be nonzero");
    Coupling c;
    c.kind_ = Kind::LogScaled;
    c.log_scale_ = k;
    return c;
}

Coupling Coupling::local_drift(ScalarField bx, ScalarField by) {
    Coupling c;
    c.kind_ = Kind::LocalDrift;
    c.drift_x_ = std::move(bx);
    c.drift_y_ = std::move(by);
    return c;
}

Coupling Coupling::nonlocal_smooth(double scale) {
    Coupling c;
    c.kind_ = Kind::NonlocalSmooth;
    c.nonlocal_scale_ = scale;
    return c;
}

Eigen::VectorXd Coupling::drift_component(const TorusGrid& grid, int axis) const {
    const auto& fn = axis == 1 ? drift_x_ : drift_y_;
    Eigen::VectorXd b(grid.node_count());
    for (int i = 0; i < grid.node_count(); ++i)
        b[i] = fn ? fn(grid.coord(i, 1), grid.dim == 2 ? grid.coord(i, 2) : 0.0) : 0.0;
    return b;
}

Eigen::VectorXd Coupling::apply(const TorusGrid& grid, const Eigen::VectorXd& m) const {
    switch (kind_) {
        case Kind::Power:
            return m.array().pow(exponent_).matrix();
        case Kind::LogScaled: {
            for (int i = 0; i < m.size(); ++i) {
                if (m[i] <= 0.0) {
                    std::ostringstream msg;
                    msg << "log coupling: non-positive density " << m[i] << " at node " << i;
                    throw std::domain_error(msg.str());
                }
            }
            return (m.array().log() / log_scale_).matrix();
        }
        case Kind::LocalDrift: {
            Eigen::VectorXd grad_x =
                0.5 * (one_sided_diff(grid, m, 1, +1) + one_sided_diff(grid, m, 1, -1));
            Eigen::VectorXd out = m.cwiseProduct(m) + drift_component(grid, 1).cwiseProduct(grad_x);
            if (grid.dim == 2) {
                Eigen::VectorXd grad_y =
                    0.5 * (one_sided_diff(grid, m, 2, +1) + one_sided_diff(grid, m, 2, -1));
                out += drift_component(grid, 2).cwiseProduct(grad_y);
            }
            return out;
        }
        case Kind::NonlocalSmooth:
            return nonlocal_scale_ * helmholtz_solve(grid, m, 2);
    }
    return m;
}

Eigen::VectorXd Coupling::componentwise_derivative(const Eigen::VectorXd& m) const {
    if (kind_ == Kind::Power) return exponent_ * m.array().pow(exponent_ - 1.0).matrix();
    return (1.0 / (log_scale_ * m.array())).matrix();
}

Eigen::VectorXd Coupling::jacobian_apply(const TorusGrid& grid, const Eigen::VectorXd& m,
                                         const Eigen::VectorXd& v) const {
    switch (kind_) {
        case Kind::Power:
        case Kind::LogScaled:
            return componentwise_derivative(m).cwiseProduct(v);
        case Kind::LocalDrift: {
            Eigen::VectorXd grad_x =
                0.5 * (one_sided_diff(grid, v, 1, +1) + one_sided_diff(grid, v, 1, -1));
            Eigen::VectorXd out = 2.0 * m.cwiseProduct(v) + drift_component(grid, 1).cwiseProduct(grad_x);
            if (grid.dim == 2) {
                Eigen::VectorXd grad_y =
                    0.5 * (one_sided_diff(grid, v, 2, +1) + one_sided_diff(grid, v, 2, -1));
                out += drift_component(grid, 2).cwiseProduct(grad_y);
            }
            return out;
        }
        case Kind::NonlocalSmooth:
            return nonlocal_scale_ * helmholtz_solve(grid, v, 2);
    }
    return v;
}

Eigen::VectorXd Coupling::jacobian_apply_transpose(const TorusGrid& grid, const Eigen::VectorXd& m,
                                                   const Eigen::VectorXd& w) const {
    switch (kind_) {
        case Kind::Power:
        case Kind::LogScaled:
            return componentwise_derivative(m).cwiseProduct(w);
        case Kind::LocalDrift: {
            // Centered differences are skew-adjoint in the plain dot product,
            // so (diag(b) C)^T w = -C (b .* w).
            Eigen::VectorXd bw = drift_component(grid, 1).cwiseProduct(w);
            Eigen::VectorXd out = 2.0 * m.cwiseProduct(w) -
                0.5 * (one_sided_diff(grid, bw, 1, +1) + one_sided_diff(grid, bw, 1, -1));
            if (grid.dim == 2) {
                Eigen::VectorXd bw2 = drift_component(grid, 2).cwiseProduct(w);
                out -= 0.5 * (one_sided_diff(grid, bw2, 2, +1) + one_sided_diff(grid, bw2, 2, -1));
            }
            return out;
        }
        case Kind::NonlocalSmooth:
            return nonlocal_scale_ * helmholtz_solve(grid, w, 2);  // symmetric
    }
    return w;
}

void Coupling::jacobian_triplets(const TorusGrid& grid, const Eigen::VectorXd& m, int row0, int col0,
                                 double scale, std::vector<Eigen::Triplet<double>>& out) const {
    const int n = grid.node_count();
    switch (kind_) {
        case Kind::Power:
        case Kind::LogScaled: {
            Eigen::VectorXd d = componentwise_derivative(m);
            for (int i = 0; i < n; ++i) out.emplace_back(row0 + i, col0 + i, scale * d[i]);
            return;
        }
        case Kind::LocalDrift: {
            const double inv_2h = 0.5 / grid.spacing;
            for (int axis = 1; axis <= grid.dim; ++axis) {
                Eigen::VectorXd b = drift_component(grid, axis);
                for (int i = 0; i < n; ++i) {
                    out.emplace_back(row0 + i, col0 + grid.shift(i, axis, 1), scale * b[i] * inv_2h);
                    out.emplace_back(row0 + i, col0 + grid.shift(i, axis, -1), -scale * b[i] * inv_2h);
                }
            }
            for (int i = 0; i < n; ++i) out.emplace_back(row0 + i, col0 + i, scale * 2.0 * m[i]);
            return;
        }
        case Kind::NonlocalSmooth: {
            const Eigen::MatrixXd& inv = helmholtz_inverse_dense(grid, 2);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    out.emplace_back(row0 + i, col0 + j, scale * nonlocal_scale_ * inv(i, j));
            return;
        }
    }
}

}  // namespace mfg
