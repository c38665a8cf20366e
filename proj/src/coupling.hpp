#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>

#include "torus_grid.hpp"

namespace mfg {

/// Coupling f applied to grid densities, with its derivative exposed both as
/// an operator action and as assembly primitives for Jacobians.
///
/// Kinds: power(m^p, cubic is power(3)), log_scaled(ln(m)/k),
/// local_drift(m^2 + b(x,y).grad m with centered differences), and
/// nonlocal_smooth(c (I - Lap)^-2 m). The componentwise kinds (power, log)
/// are strictly increasing on positive densities.
class Coupling {
public:
    enum class Kind { Power, LogScaled, LocalDrift, NonlocalSmooth };

    using ScalarField = std::function<double(double x, double y)>;

    Coupling() = default;
    static Coupling power(double exponent);
    static Coupling log_scaled(double k);
    static Coupling local_drift(ScalarField bx, ScalarField by);
    static Coupling nonlocal_smooth(double scale);

    Kind kind() const { return kind_; }
    bool componentwise() const { return kind_ == Kind::Power || kind_ == Kind::LogScaled; }
    /// Componentwise kinds need strictly positive densities (log rejects m <= 0).
    bool requires_positive() const { return kind_ == Kind::LogScaled; }

    Eigen::VectorXd apply(const TorusGrid& grid, const Eigen::VectorXd& m) const;
    Eigen::VectorXd jacobian_apply(const TorusGrid& grid, const Eigen::VectorXd& m,
                                   const Eigen::VectorXd& v) const;
    Eigen::VectorXd jacobian_apply_transpose(const TorusGrid& grid, const Eigen::VectorXd& m,
                                             const Eigen::VectorXd& w) const;
    /// Appends scale * (df/dm at m) into the triplet list at offset (row0, col0).
    void jacobian_triplets(const TorusGrid& grid, const Eigen::VectorXd& m, int row0, int col0,
                           double scale, std::vector<Eigen::Triplet<double>>& out) const;

private:
    Kind kind_ = Kind::Power;
    double exponent_ = 1.0;
    double log_scale_ = 1.0;   // k in ln(m)/k
    double nonlocal_scale_ = 1.0;
    ScalarField drift_x_, drift_y_;

    Eigen::VectorXd drift_component(const TorusGrid& grid, int axis) const;
    Eigen::VectorXd componentwise_derivative(const Eigen::VectorXd& m) const;
};

}  // namespace mfg
