#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "torus_grid.hpp"

namespace mfg {

/// Kernel on scalar/vector coordinates. PeriodicGaussian and TorusMatern wrap
/// distances per axis (torus geometry); Gaussian uses plain distances and is
/// meant for the time axis of space-time product kernels.
struct KernelSpec {
    enum class Kind { PeriodicGaussian, TorusMatern, Gaussian };
    Kind kind = Kind::PeriodicGaussian;
    double lengthscale = 0.2;
    double matern_nu = 1.5;  // 0.5, 1.5 or 2.5

    double eval(const double* a, const double* b, int dim) const;
};

/// Gram factorization of K(X, X) + jitter I over a fixed node set.
/// Backs optimal-recovery rows, the RKHS norm, and the regularizer action.
class GramModel {
public:
    GramModel() = default;

    /// nodes: one row per point.
    static GramModel build(const KernelSpec& spec, Eigen::MatrixXd nodes, double jitter);
    /// Gram over all grid nodes.
    static GramModel on_grid(const KernelSpec& spec, const TorusGrid& grid, double jitter);
    /// Gram over the time grid t_k = k*T/NT, k = 0..NT.
    static GramModel on_time_grid(const KernelSpec& spec, double horizon, int slices, double jitter);

    int size() const { return static_cast<int>(nodes_.rows()); }
    int coord_dim() const { return static_cast<int>(nodes_.cols()); }
    const Eigen::MatrixXd& nodes() const { return nodes_; }
    const Eigen::MatrixXd& gram() const { return gram_; }
    double jitter() const { return jitter_; }

    /// K(x, X) (K(X,X) + jitter I)^{-1} as a dense row (returned as a vector).
    Eigen::VectorXd recovery_row(const double* target) const;
    /// Reconstruction of samples at a target point.
    double reconstruct(const Eigen::VectorXd& samples, const double* target) const;
    /// v^T (K + jitter I)^{-1} v.
    double norm_sq(const Eigen::VectorXd& v) const;
    /// (K + jitter I)^{-1} v (the J^T J action of the regularizer).
    Eigen::VectorXd inv_apply(const Eigen::VectorXd& v) const;
    /// J v with J = L^{-1} where K + jitter I = L L^T, so J^T J = (K + jitter I)^{-1}.
    Eigen::VectorXd j_apply(const Eigen::VectorXd& v) const;
    Eigen::VectorXd j_apply_transpose(const Eigen::VectorXd& v) const;
    /// (K + jitter I) v, used as a CG preconditioner by the outer optimizer.
    Eigen::VectorXd gram_apply(const Eigen::VectorXd& v) const;

private:
    KernelSpec spec_;
    Eigen::MatrixXd nodes_;
    Eigen::MatrixXd gram_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double jitter_ = 0.0;
};

/// Noisy pointwise observations of a field. Spatial targets have `dim`
/// columns; space-time targets carry the time in the last column.
struct ObservationSet {
    enum class Observes { Density, Cost };
    Observes observes = Observes::Density;
    bool spacetime = false;
    Eigen::MatrixXd targets;
    Eigen::VectorXd values;
    double noise_sigma = 0.0;

    int count() const { return static_cast<int>(values.size()); }
    void to_csv(const std::string& path) const;
    static ObservationSet from_csv(const std::string& path, Observes observes, bool spacetime);
};

/// Affine observation operator on a flattened state vector: z -> W z + w0.
class ObservationOperator {
public:
    virtual ~ObservationOperator() = default;
    virtual int count() const = 0;
    virtual int state_dim() const = 0;
    virtual Eigen::VectorXd apply(const Eigen::VectorXd& z) const = 0;
    virtual Eigen::VectorXd apply_transpose(const Eigen::VectorXd& w) const = 0;
};

/// Dense recovery rows reading a contiguous segment of the state.
class SegmentObservation : public ObservationOperator {
public:
    SegmentObservation(Eigen::MatrixXd rows, int state_dim, int segment_offset);
    int count() const override { return static_cast<int>(rows_.rows()); }
    int state_dim() const override { return state_dim_; }
    Eigen::VectorXd apply(const Eigen::VectorXd& z) const override;
    Eigen::VectorXd apply_transpose(const Eigen::VectorXd& w) const override;
    const Eigen::MatrixXd& rows() const { return rows_; }

private:
    Eigen::MatrixXd rows_;
    int state_dim_;
    int offset_;
};

/// Space-time density observations on the interior unknowns
/// [M_1..M_NT, U_0..U_{NT-1}]: recovery rows over the full stack
/// (M_0..M_NT) factor as kron(time row, space row); the frozen M_0 columns
/// fold into a constant offset so the interior map is affine.
class SpacetimeDensityObservation : public ObservationOperator {
public:
    SpacetimeDensityObservation(Eigen::MatrixXd time_rows, Eigen::MatrixXd space_rows,
                                const Eigen::VectorXd& frozen_initial, int slices);
    int count() const override { return static_cast<int>(time_rows_.rows()); }
    int state_dim() const override { return 2 * slices_ * nx_; }
    Eigen::VectorXd apply(const Eigen::VectorXd& z) const override;
    Eigen::VectorXd apply_transpose(const Eigen::VectorXd& w) const override;
    const Eigen::VectorXd& offset() const { return offset_; }
    /// Evaluation on the full stack (M_0..M_NT), for the fold consistency check.
    Eigen::VectorXd apply_full_stack(const Eigen::MatrixXd& slices) const;

private:
    Eigen::MatrixXd time_rows_;   // N_obs x (NT+1)
    Eigen::MatrixXd space_rows_;  // N_obs x nx
    Eigen::VectorXd offset_;
    int slices_;
    int nx_;
};

/// Recovery rows for spatial observations; targets taken mod 1 on each axis.
Eigen::MatrixXd build_observation_rows(const ObservationSet& obs, const GramModel& gram);

/// Space-time observation operator for the time-dependent inverse problem.
std::shared_ptr<SpacetimeDensityObservation> build_spacetime_observation(
    const ObservationSet& obs, const GramModel& spatial, const GramModel& temporal,
    const Eigen::VectorXd& frozen_initial, int slices, double horizon);

}  // namespace mfg
