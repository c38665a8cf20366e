#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <vector>

#include "problem.hpp"

namespace mfg {

/// Interior space-time unknowns Y = (M_1..M_NT, U_0..U_{NT-1}); the frozen
/// endpoint slices M_0 and U_NT live on the problem. M[k-1] holds M_k and
/// U[j] holds U_j. Feasible states have positive unit-mass density slices.
struct SpaceTimeState {
    std::vector<Eigen::VectorXd> M;
    std::vector<Eigen::VectorXd> U;
    int slices() const { return static_cast<int>(M.size()); }
};

/// Residual blocks r_k (HJB) and s_k (FP), k = 1..NT. r[k-1] holds r_k.
struct SpaceTimeResidual {
    std::vector<Eigen::VectorXd> r;
    std::vector<Eigen::VectorXd> s;
    double inf_norm() const;
};

/// Flow direction on the feasible manifold.
struct FlowDirection {
    std::vector<Eigen::VectorXd> Mdot;
    std::vector<Eigen::VectorXd> Udot;
};

struct TimedepTraceRow {
    int step = 0;
    double s = 0.0;
    double ds = 0.0;
    double res_inf = 0.0;
    double min_density = 0.0;
    double mass_dev = 0.0;
    double bregman = std::numeric_limits<double>::quiet_NaN();
};

struct TimedepTrace {
    std::vector<TimedepTraceRow> rows;
    bool converged = false;
    std::string message;
    void to_csv(const std::string& path) const;
};

struct TimedepNewtonConfig {
    double tol = 1e-10;
    int max_iter = 200;
    double smoothing = 1e-8;
    double tikhonov = 1e-10;
};

struct TimedepFlowConfig {
    double tol = 1e-8;
    int max_steps = 50000;
    double ds_init = 0.5;
    double ds_growth = 1.2;
    double ds_min = 1e-8;
    int newton_max = 5;
    double smoothing = 1e-8;
    int jacobian_max_age = 4;
};

SpaceTimeResidual residual_td(const MfgProblem& problem, const SpaceTimeState& y);

/// Space-time pairing Delta_t * sum_k <.,.>_h over all blocks, on flattened
/// stacks (state-shaped and residual-shaped stacks share the layout).
double spacetime_pairing(const MfgProblem& problem, const Eigen::VectorXd& a,
                         const Eigen::VectorXd& b);

/// <F_h(Y) - F_h(Yt), Y - Yt>_{h,dt}; strictly positive for Y != Yt under the
/// monotonicity assumptions.
double monotonicity_gap(const MfgProblem& problem, const SpaceTimeState& y,
                        const SpaceTimeState& yt);

/// Explicit HRF direction: Mdot_k = -M_k .* (r_k - rbar_k 1) with
/// rbar_k = <M_k, r_k>_h / <M_k, 1>_h, and Udot_{k-1} = -s_k.
FlowDirection hrf_rhs(const MfgProblem& problem, const SpaceTimeState& y);

/// Strictly convex entropy E(Y) = dt sum_k <M_k, log M_k - 1>_h
/// + (dt/2) sum_k <U_k, U_k>_h.
double entropy(const MfgProblem& problem, const SpaceTimeState& y);

/// Bregman divergence D_E(Y*, Y) >= 0 induced by the entropy.
double bregman(const MfgProblem& problem, const SpaceTimeState& y_star, const SpaceTimeState& y);

/// Implicit-Euler integration of the HRF until ||F_h||_inf < tol. When
/// `reference` is supplied the trace records D_E(reference, Y(s)) per step.
SpaceTimeState hrf_timedep_solve(const MfgProblem& problem, const SpaceTimeState& init,
                                 const TimedepFlowConfig& cfg, TimedepTrace* trace = nullptr,
                                 const SpaceTimeState* reference = nullptr);

/// Damped Newton root solve of F_h(Y) = 0 (no constraints needed: endpoint
/// freezing fixes the gauge and the masses propagate from M_0).
SpaceTimeState newton_timedep_solve(const MfgProblem& problem, const SpaceTimeState& init,
                                    const TimedepNewtonConfig& cfg, TimedepTrace* trace = nullptr);

/// Sparse Jacobian of the stacked residual [r_1..r_NT, s_1..s_NT] with
/// respect to the stacked state [M_1..M_NT, U_0..U_{NT-1}].
Eigen::SparseMatrix<double> timedep_jacobian(const MfgProblem& problem, const SpaceTimeState& y);

Eigen::VectorXd flatten(const SpaceTimeState& y);
Eigen::VectorXd flatten(const SpaceTimeResidual& f);
SpaceTimeState unflatten_state(const MfgProblem& problem, const Eigen::VectorXd& z);

/// Feasible default: M_k = M_0, U_k = U_NT.
SpaceTimeState default_timedep_init(const MfgProblem& problem);

double max_mass_deviation(const MfgProblem& problem, const SpaceTimeState& y);
double min_density(const SpaceTimeState& y);

}  // namespace mfg
