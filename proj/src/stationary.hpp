#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "problem.hpp"

namespace mfg {

/// Stationary equilibrium: density, value, and the eliminated ergodic
/// constant. Invariants at a converged state: <M,1>_h = 1, M > 0
/// componentwise, <U,1>_h = 0 (gauge).
struct StationaryState {
    Eigen::VectorXd M;
    Eigen::VectorXd U;
    double lambda = 0.0;
};

/// HJB block R^(m) and FP block R^(u) with lambda eliminated, so
/// <M, R^(m)>_h = 0 and <R^(u), 1>_h = 0 hold identically.
struct StationaryResidual {
    Eigen::VectorXd hjb;
    Eigen::VectorXd fp;
    double lambda = 0.0;
    double inf_norm() const {
        return std::max(hjb.lpNorm<Eigen::Infinity>(), fp.lpNorm<Eigen::Infinity>());
    }
};

struct StationaryTraceRow {
    int step = 0;
    double residual_norm = 0.0;
    double lambda = 0.0;
    double min_density = 0.0;
    double step_size = 0.0;
};

struct StationaryTrace {
    std::vector<StationaryTraceRow> rows;
    bool converged = false;
    std::string message;
    void to_csv(const std::string& path) const;
};

struct FlowConfig {
    double tol = 1e-9;
    int max_steps = 50000;
    double ds_init = 0.5;
    double ds_growth = 1.2;
    double ds_min = 1e-8;
    int newton_max = 5;
    double smoothing = 1e-8;   // clamp smoothing used for step Jacobians
    int jacobian_max_age = 4;  // refactor cadence for the modified Newton
};

struct NewtonConfig {
    double tol = 1e-9;
    int max_iter = 200;
    double smoothing = 1e-8;
    double tikhonov = 1e-10;
    bool finite_difference_jacobian = false;  // fallback for custom Hamiltonians
};

struct PolicyConfig {
    double tol = 1e-9;
    int max_iter = 500;
};

/// lambda = -<M, nu*Lap U - g + f_sign f(M) + v_sign V>_h / <M,1>_h.
double lambda_eliminate(const MfgProblem& problem, const Eigen::VectorXd& M,
                        const Eigen::VectorXd& U);

StationaryResidual stationary_residual(const MfgProblem& problem, const Eigen::VectorXd& M,
                                       const Eigen::VectorXd& U);

/// Dense Jacobian of the lambda-eliminated residual [R^(m); R^(u)] with
/// respect to z = (M, U); includes the rank-one terms from the elimination.
Eigen::MatrixXd stationary_jacobian(const MfgProblem& problem, const Eigen::VectorXd& M,
                                    const Eigen::VectorXd& U);

/// d residual / d V_h applied to p (identity into R^(m) plus the elimination
/// rank-one), and its transpose.
Eigen::VectorXd stationary_dresidual_dcost(const MfgProblem& problem, const Eigen::VectorXd& M,
                                           const Eigen::VectorXd& p);
Eigen::VectorXd stationary_dresidual_dcost_transpose(const MfgProblem& problem,
                                                     const Eigen::VectorXd& M,
                                                     const Eigen::VectorXd& w);

/// Positivity-preserving Hessian-Riemannian flow dM/ds = -M .* R^(m),
/// dU/ds = -R^(u), integrated by implicit Euler with adaptive step size.
StationaryState hrf_stationary_solve(const MfgProblem& problem, const StationaryState& init,
                                     const FlowConfig& cfg, StationaryTrace* trace = nullptr);

/// Damped Newton on the extended system [F_h; <M,1>_h - 1; <U,1>_h].
StationaryState newton_stationary_solve(const MfgProblem& problem, const StationaryState& init,
                                        const NewtonConfig& cfg, StationaryTrace* trace = nullptr);

/// Policy iteration: freeze the policy, solve the linear FP system with mass
/// normalization, then the policy-linearized HJB system for (U, lambda) with
/// the zero-mean gauge.
StationaryState policy_iteration_solve(const MfgProblem& problem, const StationaryState& init,
                                       const PolicyConfig& cfg, StationaryTrace* trace = nullptr);

StationaryState default_stationary_init(const MfgProblem& problem);

}  // namespace mfg
