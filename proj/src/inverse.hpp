#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "kernels.hpp"
#include "problem.hpp"
#include "stationary.hpp"
#include "timedep.hpp"

namespace mfg {

struct InnerReport {
    bool converged = false;
    int iterations = 0;
    double residual_inf = 0.0;
};

/// Thrown when the inner solver fails at a requested parameter value.
class InnerSolveError : public std::runtime_error {
public:
    InnerSolveError(const std::string& what, InnerReport report)
        : std::runtime_error(what), report(report) {}
    InnerReport report;
};

/// Factored linearization of the equilibrium constraints at (z*, theta):
/// the KKT system [[dF/dz, A^T], [A, 0]] (plain dF/dz when q = 0).
class LinearizedEquilibrium {
public:
    virtual ~LinearizedEquilibrium() = default;
    /// Solves dF/dz^T psi + A^T eta = rhs with A psi = 0; returns psi.
    virtual Eigen::VectorXd solve_adjoint(const Eigen::VectorXd& rhs) const = 0;
    /// Solves dF/dz dz = rhs with A dz = 0; returns dz.
    virtual Eigen::VectorXd solve_sensitivity(const Eigen::VectorXd& rhs) const = 0;
};

/// Equilibrium constraint F(z, theta) = 0, A z = b with an attached inner
/// solver. The outer optimization only differentiates these constraints at
/// the converged state, never the solver iterations.
class EquilibriumModel {
public:
    virtual ~EquilibriumModel() = default;
    virtual int state_dim() const = 0;
    virtual int param_dim() const = 0;
    virtual int constraint_count() const = 0;

    virtual Eigen::VectorXd solve_forward(const Eigen::VectorXd& theta,
                                          const Eigen::VectorXd* warm_start,
                                          InnerReport* report) const = 0;
    virtual Eigen::VectorXd residual(const Eigen::VectorXd& z, const Eigen::VectorXd& theta) const = 0;
    virtual Eigen::VectorXd constraint_defect(const Eigen::VectorXd& z) const = 0;

    virtual Eigen::VectorXd apply_dF_dz(const Eigen::VectorXd& z, const Eigen::VectorXd& theta,
                                        const Eigen::VectorXd& v) const = 0;
    virtual Eigen::VectorXd apply_dF_dz_transpose(const Eigen::VectorXd& z,
                                                  const Eigen::VectorXd& theta,
                                                  const Eigen::VectorXd& w) const = 0;
    virtual Eigen::VectorXd apply_dF_dtheta(const Eigen::VectorXd& z, const Eigen::VectorXd& theta,
                                            const Eigen::VectorXd& p) const = 0;
    virtual Eigen::VectorXd apply_dF_dtheta_transpose(const Eigen::VectorXd& z,
                                                      const Eigen::VectorXd& theta,
                                                      const Eigen::VectorXd& w) const = 0;

    virtual std::unique_ptr<LinearizedEquilibrium> linearize(const Eigen::VectorXd& z,
                                                             const Eigen::VectorXd& theta) const = 0;
};

/// Stationary model: z = (M, U), q = 2 constraints (unit mass, zero-mean
/// value), lambda eliminated inside the residual.
std::shared_ptr<EquilibriumModel> make_stationary_model(MfgProblem base, std::string inner_solver,
                                                        double inner_tol, int inner_max_iter);

/// Time-dependent model: z = (M_1..M_NT, U_0..U_{NT-1}), q = 0.
std::shared_ptr<EquilibriumModel> make_timedep_model(MfgProblem base, std::string inner_solver,
                                                     double inner_tol, int inner_max_iter);

/// Reduced objective
///   J(theta) = alpha/2 |J theta|^2 + beta/2 |W z*(theta) - z_obs|^2
///            + gamma/2 |G theta - theta_obs|^2
/// with J^T J = (K_V(X,X) + jitter I)^{-1} supplied by the regularizer Gram.
struct InverseProblem {
    std::shared_ptr<EquilibriumModel> model;
    std::shared_ptr<ObservationOperator> density_obs;  // W (affine)
    Eigen::VectorXd density_data;                      // z_obs
    Eigen::MatrixXd cost_rows;                         // G
    Eigen::VectorXd cost_data;                         // theta_obs
    std::shared_ptr<GramModel> regularizer;            // J^T J action
    double alpha = 0.0;
    double beta = 1.0;
    double gamma = 1.0;
};

struct OuterTraceRow {
    int iter = 0;
    double objective = 0.0;
    double grad_or_step_norm = 0.0;
    int inner_iters = 0;
    double seconds = 0.0;
};

struct OuterTrace {
    std::vector<OuterTraceRow> rows;
    bool converged = false;
    std::string message;
    void to_csv(const std::string& path) const;
};

struct OuterConfig {
    double objective_change_tol = 1e-6;
    int max_iter = 500;
    double gd_step_init = 1.0;
    double gd_shrink = 0.5;
    double gd_armijo = 1e-4;
    double cg_tol = 1e-8;
    int cg_max_iter = 200;
    double levenberg = 0.0;  // added to J^T J when CG stalls
};

/// Cached inner solution, reused by gradient/GN evaluations at the same theta.
struct EquilibriumCache {
    Eigen::VectorXd theta;
    Eigen::VectorXd z;
    bool valid = false;
    int last_inner_iterations = 0;
};

/// Objective value at theta; solves (or reuses) the equilibrium state.
double evaluate_objective(const InverseProblem& ip, const Eigen::VectorXd& theta,
                          EquilibriumCache& cache);

/// Residual vector r(theta) of the least-squares form; requires a cached z.
Eigen::VectorXd objective_residual(const InverseProblem& ip, const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& z);

/// Adjoint gradient per the implicit-differentiation formula; `lin` must be a
/// linearization at (cache.z, theta). The adjoint solve is skipped when
/// beta = 0.
Eigen::VectorXd adjoint_gradient(const InverseProblem& ip, const Eigen::VectorXd& theta,
                                 const Eigen::VectorXd& z, const LinearizedEquilibrium* lin);

struct GnStepReport {
    int cg_iterations = 0;
    bool cg_converged = false;
    double normal_residual = 0.0;  // |J_r^T (r + J_r p)|
};

/// Gauss-Newton increment from (J_r^T J_r) p = -J_r^T r, solved matrix-free
/// by preconditioned conjugate gradients; every matvec costs one sensitivity
/// and one adjoint solve against the factored KKT system.
Eigen::VectorXd gn_step(const InverseProblem& ip, const Eigen::VectorXd& theta,
                        const Eigen::VectorXd& z, const LinearizedEquilibrium* lin,
                        const OuterConfig& cfg, GnStepReport* report = nullptr);

struct OuterResult {
    Eigen::VectorXd theta;
    Eigen::VectorXd z;
    OuterTrace trace;
    bool converged = false;
};

/// Outer loop: "gd" (Armijo backtracking) or "gn" (full step with fallback
/// halving). Terminates when the objective change drops below
/// cfg.objective_change_tol or the iteration cap is reached.
OuterResult run_outer(const InverseProblem& ip, const std::string& method,
                      const Eigen::VectorXd& theta_init, const OuterConfig& cfg);

}  // namespace mfg
