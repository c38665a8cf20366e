#pragma once

#include <Eigen/Dense>

#include "coupling.hpp"
#include "hamiltonian.hpp"
#include "torus_grid.hpp"

namespace mfg {

/// Signs with which the spatial cost and the coupling enter the HJB residual
/// block. The generic assembler writes
///   nu*Lap u - g + f_sign*f(m) + v_sign*V + lambda
/// so a preset whose equation moves V or f to the other side stores the
/// corresponding sign here.
struct SignConvention {
    double v_sign = 1.0;
    double f_sign = 1.0;
};

/// Discrete MFG problem data. time_slices == 0 means stationary; otherwise
/// the fields initial_density / terminal_value carry the frozen endpoint
/// slices M_0 and U_{N_T} and dt() = horizon / time_slices.
struct MfgProblem {
    TorusGrid grid;
    double viscosity = 0.0;
    NumericalHamiltonian hamiltonian;
    Coupling coupling;
    Eigen::VectorXd spatial_cost;  // V_h
    SignConvention signs;

    double horizon = 0.0;
    int time_slices = 0;
    Eigen::VectorXd initial_density;  // M_0, renormalized to <M_0,1>_h = 1
    Eigen::VectorXd terminal_value;   // U_{N_T}

    bool time_dependent() const { return time_slices > 0; }
    double dt() const { return horizon / time_slices; }

    static MfgProblem stationary(const TorusGrid& grid, double viscosity,
                                 NumericalHamiltonian ham, Coupling coupling,
                                 Eigen::VectorXd spatial_cost, SignConvention signs = {});

    /// Renormalizes the sampled initial density to unit discrete mass.
    static MfgProblem time_dependent_problem(const TorusGrid& grid, double viscosity,
                                             NumericalHamiltonian ham, Coupling coupling,
                                             Eigen::VectorXd spatial_cost, double horizon,
                                             int time_slices, Eigen::VectorXd initial_density,
                                             Eigen::VectorXd terminal_value,
                                             SignConvention signs = {});

    /// Copy with the Hamiltonian replaced by its smoothed variant.
    MfgProblem with_smoothed_hamiltonian(double eps) const;
};

/// Discrete transport operator B_h(U, M): divergence-form flux with
/// alpha^(l) = dg/dq_l evaluated at [D_h U] (and at the density M for
/// m-dependent Hamiltonians). Linear in M.
Eigen::VectorXd transport_operator(const MfgProblem& problem, const Eigen::VectorXd& u,
                                   const Eigen::VectorXd& m);

/// Defect of the discrete adjoint identity
///   <B_h(U,M), V>_h = <M .* grad_q g(., [D_h U]), [D_h V]>_h,
/// where the right side sums per-node stencil dot products with weight h^dim.
double adjoint_identity_check(const MfgProblem& problem, const Eigen::VectorXd& u,
                              const Eigen::VectorXd& m, const Eigen::VectorXd& vtest);

/// Per-node Hamiltonian values g(x_i, q_i, m_i) for a stencil matrix.
Eigen::VectorXd hamiltonian_values(const MfgProblem& problem, const Eigen::MatrixXd& stencil,
                                   const Eigen::VectorXd& m);

/// Per-node gradients dg/dq (N_x rows, 2*dim columns).
Eigen::MatrixXd hamiltonian_gradients(const MfgProblem& problem, const Eigen::MatrixXd& stencil,
                                      const Eigen::VectorXd& m);

}  // namespace mfg
