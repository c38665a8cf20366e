#include "problem.hpp"

#include <cmath>
#include <stdexcept>

namespace mfg {

MfgProblem MfgProblem::stationary(const TorusGrid& grid, double viscosity, NumericalHamiltonian ham,
                                  Coupling coupling, Eigen::VectorXd spatial_cost,
                                  SignConvention signs) {
    if (spatial_cost.size() != grid.node_count())
        throw std::invalid_argument("MfgProblem: spatial cost length mismatch");
    MfgProblem p;
    p.grid = grid;
    p.viscosity = viscosity;
    p.hamiltonian = std::move(ham);
    p.coupling = std::move(coupling);
    p.spatial_cost = std::move(spatial_cost);
    p.signs = signs;
    return p;
}

MfgProblem MfgProblem::time_dependent_problem(const TorusGrid& grid, double viscosity,
                                              NumericalHamiltonian ham, Coupling coupling,
                                              Eigen::VectorXd spatial_cost, double horizon,
                                              int time_slices, Eigen::VectorXd initial_density,
                                              Eigen::VectorXd terminal_value, SignConvention signs) {
    if (time_slices <= 0) throw std::invalid_argument("MfgProblem: time_slices must be positive");
    if (horizon <= 0.0) throw std::invalid_argument("MfgProblem: horizon must be positive");
    if (initial_density.size() != grid.node_count() || terminal_value.size() != grid.node_count())
        throw std::invalid_argument("MfgProblem: endpoint slice length mismatch");
    MfgProblem p = stationary(grid, viscosity, std::move(ham), std::move(coupling),
                              std::move(spatial_cost), signs);
    p.horizon = horizon;
    p.time_slices = time_slices;
    const double mass = inner_h(grid, initial_density, Eigen::VectorXd::Ones(grid.node_count()));
    if (mass <= 0.0) throw std::invalid_argument("MfgProblem: initial density has non-positive mass");
    p.initial_density = initial_density / mass;
    p.terminal_value = std::move(terminal_value);
    return p;
}

MfgProblem MfgProblem::with_smoothed_hamiltonian(double eps) const {
    MfgProblem p = *this;
    p.hamiltonian = hamiltonian.smoothed(eps);
    return p;
}

Eigen::VectorXd hamiltonian_values(const MfgProblem& problem, const Eigen::MatrixXd& stencil,
                                   const Eigen::VectorXd& m) {
    const TorusGrid& grid = problem.grid;
    const int n = grid.node_count();
    Eigen::VectorXd g(n);
    double q[4] = {0, 0, 0, 0};
    for (int i = 0; i < n; ++i) {
        for (int l = 0; l < grid.stencil_width(); ++l) q[l] = stencil(i, l);
        g[i] = problem.hamiltonian.value(grid.coord(i, 1), grid.dim == 2 ? grid.coord(i, 2) : 0.0, q,
                                         m.size() ? m[i] : 0.0);
    }
    return g;
}

Eigen::MatrixXd hamiltonian_gradients(const MfgProblem& problem, const Eigen::MatrixXd& stencil,
                                      const Eigen::VectorXd& m) {
    const TorusGrid& grid = problem.grid;
    const int n = grid.node_count();
    const int w = grid.stencil_width();
    Eigen::MatrixXd alpha(n, w);
    double q[4] = {0, 0, 0, 0};
    double out[4];
    for (int i = 0; i < n; ++i) {
        for (int l = 0; l < w; ++l) q[l] = stencil(i, l);
        problem.hamiltonian.grad_q(grid.coord(i, 1), grid.dim == 2 ? grid.coord(i, 2) : 0.0, q,
                                   m.size() ? m[i] : 0.0, out);
        for (int l = 0; l < w; ++l) alpha(i, l) = out[l];
    }
    return alpha;
}

Eigen::VectorXd transport_operator(const MfgProblem& problem, const Eigen::VectorXd& u,
                                   const Eigen::VectorXd& m) {
    const TorusGrid& grid = problem.grid;
    Eigen::MatrixXd q = upwind_stencil(grid, u);
    Eigen::MatrixXd alpha = hamiltonian_gradients(problem, q, m);
    // B_h = -D1-(M a1) - D1+(M a2) [- D2-(M a3) - D2+(M a4)]
    Eigen::VectorXd out = -one_sided_diff(grid, m.cwiseProduct(alpha.col(0)), 1, -1) -
                          one_sided_diff(grid, m.cwiseProduct(alpha.col(1)), 1, +1);
    if (grid.dim == 2) {
        out -= one_sided_diff(grid, m.cwiseProduct(alpha.col(2)), 2, -1);
        out -= one_sided_diff(grid, m.cwiseProduct(alpha.col(3)), 2, +1);
    }
    return out;
}

double adjoint_identity_check(const MfgProblem& problem, const Eigen::VectorXd& u,
                              const Eigen::VectorXd& m, const Eigen::VectorXd& vtest) {
    const TorusGrid& grid = problem.grid;
    Eigen::VectorXd b = transport_operator(problem, u, m);
    const double lhs = inner_h(grid, b, vtest);
    Eigen::MatrixXd alpha = hamiltonian_gradients(problem, upwind_stencil(grid, u), m);
    Eigen::MatrixXd qv = upwind_stencil(grid, vtest);
    Eigen::VectorXd per_node = (alpha.array() * qv.array()).rowwise().sum().matrix();
    const double rhs = inner_h(grid, m.cwiseProduct(per_node), Eigen::VectorXd::Ones(grid.node_count()));
    return std::abs(lhs - rhs);
}

}  // namespace mfg
