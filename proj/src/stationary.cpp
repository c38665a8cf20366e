#include "stationary.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <cmath>
#include <fstream>
#include <limits>

#include "assembly.hpp"

namespace mfg {

void StationaryTrace::to_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open trace file " + path);
    out << "step,residual_norm,lambda,min_density,step_size\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", r.step, r.residual_norm,
                      r.lambda, r.min_density, r.step_size);
        out << buf;
    }
}

namespace {

// nu*Lap U - g + f_sign f(M) + v_sign V  (the HJB block before adding lambda)
Eigen::VectorXd hjb_base(const MfgProblem& p, const Eigen::VectorXd& M, const Eigen::VectorXd& U) {
    Eigen::MatrixXd q = upwind_stencil(p.grid, U);
    Eigen::VectorXd g = hamiltonian_values(p, q, M);
    Eigen::VectorXd out = -g + p.signs.f_sign * p.coupling.apply(p.grid, M) +
                          p.signs.v_sign * p.spatial_cost;
    if (p.viscosity != 0.0) out += p.viscosity * laplacian(p.grid, U);
    return out;
}

}  // namespace

double lambda_eliminate(const MfgProblem& problem, const Eigen::VectorXd& M,
                        const Eigen::VectorXd& U) {
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(problem.grid.node_count());
    const double mass = inner_h(problem.grid, M, ones);
    if (mass <= 0.0) throw std::domain_error("lambda_eliminate: total mass is not positive");
    return -inner_h(problem.grid, M, hjb_base(problem, M, U)) / mass;
}

StationaryResidual stationary_residual(const MfgProblem& problem, const Eigen::VectorXd& M,
                                       const Eigen::VectorXd& U) {
    StationaryResidual r;
    Eigen::VectorXd base = hjb_base(problem, M, U);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(problem.grid.node_count());
    const double mass = inner_h(problem.grid, M, ones);
    if (mass <= 0.0) throw std::domain_error("stationary_residual: total mass is not positive");
    r.lambda = -inner_h(problem.grid, M, base) / mass;
    r.hjb = base.array() + r.lambda;
    r.fp = transport_operator(problem, U, M);
    if (problem.viscosity != 0.0) r.fp -= problem.viscosity * laplacian(problem.grid, M);
    return r;
}

Eigen::MatrixXd stationary_jacobian(const MfgProblem& problem, const Eigen::VectorXd& M,
                                    const Eigen::VectorXd& U) {
    const TorusGrid& grid = problem.grid;
    const int n = grid.node_count();
    Eigen::MatrixXd q = upwind_stencil(grid, U);
    Eigen::MatrixXd alpha = hamiltonian_gradients(problem, q, M);

    Triplets trips;
    trips.reserve(static_cast<size_t>(n) * 40);

    // R^m rows: d(base)/dM = -diag(dg/dm) + f_sign f'(M)
    problem.coupling.jacobian_triplets(grid, M, 0, 0, problem.signs.f_sign, trips);
    if (problem.hamiltonian.depends_on_density()) {
        double qi[4], tmp;
        for (int i = 0; i < n; ++i) {
            for (int l = 0; l < grid.stencil_width(); ++l) qi[l] = q(i, l);
            tmp = problem.hamiltonian.dvalue_dm(grid.coord(i, 1),
                                                grid.dim == 2 ? grid.coord(i, 2) : 0.0, qi, M[i]);
            trips.emplace_back(i, i, -tmp);
        }
    }
    // d(base)/dU = nu*Lap - sum_l alpha_l dq_l/dU
    if (problem.viscosity != 0.0) add_laplacian(grid, 0, n, problem.viscosity, trips);
    for (int l = 0; l < grid.stencil_width(); ++l) {
        int axis, sign;
        stencil_component(l, axis, sign);
        add_diff_rowscaled(grid, axis, sign, alpha.col(l), 0, n, -1.0, trips);
    }

    // R^u rows: -nu*Lap wrt M + transport terms
    if (problem.viscosity != 0.0) add_laplacian(grid, n, 0, -problem.viscosity, trips);
    Eigen::MatrixXd dalpha_dm = Eigen::MatrixXd::Zero(n, grid.stencil_width());
    if (problem.hamiltonian.depends_on_density()) {
        double qi[4], out[4];
        for (int i = 0; i < n; ++i) {
            for (int l = 0; l < grid.stencil_width(); ++l) qi[l] = q(i, l);
            problem.hamiltonian.dgrad_q_dm(grid.coord(i, 1),
                                           grid.dim == 2 ? grid.coord(i, 2) : 0.0, qi, M[i], out);
            for (int l = 0; l < grid.stencil_width(); ++l) dalpha_dm(i, l) = out[l];
        }
    }
    Eigen::MatrixXd hess(n, grid.stencil_width());
    {
        double qi[4], out[4];
        for (int i = 0; i < n; ++i) {
            for (int l = 0; l < grid.stencil_width(); ++l) qi[l] = q(i, l);
            problem.hamiltonian.hess_q_diag(grid.coord(i, 1),
                                            grid.dim == 2 ? grid.coord(i, 2) : 0.0, qi, M[i], out);
            for (int l = 0; l < grid.stencil_width(); ++l) hess(i, l) = out[l];
        }
    }
    for (int l = 0; l < grid.stencil_width(); ++l) {
        int axis, sign;
        stencil_component(l, axis, sign);
        // divergence uses the opposite one-sided difference
        Eigen::VectorXd coeff = alpha.col(l) + M.cwiseProduct(dalpha_dm.col(l));
        add_diff_colscaled(grid, axis, -sign, coeff, n, 0, -1.0, trips);
        add_div_form(grid, axis, -sign, M.cwiseProduct(hess.col(l)), axis, sign, n, n, -1.0, trips);
    }

    Eigen::SparseMatrix<double> S(2 * n, 2 * n);
    S.setFromTriplets(trips.begin(), trips.end());
    Eigen::MatrixXd J = Eigen::MatrixXd(S);

    // Rank-one terms from the lambda elimination: R^m = base + lambda(M,U) 1.
    Eigen::VectorXd base = hjb_base(problem, M, U);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const double mass = inner_h(grid, M, ones);
    const double lambda = -inner_h(grid, M, base) / mass;
    const double w = grid.cell_weight();
    Eigen::VectorXd c(2 * n);
    // d lambda / dM_j = -(w/mass) (base_j + (A_mm^T M)_j) - (w/mass) lambda
    // d lambda / dU_j = -(w/mass) (A_mu^T M)_j
    Eigen::VectorXd JtM = J.topRows(n).transpose() * M;
    c.head(n) = -(w / mass) * (base + JtM.head(n) + lambda * ones);
    c.tail(n) = -(w / mass) * JtM.tail(n);
    J.topRows(n).rowwise() += c.transpose();
    return J;
}

Eigen::VectorXd stationary_dresidual_dcost(const MfgProblem& problem, const Eigen::VectorXd& M,
                                           const Eigen::VectorXd& p) {
    const int n = problem.grid.node_count();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const double mass = inner_h(problem.grid, M, ones);
    const double dlambda = -problem.signs.v_sign * inner_h(problem.grid, M, p) / mass;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(2 * n);
    out.head(n) = problem.signs.v_sign * p.array() + dlambda;
    return out;
}

Eigen::VectorXd stationary_dresidual_dcost_transpose(const MfgProblem& problem,
                                                     const Eigen::VectorXd& M,
                                                     const Eigen::VectorXd& w) {
    const int n = problem.grid.node_count();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const double mass = inner_h(problem.grid, M, ones);
    const double sum_wm = w.head(n).sum();
    const double cw = problem.grid.cell_weight();
    return problem.signs.v_sign * (w.head(n) - (cw / mass) * sum_wm * M);
}

StationaryState default_stationary_init(const MfgProblem& problem) {
    StationaryState s;
    s.M = Eigen::VectorXd::Ones(problem.grid.node_count());
    s.U = Eigen::VectorXd::Zero(problem.grid.node_count());
    s.lambda = lambda_eliminate(problem, s.M, s.U);
    return s;
}

namespace {

void enforce_invariants(const MfgProblem& problem, Eigen::VectorXd& M, Eigen::VectorXd& U) {
    const int n = problem.grid.node_count();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const double mass = inner_h(problem.grid, M, ones);
    if (mass > 0.0) M /= mass;
    U.array() -= inner_h(problem.grid, U, ones);
}

void push_trace(StationaryTrace* trace, int step, double res, double lambda, double min_density,
                double ds) {
    if (!trace) return;
    trace->rows.push_back({step, res, lambda, min_density, ds});
}

}  // namespace

StationaryState hrf_stationary_solve(const MfgProblem& problem, const StationaryState& init,
                                     const FlowConfig& cfg, StationaryTrace* trace) {
    const int n = problem.grid.node_count();
    if (init.M.minCoeff() <= 0.0)
        throw std::invalid_argument("hrf_stationary_solve: initial density must be positive");
    MfgProblem smooth = problem.with_smoothed_hamiltonian(cfg.smoothing);

    Eigen::VectorXd M = init.M, U = init.U;
    enforce_invariants(problem, M, U);

    StationaryResidual res = stationary_residual(problem, M, U);
    double res_norm = res.inf_norm();
    const double res0_norm = res_norm;
    double res_window = res_norm;
    push_trace(trace, 0, res_norm, res.lambda, M.minCoeff(), 0.0);
    if (res_norm < cfg.tol) {
        if (trace) trace->converged = true;
        return {M, U, res.lambda};
    }

    double ds = cfg.ds_init;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu;
    double lu_ds = -1.0;
    int lu_age = std::numeric_limits<int>::max();

    int accepted = 0;
    for (int step = 0; step < cfg.max_steps; ++step) {
        bool step_ok = false;
        while (!step_ok) {
            // Implicit Euler: solve G(z+) = z+ - z - ds*Phi(z+) = 0 by a
            // modified Newton with a cached step Jacobian.
            Eigen::VectorXd Mp = M, Up = U;
            bool refactor = lu_age >= cfg.jacobian_max_age || lu_ds <= 0.0 ||
                            ds > 1.7 * lu_ds || ds < 0.6 * lu_ds;
            bool newton_ok = false;
            for (int attempt = 0; attempt < 2 && !newton_ok; ++attempt) {
                if (refactor) {
                    Eigen::MatrixXd J = stationary_jacobian(smooth, M, U);
                    StationaryResidual r0 = stationary_residual(problem, M, U);
                    Eigen::MatrixXd JG = Eigen::MatrixXd::Identity(2 * n, 2 * n);
                    JG.topRows(n) += ds * M.asDiagonal() * J.topRows(n);
                    JG.topLeftCorner(n, n).diagonal() += ds * r0.hjb;
                    JG.bottomRows(n) += ds * J.bottomRows(n);
                    lu.compute(JG);
                    lu_ds = ds;
                    lu_age = 0;
                }
                Mp = M;
                Up = U;
                const double gtol = 1e-11 * (1.0 + std::max(M.lpNorm<Eigen::Infinity>(),
                                                            U.lpNorm<Eigen::Infinity>()));
                for (int it = 0; it < cfg.newton_max; ++it) {
                    StationaryResidual rp = stationary_residual(problem, Mp, Up);
                    Eigen::VectorXd G(2 * n);
                    G.head(n) = Mp - M - ds * (-Mp.cwiseProduct(rp.hjb));
                    G.tail(n) = Up - U - ds * (-rp.fp);
                    if (G.lpNorm<Eigen::Infinity>() < gtol) {
                        newton_ok = true;
                        break;
                    }
                    Eigen::VectorXd dz = lu.solve(-G);
                    if (!dz.allFinite()) break;
                    Eigen::VectorXd Mn = Mp + dz.head(n);
                    if (Mn.minCoeff() <= 0.0) break;
                    Mp = Mn;
                    Up += dz.tail(n);
                }
                if (!newton_ok && !refactor) refactor = true;  // retry with a fresh Jacobian
                else break;
            }
            if (newton_ok && Mp.minCoeff() > 0.0) {
                M = Mp;
                U = Up;
                enforce_invariants(problem, M, U);
                ++lu_age;
                step_ok = true;
                ds = std::min(ds * cfg.ds_growth, 1e12);
            } else {
                ds *= 0.5;
                lu_ds = -1.0;
                if (ds < cfg.ds_min) {
                    res = stationary_residual(problem, M, U);
                    if (trace) {
                        trace->converged = false;
                        trace->message = "step size underflow";
                    }
                    return {M, U, res.lambda};
                }
            }
        }
        ++accepted;
        res = stationary_residual(problem, M, U);
        res_norm = res.inf_norm();
        push_trace(trace, accepted, res_norm, res.lambda, M.minCoeff(), ds);
        if (res_norm < cfg.tol) {
            if (trace) trace->converged = true;
            return {M, U, res.lambda};
        }
        // Bail out of hopeless solves quickly (wild parameter trials during
        // outer line searches): blow-up, or no geometric progress over a
        // long stretch of accepted steps.
        if (res_norm > 1e6 * (1.0 + res0_norm)) {
            if (trace) {
                trace->converged = false;
                trace->message = "flow diverged";
            }
            return {M, U, res.lambda};
        }
        if (accepted % 250 == 0) {
            if (res_norm > 0.99 * res_window) {
                if (trace) {
                    trace->converged = false;
                    trace->message = "flow stalled";
                }
                return {M, U, res.lambda};
            }
            res_window = res_norm;
        }
    }
    if (trace) {
        trace->converged = false;
        trace->message = "flow budget exhausted";
    }
    return {M, U, res.lambda};
}

namespace {

Eigen::MatrixXd fd_jacobian(const MfgProblem& problem, const Eigen::VectorXd& M,
                            const Eigen::VectorXd& U) {
    const int n = problem.grid.node_count();
    Eigen::MatrixXd J(2 * n, 2 * n);
    auto eval = [&](const Eigen::VectorXd& m, const Eigen::VectorXd& u) {
        StationaryResidual r = stationary_residual(problem, m, u);
        Eigen::VectorXd out(2 * n);
        out << r.hjb, r.fp;
        return out;
    };
    for (int j = 0; j < 2 * n; ++j) {
        Eigen::VectorXd Mp = M, Up = U, Mm = M, Um = U;
        const double base = j < n ? M[j] : U[j - n];
        const double step = 1e-7 * (1.0 + std::abs(base));
        if (j < n) {
            Mp[j] += step;
            Mm[j] -= step;
        } else {
            Up[j - n] += step;
            Um[j - n] -= step;
        }
        J.col(j) = (eval(Mp, Up) - eval(Mm, Um)) / (2.0 * step);
    }
    return J;
}

}  // namespace

StationaryState newton_stationary_solve(const MfgProblem& problem, const StationaryState& init,
                                        const NewtonConfig& cfg, StationaryTrace* trace) {
    const int n = problem.grid.node_count();
    MfgProblem smooth = problem.with_smoothed_hamiltonian(cfg.smoothing);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const double w = problem.grid.cell_weight();

    Eigen::VectorXd M = init.M, U = init.U;
    auto merit = [&](const Eigen::VectorXd& m, const Eigen::VectorXd& u, StationaryResidual& r) {
        r = stationary_residual(problem, m, u);
        const double c1 = inner_h(problem.grid, m, ones) - 1.0;
        const double c2 = inner_h(problem.grid, u, ones);
        return std::sqrt(r.hjb.squaredNorm() + r.fp.squaredNorm() + c1 * c1 + c2 * c2);
    };

    StationaryResidual res;
    double phi = merit(M, U, res);
    push_trace(trace, 0, res.inf_norm(), res.lambda, M.minCoeff(), 0.0);

    for (int it = 0; it < cfg.max_iter; ++it) {
        const double c1 = inner_h(problem.grid, M, ones) - 1.0;
        const double c2 = inner_h(problem.grid, U, ones);
        if (res.inf_norm() < cfg.tol && std::abs(c1) < cfg.tol && std::abs(c2) < cfg.tol) {
            if (trace) trace->converged = true;
            return {M, U, res.lambda};
        }
        Eigen::MatrixXd dF = cfg.finite_difference_jacobian ? fd_jacobian(problem, M, U)
                                                            : stationary_jacobian(smooth, M, U);
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(2 * n + 2, 2 * n + 2);
        K.topLeftCorner(2 * n, 2 * n) = dF;
        for (int j = 0; j < n; ++j) {
            K(2 * n, j) = w;      // mass row
            K(j, 2 * n) = w;      // and its transpose column
            K(2 * n + 1, n + j) = 1.0;  // gauge row
            K(n + j, 2 * n + 1) = 1.0;
        }
        Eigen::VectorXd rhs(2 * n + 2);
        rhs.head(n) = -res.hjb;
        rhs.segment(n, n) = -res.fp;
        rhs[2 * n] = -c1;
        rhs[2 * n + 1] = -c2;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
        Eigen::VectorXd dz = lu.solve(rhs);
        if (!dz.allFinite()) {
            // Tikhonov-regularized normal equations.
            Eigen::MatrixXd KtK = K.transpose() * K;
            KtK.diagonal().array() += cfg.tikhonov;
            dz = KtK.ldlt().solve(K.transpose() * rhs);
            if (!dz.allFinite()) {
                if (trace) {
                    trace->converged = false;
                    trace->message = "singular Jacobian";
                }
                return {M, U, res.lambda};
            }
        }
        Eigen::VectorXd dM = dz.head(n), dU = dz.segment(n, n);
        double t = 1.0;
        // keep the density positive where the coupling requires it
        if (problem.coupling.requires_positive() || problem.hamiltonian.depends_on_density()) {
            for (int i = 0; i < n; ++i) {
                if (dM[i] < 0.0) t = std::min(t, -0.99 * M[i] / dM[i]);
            }
        }
        bool accepted = false;
        StationaryResidual rtrial;
        for (; t > 1e-12; t *= 0.5) {
            Eigen::VectorXd Mt = M + t * dM, Ut = U + t * dU;
            if (problem.coupling.requires_positive() && Mt.minCoeff() <= 0.0) continue;
            double phit;
            try {
                phit = merit(Mt, Ut, rtrial);
            } catch (const std::domain_error&) {
                continue;
            }
            if (phit < (1.0 - 1e-4 * t) * phi) {
                M = Mt;
                U = Ut;
                phi = phit;
                res = rtrial;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (trace) {
                trace->converged = false;
                trace->message = "line search failed";
            }
            return {M, U, res.lambda};
        }
        push_trace(trace, it + 1, res.inf_norm(), res.lambda, M.minCoeff(), t);
    }
    if (trace) {
        trace->converged = false;
        trace->message = "iteration budget exhausted";
    }
    return {M, U, res.lambda};
}

StationaryState policy_iteration_solve(const MfgProblem& problem, const StationaryState& init,
                                       const PolicyConfig& cfg, StationaryTrace* trace) {
    const TorusGrid& grid = problem.grid;
    const int n = grid.node_count();
    const double w = grid.cell_weight();
    Eigen::VectorXd M = init.M, U = init.U;

    StationaryResidual res = stationary_residual(problem, M, U);
    push_trace(trace, 0, res.inf_norm(), res.lambda, M.minCoeff(), 0.0);

    for (int it = 0; it < cfg.max_iter; ++it) {
        if (res.inf_norm() < cfg.tol) {
            if (trace) trace->converged = true;
            return {M, U, res.lambda};
        }
        // (i) policy improvement: freeze alpha at the current value gradient
        Eigen::MatrixXd q = upwind_stencil(grid, U);
        Eigen::MatrixXd alpha = hamiltonian_gradients(problem, q, M);
        Eigen::VectorXd g = hamiltonian_values(problem, q, M);

        // (ii) linear FP solve for M with mass normalization (bordered system)
        {
            Triplets trips;
            if (problem.viscosity != 0.0) add_laplacian(grid, 0, 0, -problem.viscosity, trips);
            for (int l = 0; l < grid.stencil_width(); ++l) {
                int axis, sign;
                stencil_component(l, axis, sign);
                add_diff_colscaled(grid, axis, -sign, alpha.col(l), 0, 0, -1.0, trips);
            }
            for (int i = 0; i < n; ++i) {
                trips.emplace_back(i, n, 1.0);      // multiplier column
                trips.emplace_back(n, i, w);        // mass row
            }
            Eigen::SparseMatrix<double> A(n + 1, n + 1);
            A.setFromTriplets(trips.begin(), trips.end());
            Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(A);
            if (lu.info() != Eigen::Success)
                throw std::runtime_error("policy iteration: FP factorization failed");
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
            rhs[n] = 1.0;
            Eigen::VectorXd sol = lu.solve(rhs);
            M = sol.head(n);
        }

        // (iii) linear HJB solve with g linearized at the frozen policy:
        // (nu*Lap - sum_l alpha_l D_l) U' + lambda = g(q) - alpha.q - f(M) - V
        {
            Triplets trips;
            if (problem.viscosity != 0.0) add_laplacian(grid, 0, 0, problem.viscosity, trips);
            for (int l = 0; l < grid.stencil_width(); ++l) {
                int axis, sign;
                stencil_component(l, axis, sign);
                add_diff_rowscaled(grid, axis, sign, alpha.col(l), 0, 0, -1.0, trips);
            }
            for (int i = 0; i < n; ++i) {
                trips.emplace_back(i, n, 1.0);   // lambda column
                trips.emplace_back(n, i, 1.0);   // gauge row sum U = 0
            }
            Eigen::SparseMatrix<double> A(n + 1, n + 1);
            A.setFromTriplets(trips.begin(), trips.end());
            Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(A);
            if (lu.info() != Eigen::Success)
                throw std::runtime_error("policy iteration: HJB factorization failed");
            Eigen::VectorXd rhs(n + 1);
            Eigen::VectorXd alpha_dot_q = (alpha.array() * q.array()).rowwise().sum().matrix();
            rhs.head(n) = g - alpha_dot_q -
                          problem.signs.f_sign * problem.coupling.apply(grid, M) -
                          problem.signs.v_sign * problem.spatial_cost;
            rhs[n] = 0.0;
            Eigen::VectorXd sol = lu.solve(rhs);
            U = sol.head(n);
        }

        res = stationary_residual(problem, M, U);
        push_trace(trace, it + 1, res.inf_norm(), res.lambda, M.minCoeff(), 1.0);
    }
    if (trace) {
        trace->converged = false;
        trace->message = "iteration budget exhausted";
    }
    return {M, U, res.lambda};
}

}  // namespace mfg
