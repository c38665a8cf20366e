#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include "inverse.hpp"

namespace mfg {

namespace {

class StationaryLinearized : public LinearizedEquilibrium {
public:
    StationaryLinearized(const MfgProblem& problem, const Eigen::VectorXd& M,
                         const Eigen::VectorXd& U, double tikhonov)
        : n_(problem.grid.node_count()), tikhonov_(tikhonov) {
        const int n = n_;
        Eigen::MatrixXd J = stationary_jacobian(problem, M, U);
        kkt_ = Eigen::MatrixXd::Zero(2 * n + 2, 2 * n + 2);
        kkt_.topLeftCorner(2 * n, 2 * n) = J;
        const double w = problem.grid.cell_weight();
        for (int j = 0; j < n; ++j) {
            kkt_(2 * n, j) = w;
            kkt_(j, 2 * n) = w;
            kkt_(2 * n + 1, n + j) = 1.0;
            kkt_(n + j, 2 * n + 1) = 1.0;
        }
        lu_.compute(kkt_);
    }

    Eigen::VectorXd solve_sensitivity(const Eigen::VectorXd& rhs) const override {
        return solve_impl(rhs, false);
    }
    Eigen::VectorXd solve_adjoint(const Eigen::VectorXd& rhs) const override {
        return solve_impl(rhs, true);
    }

private:
    Eigen::VectorXd solve_impl(const Eigen::VectorXd& rhs, bool transposed) const {
        Eigen::VectorXd full = Eigen::VectorXd::Zero(2 * n_ + 2);
        full.head(2 * n_) = rhs;
        Eigen::VectorXd sol;
        if (transposed) sol = lu_.transpose().solve(full);
        else sol = lu_.solve(full);
        if (!sol.allFinite()) {
            // Tikhonov-regularized normal equations on the KKT system.
            if (normal_.rows() == 0) {
                normal_ = kkt_.transpose() * kkt_;
                normal_.diagonal().array() += tikhonov_;
                normal_ldlt_.compute(normal_);
            }
            sol = normal_ldlt_.solve(transposed ? (kkt_ * full).eval()
                                                : (kkt_.transpose() * full).eval());
            if (!sol.allFinite())
                throw std::runtime_error("stationary adjoint/sensitivity solve failed "
                                         "(KKT singular even with Tikhonov shift)");
        }
        return sol.head(2 * n_);
    }

    int n_;
    double tikhonov_;
    Eigen::MatrixXd kkt_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
    mutable Eigen::MatrixXd normal_;
    mutable Eigen::LDLT<Eigen::MatrixXd> normal_ldlt_;
};

class StationaryModel : public EquilibriumModel {
public:
    StationaryModel(MfgProblem base, std::string solver, double tol, int max_iter)
        : base_(std::move(base)), solver_(std::move(solver)), tol_(tol), max_iter_(max_iter) {}

    int state_dim() const override { return 2 * base_.grid.node_count(); }
    int param_dim() const override { return base_.grid.node_count(); }
    int constraint_count() const override { return 2; }

    Eigen::VectorXd solve_forward(const Eigen::VectorXd& theta, const Eigen::VectorXd* warm,
                                  InnerReport* report) const override {
        MfgProblem p = with_cost(theta);
        StationaryState init = default_stationary_init(p);
        if (warm && warm->size() == state_dim()) {
            Eigen::VectorXd M = warm->head(param_dim());
            if (M.minCoeff() > 0.0) {
                init.M = M;
                init.U = warm->tail(param_dim());
            }
        }
        StationaryTrace trace;
        StationaryState out;
        if (solver_ == "hrf") {
            FlowConfig cfg;
            cfg.tol = tol_;
            cfg.max_steps = max_iter_;
            out = hrf_stationary_solve(p, init, cfg, &trace);
        } else if (solver_ == "newton") {
            NewtonConfig cfg;
            cfg.tol = tol_;
            cfg.max_iter = max_iter_;
            out = newton_stationary_solve(p, init, cfg, &trace);
        } else if (solver_ == "policy") {
            PolicyConfig cfg;
            cfg.tol = tol_;
            cfg.max_iter = max_iter_;
            out = policy_iteration_solve(p, init, cfg, &trace);
        } else {
            throw std::invalid_argument("unknown stationary inner solver '" + solver_ + "'");
        }
        if (report) {
            report->converged = trace.converged;
            report->iterations = static_cast<int>(trace.rows.size()) - 1;
            report->residual_inf = trace.rows.empty() ? 0.0 : trace.rows.back().residual_norm;
        }
        Eigen::VectorXd z(state_dim());
        z << out.M, out.U;
        return z;
    }

    Eigen::VectorXd residual(const Eigen::VectorXd& z, const Eigen::VectorXd& theta) const override {
        MfgProblem p = with_cost(theta);
        StationaryResidual r = stationary_residual(p, z.head(param_dim()), z.tail(param_dim()));
        Eigen::VectorXd out(state_dim());
        out << r.hjb, r.fp;
        return out;
    }

    Eigen::VectorXd constraint_defect(const Eigen::VectorXd& z) const override {
        const int n = param_dim();
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
        Eigen::VectorXd c(2);
        c[0] = inner_h(base_.grid, z.head(n), ones) - 1.0;
        c[1] = inner_h(base_.grid, z.tail(n), ones);
        return c;
    }

    Eigen::VectorXd apply_dF_dz(const Eigen::VectorXd& z, const Eigen::VectorXd& theta,
                                const Eigen::VectorXd& v) const override {
        return jac(z, theta) * v;
    }
    Eigen::VectorXd apply_dF_dz_transpose(const Eigen::VectorXd& z, const Eigen::VectorXd& theta,
                                          const Eigen::VectorXd& w) const override {
        return jac(z, theta).transpose() * w;
    }
    Eigen::VectorXd apply_dF_dtheta(const Eigen::VectorXd& z, const Eigen::VectorXd& theta,
                                    const Eigen::VectorXd& p) const override {
        return stationary_dresidual_dcost(with_cost(theta), z.head(param_dim()), p);
    }
    Eigen::VectorXd apply_dF_dtheta_transpose(const Eigen::VectorXd& z, const Eigen::VectorXd& theta,
                                              const Eigen::VectorXd& w) const override {
        return stationary_dresidual_dcost_transpose(with_cost(theta), z.head(param_dim()), w);
    }

    std::unique_ptr<LinearizedEquilibrium> linearize(const Eigen::VectorXd& z,
                                                     const Eigen::VectorXd& theta) const override {
        MfgProblem p = with_cost(theta).with_smoothed_hamiltonian(1e-8);
        return std::make_unique<StationaryLinearized>(p, z.head(param_dim()), z.tail(param_dim()),
                                                      1e-10);
    }

private:
    MfgProblem with_cost(const Eigen::VectorXd& theta) const {
        MfgProblem p = base_;
        p.spatial_cost = theta;
        return p;
    }
    Eigen::MatrixXd jac(const Eigen::VectorXd& z, const Eigen::VectorXd& theta) const {
        MfgProblem p = with_cost(theta).with_smoothed_hamiltonian(1e-8);
        return stationary_jacobian(p, z.head(param_dim()), z.tail(param_dim()));
    }

    MfgProblem base_;
    std::string solver_;
    double tol_;
    int max_iter_;
};

class TimedepLinearized : public LinearizedEquilibrium {
public:
    TimedepLinearized(const MfgProblem& problem, const SpaceTimeState& y, double tikhonov)
        : tikhonov_(tikhonov) {
        jac_ = timedep_jacobian(problem, y);
        lu_.compute(jac_);
        if (lu_.info() != Eigen::Success) factor_regularized();
    }

    Eigen::VectorXd solve_sensitivity(const Eigen::VectorXd& rhs) const override {
        if (regularized_) return reg_lu_.solve((jac_.transpose() * rhs).eval());
        Eigen::VectorXd out = lu_.solve(rhs);
        if (!out.allFinite()) {
            factor_regularized();
            return reg_lu_.solve((jac_.transpose() * rhs).eval());
        }
        return out;
    }
    Eigen::VectorXd solve_adjoint(const Eigen::VectorXd& rhs) const override {
        if (regularized_) return reg_lu_.solve(rhs);  // J^T J is symmetric
        Eigen::VectorXd out = lu_.adjoint().solve(rhs);
        if (!out.allFinite()) {
            factor_regularized();
            return jac_ * reg_lu_.solve(rhs);
        }
        return out;
    }

private:
    void factor_regularized() const {
        Eigen::SparseMatrix<double> n = (jac_.transpose() * jac_).pruned();
        for (int i = 0; i < n.rows(); ++i) n.coeffRef(i, i) += tikhonov_;
        reg_lu_.compute(n);
        if (reg_lu_.info() != Eigen::Success)
            throw std::runtime_error("time-dependent adjoint solve failed "
                                     "(Jacobian singular even with Tikhonov shift)");
        regularized_ = true;
    }

    double tikhonov_;
    Eigen::SparseMatrix<double> jac_;
    mutable Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;  // adjoint() is non-const
    mutable Eigen::SparseLU<Eigen::SparseMatrix<double>> reg_lu_;
    mutable bool regularized_ = false;
};

class TimedepModel : public EquilibriumModel {
public:
    TimedepModel(MfgProblem base, std::string solver, double tol, int max_iter)
        : base_(std::move(base)), solver_(std::move(solver)), tol_(tol), max_iter_(max_iter) {}

    int state_dim() const override { return 2 * base_.time_slices * base_.grid.node_count(); }
    int param_dim() const override { return base_.grid.node_count(); }
    int constraint_count() const override { return 0; }

    Eigen::VectorXd solve_forward(const Eigen::VectorXd& theta, const Eigen::VectorXd* warm,
                                  InnerReport* report) const override {
        MfgProblem p = with_cost(theta);
        SpaceTimeState init = default_timedep_init(p);
        if (warm && warm->size() == state_dim()) {
            SpaceTimeState cand = unflatten_state(p, *warm);
            if (min_density(cand) > 0.0) init = std::move(cand);
        }
        TimedepTrace trace;
        SpaceTimeState out;
        if (solver_ == "hrf") {
            TimedepFlowConfig cfg;
            cfg.tol = tol_;
            cfg.max_steps = max_iter_;
            out = hrf_timedep_solve(p, init, cfg, &trace);
        } else if (solver_ == "newton") {
            TimedepNewtonConfig cfg;
            cfg.tol = tol_;
            cfg.max_iter = max_iter_;
            out = newton_timedep_solve(p, init, cfg, &trace);
        } else {
            throw std::invalid_argument("unknown time-dependent inner solver '" + solver_ + "'");
        }
        if (report) {
            report->converged = trace.converged;
            report->iterations = static_cast<int>(trace.rows.size()) - 1;
            report->residual_inf = trace.rows.empty() ? 0.0 : trace.rows.back().res_inf;
        }
        return flatten(out);
    }

    Eigen::VectorXd residual(const Eigen::VectorXd& z, const Eigen::VectorXd& theta) const override {
        MfgProblem p = with_cost(theta);
        return flatten(residual_td(p, unflatten_state(p, z)));
    }

    Eigen::VectorXd constraint_defect(const Eigen::VectorXd&) const override {
        return Eigen::VectorXd();
    }

    Eigen::VectorXd apply_dF_dz(const Eigen::VectorXd& z, const Eigen::VectorXd& theta,
                                const Eigen::VectorXd& v) const override {
        MfgProblem p = with_cost(theta).with_smoothed_hamiltonian(1e-8);
        return timedep_jacobian(p, unflatten_state(p, z)) * v;
    }
    Eigen::VectorXd apply_dF_dz_transpose(const Eigen::VectorXd& z, const Eigen::VectorXd& theta,
                                          const Eigen::VectorXd& w) const override {
        MfgProblem p = with_cost(theta).with_smoothed_hamiltonian(1e-8);
        return timedep_jacobian(p, unflatten_state(p, z)).transpose() * w;
    }
    Eigen::VectorXd apply_dF_dtheta(const Eigen::VectorXd& z, const Eigen::VectorXd& theta,
                                    const Eigen::VectorXd& p) const override {
        (void)z;
        (void)theta;
        // V enters every HJB block additively; FP blocks do not see it.
        const int n = param_dim();
        const int nt = base_.time_slices;
        Eigen::VectorXd out = Eigen::VectorXd::Zero(state_dim());
        for (int k = 0; k < nt; ++k) out.segment(k * n, n) = base_.signs.v_sign * p;
        return out;
    }
    Eigen::VectorXd apply_dF_dtheta_transpose(const Eigen::VectorXd& z, const Eigen::VectorXd& theta,
                                              const Eigen::VectorXd& w) const override {
        (void)z;
        (void)theta;
        const int n = param_dim();
        const int nt = base_.time_slices;
        Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
        for (int k = 0; k < nt; ++k) out += w.segment(k * n, n);
        return base_.signs.v_sign * out;
    }

    std::unique_ptr<LinearizedEquilibrium> linearize(const Eigen::VectorXd& z,
                                                     const Eigen::VectorXd& theta) const override {
        MfgProblem p = with_cost(theta).with_smoothed_hamiltonian(1e-8);
        return std::make_unique<TimedepLinearized>(p, unflatten_state(p, z), 1e-10);
    }

private:
    MfgProblem with_cost(const Eigen::VectorXd& theta) const {
        MfgProblem p = base_;
        p.spatial_cost = theta;
        return p;
    }

    MfgProblem base_;
    std::string solver_;
    double tol_;
    int max_iter_;
};

}  // namespace

std::shared_ptr<EquilibriumModel> make_stationary_model(MfgProblem base, std::string inner_solver,
                                                        double inner_tol, int inner_max_iter) {
    return std::make_shared<StationaryModel>(std::move(base), std::move(inner_solver), inner_tol,
                                             inner_max_iter);
}

std::shared_ptr<EquilibriumModel> make_timedep_model(MfgProblem base, std::string inner_solver,
                                                     double inner_tol, int inner_max_iter) {
    return std::make_shared<TimedepModel>(std::move(base), std::move(inner_solver), inner_tol,
                                          inner_max_iter);
}

}  // namespace mfg
