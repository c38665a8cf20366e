#include "inverse.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

namespace mfg {

void OuterTrace::to_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open trace file " + path);
    out << "iter,objective,grad_or_step_norm,inner_iters,seconds\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%d,%.6f\n", r.iter, r.objective,
                      r.grad_or_step_norm, r.inner_iters, r.seconds);
        out << buf;
    }
}

namespace {

void ensure_state(const InverseProblem& ip, const Eigen::VectorXd& theta, EquilibriumCache& cache) {
    if (cache.valid && cache.theta.size() == theta.size() && cache.theta == theta) return;
    InnerReport report;
    const Eigen::VectorXd* warm = cache.valid ? &cache.z : nullptr;
    Eigen::VectorXd z = ip.model->solve_forward(theta, warm, &report);
    if (!report.converged)
        throw InnerSolveError("inner solver did not converge (residual " +
                                  std::to_string(report.residual_inf) + ")",
                              report);
    cache.theta = theta;
    cache.z = std::move(z);
    cache.valid = true;
    cache.last_inner_iterations = report.iterations;
}

double objective_terms(const InverseProblem& ip, const Eigen::VectorXd& theta,
                       const Eigen::VectorXd& z) {
    double value = 0.0;
    if (ip.alpha != 0.0) value += 0.5 * ip.alpha * ip.regularizer->norm_sq(theta);
    if (ip.beta != 0.0) {
        Eigen::VectorXd mis = ip.density_obs->apply(z) - ip.density_data;
        value += 0.5 * ip.beta * mis.squaredNorm();
    }
    if (ip.gamma != 0.0) {
        Eigen::VectorXd mis = ip.cost_rows * theta - ip.cost_data;
        value += 0.5 * ip.gamma * mis.squaredNorm();
    }
    return value;
}

}  // namespace

double evaluate_objective(const InverseProblem& ip, const Eigen::VectorXd& theta,
                          EquilibriumCache& cache) {
    ensure_state(ip, theta, cache);
    return objective_terms(ip, theta, cache.z);
}

Eigen::VectorXd objective_residual(const InverseProblem& ip, const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& z) {
    const int m = ip.density_obs ? ip.density_obs->count() : 0;
    const int r = static_cast<int>(ip.cost_rows.rows());
    const int p = static_cast<int>(theta.size());
    Eigen::VectorXd res(m + r + p);
    if (m) res.head(m) = std::sqrt(ip.beta) * (ip.density_obs->apply(z) - ip.density_data);
    if (r) res.segment(m, r) = std::sqrt(ip.gamma) * (ip.cost_rows * theta - ip.cost_data);
    res.tail(p) = ip.alpha > 0.0 ? (std::sqrt(ip.alpha) * ip.regularizer->j_apply(theta)).eval()
                                 : Eigen::VectorXd::Zero(p).eval();
    return res;
}

Eigen::VectorXd adjoint_gradient(const InverseProblem& ip, const Eigen::VectorXd& theta,
                                 const Eigen::VectorXd& z, const LinearizedEquilibrium* lin) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
    if (ip.beta != 0.0) {
        Eigen::VectorXd mis = ip.density_obs->apply(z) - ip.density_data;
        Eigen::VectorXd rhs = -ip.beta * ip.density_obs->apply_transpose(mis);
        Eigen::VectorXd psi = lin->solve_adjoint(rhs);
        grad += ip.model->apply_dF_dtheta_transpose(z, theta, psi);
    }
    if (ip.gamma != 0.0)
        grad += ip.gamma * ip.cost_rows.transpose() * (ip.cost_rows * theta - ip.cost_data);
    if (ip.alpha != 0.0) grad += ip.alpha * ip.regularizer->inv_apply(theta);
    return grad;
}

Eigen::VectorXd gn_step(const InverseProblem& ip, const Eigen::VectorXd& theta,
                        const Eigen::VectorXd& z, const LinearizedEquilibrium* lin,
                        const OuterConfig& cfg, GnStepReport* report) {
    const int p = static_cast<int>(theta.size());

    auto normal_apply = [&](const Eigen::VectorXd& v, double levenberg) {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(p);
        if (ip.beta != 0.0) {
            Eigen::VectorXd dz = lin->solve_sensitivity(-ip.model->apply_dF_dtheta(z, theta, v));
            Eigen::VectorXd wdz = ip.density_obs->apply(z + dz) - ip.density_obs->apply(z);
            Eigen::VectorXd psi = lin->solve_adjoint(ip.density_obs->apply_transpose(wdz));
            out += ip.beta * (-ip.model->apply_dF_dtheta_transpose(z, theta, psi));
        }
        if (ip.gamma != 0.0) out += ip.gamma * ip.cost_rows.transpose() * (ip.cost_rows * v);
        if (ip.alpha != 0.0) out += ip.alpha * ip.regularizer->inv_apply(v);
        if (levenberg > 0.0) out += levenberg * v;
        return out;
    };
    auto precond = [&](const Eigen::VectorXd& v) {
        if (ip.alpha > 0.0) return (ip.regularizer->gram_apply(v) / ip.alpha).eval();
        return v.eval();
    };

    Eigen::VectorXd rhs = -adjoint_gradient(ip, theta, z, lin);

    auto run_cg = [&](double levenberg, GnStepReport& rep) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
        Eigen::VectorXd r = rhs;
        Eigen::VectorXd zv = precond(r);
        Eigen::VectorXd d = zv;
        double rz = r.dot(zv);
        const double rhs_norm = rhs.norm();
        rep.cg_converged = rhs_norm == 0.0;
        int it = 0;
        for (; it < cfg.cg_max_iter && !rep.cg_converged; ++it) {
            Eigen::VectorXd Nd = normal_apply(d, levenberg);
            const double dNd = d.dot(Nd);
            if (dNd <= 0.0) break;  // loss of positive definiteness
            const double step = rz / dNd;
            x += step * d;
            r -= step * Nd;
            if (r.norm() <= cfg.cg_tol * rhs_norm) {
                rep.cg_converged = true;
                break;
            }
            zv = precond(r);
            const double rz_new = r.dot(zv);
            d = zv + (rz_new / rz) * d;
            rz = rz_new;
        }
        rep.cg_iterations = it;
        rep.normal_residual = (rhs - normal_apply(x, levenberg)).norm();
        return x;
    };

    GnStepReport rep;
    Eigen::VectorXd x = run_cg(cfg.levenberg, rep);
    if (!rep.cg_converged && cfg.levenberg == 0.0) {
        // retry once with Levenberg damping sized from the gradient scale
        GnStepReport rep2;
        const double mu = 1e-6 * std::max(1.0, rhs.norm());
        Eigen::VectorXd x2 = run_cg(mu, rep2);
        if (rep2.normal_residual < rep.normal_residual) {
            x = x2;
            rep = rep2;
        }
    }
    if (report) *report = rep;
    return x;
}

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

OuterResult run_outer(const InverseProblem& ip, const std::string& method,
                      const Eigen::VectorXd& theta_init, const OuterConfig& cfg) {
    if (method != "gd" && method != "gn")
        throw std::invalid_argument("run_outer: method must be 'gd' or 'gn'");
    OuterResult result;
    EquilibriumCache cache;
    Eigen::VectorXd theta = theta_init;
    const double t0 = now_seconds();

    double objective = evaluate_objective(ip, theta, cache);
    result.trace.rows.push_back({0, objective, 0.0, cache.last_inner_iterations,
                                 now_seconds() - t0});

    for (int iter = 1; iter <= cfg.max_iter; ++iter) {
        auto lin = ip.model->linearize(cache.z, theta);
        double norm = 0.0;
        Eigen::VectorXd theta_next;
        double objective_next = objective;
        bool moved = false;

        if (method == "gd") {
            Eigen::VectorXd grad = adjoint_gradient(ip, theta, cache.z, lin.get());
            norm = grad.norm();
            const double gg = grad.squaredNorm();
            for (double t = cfg.gd_step_init; t > 1e-14; t *= cfg.gd_shrink) {
                Eigen::VectorXd trial = theta - t * grad;
                EquilibriumCache trial_cache = cache;  // warm start from current state
                double value;
                try {
                    value = evaluate_objective(ip, trial, trial_cache);
                } catch (const InnerSolveError&) {
                    continue;  // treat as insufficient decrease
                }
                if (value <= objective - cfg.gd_armijo * t * gg) {
                    theta_next = std::move(trial);
                    objective_next = value;
                    cache = std::move(trial_cache);
                    moved = true;
                    break;
                }
            }
        } else {
            GnStepReport rep;
            Eigen::VectorXd p = gn_step(ip, theta, cache.z, lin.get(), cfg, &rep);
            norm = p.norm();
            for (double t = 1.0; t > 1e-14; t *= 0.5) {
                Eigen::VectorXd trial = theta + t * p;
                EquilibriumCache trial_cache = cache;
                double value;
                try {
                    value = evaluate_objective(ip, trial, trial_cache);
                } catch (const InnerSolveError&) {
                    continue;
                }
                if (value < objective || t < 1e-13) {
                    theta_next = std::move(trial);
                    objective_next = value;
                    cache = std::move(trial_cache);
                    moved = true;
                    break;
                }
            }
        }

        if (!moved) {
            result.trace.converged = true;
            result.trace.message = "no descent step found";
            break;
        }
        const double change = std::abs(objective_next - objective);
        theta = std::move(theta_next);
        objective = objective_next;
        result.trace.rows.push_back({iter, objective, norm, cache.last_inner_iterations,
                                     now_seconds() - t0});
        if (change < cfg.objective_change_tol) {
            result.trace.converged = true;
            break;
        }
        if (iter == cfg.max_iter) result.trace.message = "iteration cap reached";
    }

    result.theta = theta;
    result.z = cache.z;
    result.converged = result.trace.converged;
    return result;
}

}  // namespace mfg
