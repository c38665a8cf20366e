#include "timedep.hpp"

#include <Eigen/SparseLU>
#include <cmath>
#include <fstream>

#include "assembly.hpp"

namespace mfg {

double SpaceTimeResidual::inf_norm() const {
    double m = 0.0;
    for (const auto& v : r) m = std::max(m, v.lpNorm<Eigen::Infinity>());
    for (const auto& v : s) m = std::max(m, v.lpNorm<Eigen::Infinity>());
    return m;
}

void TimedepTrace::to_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open trace file " + path);
    out << "step,s,ds,res_inf,min_density,mass_dev,bregman\n";
    char buf[220];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.s,
                      r.ds, r.res_inf, r.min_density, r.mass_dev, r.bregman);
        out << buf;
    }
}

namespace {

void check_state(const MfgProblem& p, const SpaceTimeState& y) {
    if (!p.time_dependent()) throw std::invalid_argument("problem is not time-dependent");
    if (y.slices() != p.time_slices || static_cast<int>(y.U.size()) != p.time_slices)
        throw std::invalid_argument("state slice count does not match problem");
}

}  // namespace

SpaceTimeResidual residual_td(const MfgProblem& problem, const SpaceTimeState& y) {
    check_state(problem, y);
    const TorusGrid& grid = problem.grid;
    const int nt = problem.time_slices;
    const double dt = problem.dt();
    SpaceTimeResidual out;
    out.r.resize(nt);
    out.s.resize(nt);
    for (int k = 1; k <= nt; ++k) {
        const Eigen::VectorXd& Mk = y.M[k - 1];
        const Eigen::VectorXd& Mkm1 = (k == 1) ? problem.initial_density : y.M[k - 2];
        const Eigen::VectorXd& Ukm1 = y.U[k - 1];
        const Eigen::VectorXd& Uk = (k == nt) ? problem.terminal_value : y.U[k];

        Eigen::MatrixXd q = upwind_stencil(grid, Ukm1);
        Eigen::VectorXd g = hamiltonian_values(problem, q, Mk);
        Eigen::VectorXd rk = (Uk - Ukm1) / dt - g +
                             problem.signs.f_sign * problem.coupling.apply(grid, Mk) +
                             problem.signs.v_sign * problem.spatial_cost;
        if (problem.viscosity != 0.0) rk += problem.viscosity * laplacian(grid, Ukm1);

        Eigen::VectorXd sk = (Mk - Mkm1) / dt + transport_operator(problem, Ukm1, Mk);
        if (problem.viscosity != 0.0) sk -= problem.viscosity * laplacian(grid, Mk);

        out.r[k - 1] = std::move(rk);
        out.s[k - 1] = std::move(sk);
    }
    return out;
}

double spacetime_pairing(const MfgProblem& problem, const Eigen::VectorXd& a,
                         const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw std::invalid_argument("spacetime_pairing: shape mismatch");
    Eigen::VectorXd prod = a.cwiseProduct(b);
    return problem.dt() * problem.grid.cell_weight() * pairwise_sum(prod);
}

double monotonicity_gap(const MfgProblem& problem, const SpaceTimeState& y,
                        const SpaceTimeState& yt) {
    Eigen::VectorXd df = flatten(residual_td(problem, y)) - flatten(residual_td(problem, yt));
    Eigen::VectorXd dz = flatten(y) - flatten(yt);
    return spacetime_pairing(problem, df, dz);
}

FlowDirection hrf_rhs(const MfgProblem& problem, const SpaceTimeState& y) {
    SpaceTimeResidual f = residual_td(problem, y);
    const int nt = problem.time_slices;
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(problem.grid.node_count());
    FlowDirection d;
    d.Mdot.resize(nt);
    d.Udot.resize(nt);
    for (int k = 0; k < nt; ++k) {
        const double rbar = inner_h(problem.grid, y.M[k], f.r[k]) /
                            inner_h(problem.grid, y.M[k], ones);
        d.Mdot[k] = (-y.M[k].array() * (f.r[k].array() - rbar)).matrix();
        d.Udot[k] = -f.s[k];
    }
    return d;
}

double entropy(const MfgProblem& problem, const SpaceTimeState& y) {
    check_state(problem, y);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(problem.grid.node_count());
    double e = 0.0;
    for (const auto& m : y.M) {
        if (m.minCoeff() <= 0.0) throw std::domain_error("entropy: non-positive density");
        e += inner_h(problem.grid, m, (m.array().log() - 1.0).matrix());
    }
    for (const auto& u : y.U) e += 0.5 * inner_h(problem.grid, u, u);
    return problem.dt() * e;
}

double bregman(const MfgProblem& problem, const SpaceTimeState& y_star, const SpaceTimeState& y) {
    // grad E(Y) blocks are (log M_k, U_k) w.r.t. the space-time pairing.
    const int nt = problem.time_slices;
    Eigen::VectorXd grad(2 * nt * problem.grid.node_count());
    const int n = problem.grid.node_count();
    for (int k = 0; k < nt; ++k) {
        if (y.M[k].minCoeff() <= 0.0) throw std::domain_error("bregman: non-positive density");
        grad.segment(k * n, n) = y.M[k].array().log().matrix();
        grad.segment((nt + k) * n, n) = y.U[k];
    }
    return entropy(problem, y_star) - entropy(problem, y) -
           spacetime_pairing(problem, grad, flatten(y_star) - flatten(y));
}

Eigen::VectorXd flatten(const SpaceTimeState& y) {
    const int nt = y.slices();
    const int n = nt ? static_cast<int>(y.M[0].size()) : 0;
    Eigen::VectorXd z(2 * nt * n);
    for (int k = 0; k < nt; ++k) {
        z.segment(k * n, n) = y.M[k];
        z.segment((nt + k) * n, n) = y.U[k];
    }
    return z;
}

Eigen::VectorXd flatten(const SpaceTimeResidual& f) {
    const int nt = static_cast<int>(f.r.size());
    const int n = nt ? static_cast<int>(f.r[0].size()) : 0;
    Eigen::VectorXd z(2 * nt * n);
    for (int k = 0; k < nt; ++k) {
        z.segment(k * n, n) = f.r[k];
        z.segment((nt + k) * n, n) = f.s[k];
    }
    return z;
}

SpaceTimeState unflatten_state(const MfgProblem& problem, const Eigen::VectorXd& z) {
    const int nt = problem.time_slices;
    const int n = problem.grid.node_count();
    if (z.size() != 2 * nt * n) throw std::invalid_argument("unflatten_state: size mismatch");
    SpaceTimeState y;
    y.M.resize(nt);
    y.U.resize(nt);
    for (int k = 0; k < nt; ++k) {
        y.M[k] = z.segment(k * n, n);
        y.U[k] = z.segment((nt + k) * n, n);
    }
    return y;
}

SpaceTimeState default_timedep_init(const MfgProblem& problem) {
    SpaceTimeState y;
    y.M.assign(problem.time_slices, problem.initial_density);
    y.U.assign(problem.time_slices, problem.terminal_value);
    return y;
}

double max_mass_deviation(const MfgProblem& problem, const SpaceTimeState& y) {
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(problem.grid.node_count());
    double dev = 0.0;
    for (const auto& m : y.M)
        dev = std::max(dev, std::abs(inner_h(problem.grid, m, ones) - 1.0));
    return dev;
}

double min_density(const SpaceTimeState& y) {
    double mn = std::numeric_limits<double>::infinity();
    for (const auto& m : y.M) mn = std::min(mn, m.minCoeff());
    return mn;
}

Eigen::SparseMatrix<double> timedep_jacobian(const MfgProblem& problem, const SpaceTimeState& y) {
    check_state(problem, y);
    const TorusGrid& grid = problem.grid;
    const int n = grid.node_count();
    const int nt = problem.time_slices;
    const double dt = problem.dt();
    const int w = grid.stencil_width();

    Triplets trips;
    trips.reserve(static_cast<size_t>(nt) * n * 40);
    for (int k = 1; k <= nt; ++k) {
        const Eigen::VectorXd& Mk = y.M[k - 1];
        const Eigen::VectorXd& Ukm1 = y.U[k - 1];
        const int r_row = (k - 1) * n;
        const int s_row = (nt + k - 1) * n;
        const int m_col = (k - 1) * n;
        const int u_col = (nt + k - 1) * n;

        Eigen::MatrixXd q = upwind_stencil(grid, Ukm1);
        Eigen::MatrixXd alpha = hamiltonian_gradients(problem, q, Mk);
        Eigen::MatrixXd hess(n, w), dalpha_dm = Eigen::MatrixXd::Zero(n, w);
        {
            double qi[4], out[4];
            for (int i = 0; i < n; ++i) {
                for (int l = 0; l < w; ++l) qi[l] = q(i, l);
                const double xc = grid.coord(i, 1), yc = grid.dim == 2 ? grid.coord(i, 2) : 0.0;
                problem.hamiltonian.hess_q_diag(xc, yc, qi, Mk[i], out);
                for (int l = 0; l < w; ++l) hess(i, l) = out[l];
                if (problem.hamiltonian.depends_on_density()) {
                    problem.hamiltonian.dgrad_q_dm(xc, yc, qi, Mk[i], out);
                    for (int l = 0; l < w; ++l) dalpha_dm(i, l) = out[l];
                }
            }
        }

        // r_k rows
        problem.coupling.jacobian_triplets(grid, Mk, r_row, m_col, problem.signs.f_sign, trips);
        if (problem.hamiltonian.depends_on_density()) {
            double qi[4];
            for (int i = 0; i < n; ++i) {
                for (int l = 0; l < w; ++l) qi[l] = q(i, l);
                trips.emplace_back(r_row + i, m_col + i,
                                   -problem.hamiltonian.dvalue_dm(
                                       grid.coord(i, 1), grid.dim == 2 ? grid.coord(i, 2) : 0.0,
                                       qi, Mk[i]));
            }
        }
        add_identity(n, r_row, u_col, -1.0 / dt, trips);
        if (problem.viscosity != 0.0) add_laplacian(grid, r_row, u_col, problem.viscosity, trips);
        for (int l = 0; l < w; ++l) {
            int axis, sign;
            stencil_component(l, axis, sign);
            add_diff_rowscaled(grid, axis, sign, alpha.col(l), r_row, u_col, -1.0, trips);
        }
        if (k < nt) add_identity(n, r_row, u_col + n, 1.0 / dt, trips);

        // s_k rows
        add_identity(n, s_row, m_col, 1.0 / dt, trips);
        if (problem.viscosity != 0.0) add_laplacian(grid, s_row, m_col, -problem.viscosity, trips);
        for (int l = 0; l < w; ++l) {
            int axis, sign;
            stencil_component(l, axis, sign);
            Eigen::VectorXd coeff = alpha.col(l) + Mk.cwiseProduct(dalpha_dm.col(l));
            add_diff_colscaled(grid, axis, -sign, coeff, s_row, m_col, -1.0, trips);
            add_div_form(grid, axis, -sign, Mk.cwiseProduct(hess.col(l)), axis, sign, s_row, u_col,
                         -1.0, trips);
        }
        if (k > 1) add_identity(n, s_row, m_col - n, -1.0 / dt, trips);
    }
    Eigen::SparseMatrix<double> J(2 * nt * n, 2 * nt * n);
    J.setFromTriplets(trips.begin(), trips.end());
    return J;
}

namespace {

void push_trace(TimedepTrace* trace, const MfgProblem& p, const SpaceTimeState& y, int step,
                double s, double ds, double res, const SpaceTimeState* ref) {
    if (!trace) return;
    TimedepTraceRow row;
    row.step = step;
    row.s = s;
    row.ds = ds;
    row.res_inf = res;
    row.min_density = min_density(y);
    row.mass_dev = max_mass_deviation(p, y);
    if (ref) row.bregman = bregman(p, *ref, y);
    trace->rows.push_back(row);
}

}  // namespace

SpaceTimeState newton_timedep_solve(const MfgProblem& problem, const SpaceTimeState& init,
                                    const TimedepNewtonConfig& cfg, TimedepTrace* trace) {
    check_state(problem, init);
    MfgProblem smooth = problem.with_smoothed_hamiltonian(cfg.smoothing);
    SpaceTimeState y = init;
    const bool need_positive =
        problem.coupling.requires_positive() || problem.hamiltonian.depends_on_density();

    Eigen::VectorXd F = flatten(residual_td(problem, y));
    push_trace(trace, problem, y, 0, 0.0, 0.0, F.lpNorm<Eigen::Infinity>(), nullptr);
    for (int it = 0; it < cfg.max_iter; ++it) {
        if (F.lpNorm<Eigen::Infinity>() < cfg.tol) {
            if (trace) trace->converged = true;
            return y;
        }
        Eigen::SparseMatrix<double> J = timedep_jacobian(smooth, y);
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(J);
        Eigen::VectorXd dz;
        if (lu.info() == Eigen::Success) dz = lu.solve(-F);
        if (lu.info() != Eigen::Success || !dz.allFinite()) {
            Eigen::SparseMatrix<double> JtJ = (J.transpose() * J).pruned();
            for (int i = 0; i < JtJ.rows(); ++i) JtJ.coeffRef(i, i) += cfg.tikhonov;
            Eigen::SparseLU<Eigen::SparseMatrix<double>> lu2;
            lu2.compute(JtJ);
            if (lu2.info() != Eigen::Success) {
                if (trace) {
                    trace->converged = false;
                    trace->message = "singular Jacobian";
                }
                return y;
            }
            dz = lu2.solve(-(J.transpose() * F).eval());
        }
        const double phi = F.norm();
        bool accepted = false;
        for (double t = 1.0; t > 1e-12; t *= 0.5) {
            Eigen::VectorXd zt = flatten(y) + t * dz;
            SpaceTimeState yt = unflatten_state(problem, zt);
            if (need_positive && min_density(yt) <= 0.0) continue;
            Eigen::VectorXd Ft;
            try {
                Ft = flatten(residual_td(problem, yt));
            } catch (const std::domain_error&) {
                continue;
            }
            if (Ft.norm() < (1.0 - 1e-4 * t) * phi) {
                y = std::move(yt);
                F = std::move(Ft);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (trace) {
                trace->converged = false;
                trace->message = "line search failed";
            }
            return y;
        }
        push_trace(trace, problem, y, it + 1, 0.0, 0.0, F.lpNorm<Eigen::Infinity>(), nullptr);
    }
    if (trace) {
        trace->converged = false;
        trace->message = "iteration budget exhausted";
    }
    return y;
}

SpaceTimeState hrf_timedep_solve(const MfgProblem& problem, const SpaceTimeState& init,
                                 const TimedepFlowConfig& cfg, TimedepTrace* trace,
                                 const SpaceTimeState* reference) {
    check_state(problem, init);
    if (min_density(init) <= 0.0)
        throw std::invalid_argument("hrf_timedep_solve: initial density must be positive");
    MfgProblem smooth = problem.with_smoothed_hamiltonian(cfg.smoothing);
    const TorusGrid& grid = problem.grid;
    const int n = grid.node_count();
    const int nt = problem.time_slices;
    const int dim_z = 2 * nt * n;
    const double wcell = grid.cell_weight();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);

    SpaceTimeState y = init;
    auto renormalize = [&](SpaceTimeState& st) {
        for (auto& m : st.M) {
            const double mass = inner_h(grid, m, ones);
            if (mass > 0.0) m /= mass;
        }
    };
    renormalize(y);

    // The flow leaves every U-slice mean invariant (<s_k, 1>_h = 0 on the
    // unit-mass manifold) and, conversely, the slice means influence nothing
    // in the flow field: r_k - rbar_k kills slice constants and s_k never
    // sees them. The root's means, however, are pinned by the frozen terminal
    // slice. So we integrate the dynamics verbatim (which keeps the Bregman
    // descent property intact, the mean mismatch contributing a constant) and
    // impose the compatible slice constants separately: with c_k the plain
    // mean of r_k, shifting U_{k-1} by delta_{k-1} = delta_k + dt c_k
    // (delta_NT = 0) zeroes every HJB-block mean and changes no other
    // residual component — the time-dependent analog of the stationary
    // zero-mean gauge. Convergence is measured, and the final state returned,
    // in this projected gauge.
    const double dtv = problem.dt();
    auto project_slice_constants = [&](SpaceTimeState& st, SpaceTimeResidual& f) {
        // Work from the terminal slice down; each r-block mean is read after
        // the U_k shift of the previous iteration has been folded in, so the
        // shift that zeroes it is exactly dt * mean.
        for (int k = nt; k >= 1; --k) {
            const double c = inner_h(grid, f.r[k - 1], ones);  // <1,1>_h = 1
            const double delta_km1 = dtv * c;
            st.U[k - 1].array() += delta_km1;
            f.r[k - 1].array() -= c;
            if (k >= 2) f.r[k - 2].array() += delta_km1 / dtv;  // U_{k-1} enters r_{k-1}
        }
    };

    // Fix the gauge once at the start; thereafter the flow conserves it only
    // approximately, so each step measures the projected copy.
    SpaceTimeResidual res = residual_td(problem, y);
    project_slice_constants(y, res);
    double res_norm = res.inf_norm();
    const double res0_norm = res_norm;
    double res_window = res_norm;
    double s = 0.0;
    push_trace(trace, problem, y, 0, s, 0.0, res_norm, reference);
    if (res_norm < cfg.tol) {
        if (trace) trace->converged = true;
        return y;
    }

    // Flow field as a flat vector, plus the per-slice means for the trace.
    auto flow_flat = [&](const SpaceTimeState& st, const SpaceTimeResidual& f) {
        Eigen::VectorXd phi(dim_z);
        for (int k = 0; k < nt; ++k) {
            const double rbar = inner_h(grid, st.M[k], f.r[k]) / inner_h(grid, st.M[k], ones);
            phi.segment(k * n, n) = -st.M[k].cwiseProduct((f.r[k].array() - rbar).matrix());
            phi.segment((nt + k) * n, n) = -f.s[k];
        }
        return phi;
    };

    double ds = cfg.ds_init;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    double lu_ds = -1.0;
    int lu_age = std::numeric_limits<int>::max();

    auto build_step_matrix = [&](const SpaceTimeState& base, const SpaceTimeResidual& fbase,
                                 double step) {
        // Bordered Jacobian of G(z+) = z+ - z - step*Phi(z+): the per-slice
        // means rbar_k get auxiliary unknowns tau_k so the matrix stays sparse.
        Eigen::SparseMatrix<double> JF = timedep_jacobian(smooth, base);
        Triplets trips;
        trips.reserve(JF.nonZeros() + static_cast<size_t>(dim_z) + 4u * nt * n);
        Eigen::VectorXd mstack = flatten(base).head(nt * n);
        for (int col = 0; col < JF.outerSize(); ++col) {
            for (Eigen::SparseMatrix<double>::InnerIterator it(JF, col); it; ++it) {
                const int i = static_cast<int>(it.row());
                const double scale = i < nt * n ? step * mstack[i] : step;
                trips.emplace_back(i, static_cast<int>(it.col()), scale * it.value());
            }
        }
        for (int i = 0; i < dim_z; ++i) trips.emplace_back(i, i, 1.0);
        for (int k = 0; k < nt; ++k) {
            const double mass = inner_h(grid, base.M[k], ones);
            const double rbar = inner_h(grid, base.M[k], fbase.r[k]) / mass;
            // diagonal r_k - rbar term and the tau_k column
            for (int i = 0; i < n; ++i) {
                trips.emplace_back(k * n + i, k * n + i, step * (fbase.r[k][i] - rbar));
                trips.emplace_back(k * n + i, dim_z + k, -step * base.M[k][i]);
            }
            // border row: tau_k - d(rbar_k)/dz . dz = 0
            Eigen::VectorXd e = Eigen::VectorXd::Zero(dim_z);
            e.segment(k * n, n) = base.M[k];
            Eigen::VectorXd JtM = JF.transpose() * e;
            const double c = wcell / mass;
            for (int j = 0; j < dim_z; ++j) {
                double v = c * JtM[j];
                if (j >= k * n && j < (k + 1) * n) v += c * (fbase.r[k][j - k * n] - rbar);
                if (v != 0.0) trips.emplace_back(dim_z + k, j, -v);
            }
            trips.emplace_back(dim_z + k, dim_z + k, 1.0);
        }
        Eigen::SparseMatrix<double> JG(dim_z + nt, dim_z + nt);
        JG.setFromTriplets(trips.begin(), trips.end());
        return JG;
    };

    int accepted = 0;
    for (int step = 0; step < cfg.max_steps; ++step) {
        bool step_ok = false;
        while (!step_ok) {
            bool refactor = lu_age >= cfg.jacobian_max_age || lu_ds <= 0.0 ||
                            ds > 1.7 * lu_ds || ds < 0.6 * lu_ds;
            bool newton_ok = false;
            SpaceTimeState yp = y;
            for (int attempt = 0; attempt < 2 && !newton_ok; ++attempt) {
                if (refactor) {
                    lu.compute(build_step_matrix(y, res, ds));
                    if (lu.info() != Eigen::Success) break;
                    lu_ds = ds;
                    lu_age = 0;
                }
                yp = y;
                Eigen::VectorXd z0 = flatten(y);
                const double gtol = 1e-11 * (1.0 + z0.lpNorm<Eigen::Infinity>());
                for (int it = 0; it < cfg.newton_max; ++it) {
                    SpaceTimeResidual rp;
                    try {
                        rp = residual_td(problem, yp);
                    } catch (const std::domain_error&) {
                        break;
                    }
                    Eigen::VectorXd G(dim_z + nt);
                    G.head(dim_z) = flatten(yp) - z0 - ds * flow_flat(yp, rp);
                    G.tail(nt).setZero();
                    if (G.head(dim_z).lpNorm<Eigen::Infinity>() < gtol) {
                        newton_ok = true;
                        break;
                    }
                    Eigen::VectorXd dz = lu.solve(-G);
                    if (!dz.allFinite()) break;
                    Eigen::VectorXd zn = flatten(yp) + dz.head(dim_z);
                    SpaceTimeState yn = unflatten_state(problem, zn);
                    if (min_density(yn) <= 0.0) break;  // reject and shrink ds
                    yp = std::move(yn);
                }
                if (!newton_ok && !refactor) refactor = true;
                else break;
            }
            if (newton_ok && min_density(yp) > 0.0) {
                y = std::move(yp);
                renormalize(y);
                ++lu_age;
                step_ok = true;
                s += ds;
                ds = std::min(ds * cfg.ds_growth, 1e12);
            } else {
                ds *= 0.5;
                lu_ds = -1.0;
                if (ds < cfg.ds_min) {
                    if (trace) {
                        trace->converged = false;
                        trace->message = "step size underflow";
                    }
                    return y;
                }
            }
        }
        ++accepted;
        res = residual_td(problem, y);
        SpaceTimeState projected = y;
        SpaceTimeResidual projected_res = res;
        project_slice_constants(projected, projected_res);
        res_norm = projected_res.inf_norm();
        push_trace(trace, problem, y, accepted, s, ds, res_norm, reference);
        if (res_norm < cfg.tol) {
            if (trace) trace->converged = true;
            return projected;
        }
        // fail fast on blow-up or long stalls (wild outer-trial parameters)
        if (res_norm > 1e6 * (1.0 + res0_norm)) {
            if (trace) {
                trace->converged = false;
                trace->message = "flow diverged";
            }
            return projected;
        }
        if (accepted % 250 == 0) {
            if (res_norm > 0.99 * res_window) {
                if (trace) {
                    trace->converged = false;
                    trace->message = "flow stalled";
                }
                return projected;
            }
            res_window = res_norm;
        }
    }
    if (trace) {
        trace->converged = false;
        trace->message = "flow budget exhausted";
    }
    SpaceTimeState projected = y;
    SpaceTimeResidual projected_res = res;
    project_slice_constants(projected, projected_res);
    return projected;
}

}  // namespace mfg
