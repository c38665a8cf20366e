#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "presets.hpp"
#include "stationary.hpp"
#include "timedep.hpp"

using namespace mfg;

namespace {

Eigen::VectorXd random_field(const TorusGrid& g, std::mt19937_64& rng, double lo = -1.0,
                             double hi = 1.0) {
    std::uniform_real_distribution<double> unif(lo, hi);
    Eigen::VectorXd v(g.node_count());
    for (int i = 0; i < v.size(); ++i) v[i] = unif(rng);
    return v;
}

SpaceTimeState random_feasible(const MfgProblem& p, std::mt19937_64& rng) {
    SpaceTimeState y;
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(p.grid.node_count());
    for (int k = 0; k < p.time_slices; ++k) {
        Eigen::VectorXd m = random_field(p.grid, rng, 0.2, 2.0);
        m /= inner_h(p.grid, m, ones);
        y.M.push_back(m);
        y.U.push_back(random_field(p.grid, rng));
    }
    return y;
}

MfgProblem tiny_td(int n = 4, int nt = 2, Coupling coupling = Coupling::power(1.0),
                   double nu = 0.1) {
    TorusGrid g(1, n);
    return MfgProblem::time_dependent_problem(
        g, nu, NumericalHamiltonian::godunov_quadratic(1), std::move(coupling),
        Eigen::VectorXd::Zero(n), 1.0, nt, Eigen::VectorXd::Ones(n), Eigen::VectorXd::Zero(n));
}

MfgProblem downscaled_td_preset(int n, int nt) {
    ExperimentConfig c = preset_config("timedep-1d");
    c.n_per_axis = n;
    c.time_slices = nt;
    c.obs_m = 8;
    c.obs_v = 4;
    return make_problem(c, preset_true_cost(c.preset, TorusGrid(1, n)));
}

}  // namespace

TEST_CASE("residual_td equals the naive oracle") {
    std::mt19937_64 rng(31);
    MfgProblem p = tiny_td();
    for (int trial = 0; trial < 25; ++trial) {
        SpaceTimeState y = random_feasible(p, rng);
        SpaceTimeResidual a = residual_td(p, y);
        SpaceTimeResidual b = oracle::residual_td(p, y);
        for (int k = 0; k < p.time_slices; ++k) {
            CHECK((a.r[k] - b.r[k]).lpNorm<Eigen::Infinity>() < 1e-12);
            CHECK((a.s[k] - b.s[k]).lpNorm<Eigen::Infinity>() < 1e-12);
        }
    }
    // 2d as well
    TorusGrid g2(2, 4);
    MfgProblem p2 = MfgProblem::time_dependent_problem(
        g2, 0.05, NumericalHamiltonian::godunov_quadratic(2), Coupling::power(3.0),
        Eigen::VectorXd::Zero(16), 1.0, 3, Eigen::VectorXd::Ones(16), Eigen::VectorXd::Zero(16));
    for (int trial = 0; trial < 10; ++trial) {
        SpaceTimeState y = random_feasible(p2, rng);
        SpaceTimeResidual a = residual_td(p2, y);
        SpaceTimeResidual b = oracle::residual_td(p2, y);
        for (int k = 0; k < p2.time_slices; ++k) {
            CHECK((a.r[k] - b.r[k]).lpNorm<Eigen::Infinity>() < 1e-12);
            CHECK((a.s[k] - b.s[k]).lpNorm<Eigen::Infinity>() < 1e-12);
        }
    }
}

TEST_CASE("FP blocks have zero mean on feasible states") {
    std::mt19937_64 rng(32);
    MfgProblem p = tiny_td(6, 3);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(p.grid.node_count());
    for (int trial = 0; trial < 20; ++trial) {
        SpaceTimeState y = random_feasible(p, rng);
        SpaceTimeResidual f = residual_td(p, y);
        for (int k = 0; k < p.time_slices; ++k)
            CHECK(std::abs(inner_h(p.grid, f.s[k], ones)) < 1e-12);
    }
}

TEST_CASE("stationary embedding gives time-independent residual blocks") {
    // solve a small stationary problem, absorb lambda into V, embed in time
    ExperimentConfig c = preset_config("stationary-1d-effective-hamiltonian");
    c.n_per_axis = 12;
    MfgProblem pst = make_problem(c, preset_true_cost(c.preset, TorusGrid(1, 12)));
    NewtonConfig ncfg;
    StationaryState root = newton_stationary_solve(pst, default_stationary_init(pst), ncfg);

    MfgProblem ptd = MfgProblem::time_dependent_problem(
        pst.grid, pst.viscosity, pst.hamiltonian, pst.coupling,
        (pst.spatial_cost.array() + root.lambda).matrix(), 1.0, 4, root.M, root.U);
    SpaceTimeState y;
    y.M.assign(4, root.M);
    y.U.assign(4, root.U);
    SpaceTimeResidual f = residual_td(ptd, y);
    for (int k = 1; k < 4; ++k) {
        CHECK((f.r[k] - f.r[0]).lpNorm<Eigen::Infinity>() < 1e-12);
        CHECK((f.s[k] - f.s[0]).lpNorm<Eigen::Infinity>() < 1e-12);
    }
    // and in fact the embedded state is a root of the time-dependent system
    CHECK(f.inf_norm() < 1e-8);
}

TEST_CASE("spacetime pairing") {
    MfgProblem p = tiny_td(4, 2);
    const int dim = 2 * p.time_slices * p.grid.node_count();
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(dim);
    CHECK(spacetime_pairing(p, ones, ones) == doctest::Approx(2.0).epsilon(1e-14));
    std::mt19937_64 rng(33);
    Eigen::VectorXd a(dim), b(dim);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int i = 0; i < dim; ++i) {
        a[i] = unif(rng);
        b[i] = unif(rng);
    }
    CHECK(spacetime_pairing(p, 3.0 * a, b) ==
          doctest::Approx(3.0 * spacetime_pairing(p, a, b)).epsilon(1e-14));
    double naive = 0.0;
    for (int i = 0; i < dim; ++i) naive += a[i] * b[i];
    naive *= p.dt() * p.grid.cell_weight();
    CHECK(spacetime_pairing(p, a, b) == doctest::Approx(naive).epsilon(1e-14));
}

TEST_CASE("strict monotonicity gap") {
    std::mt19937_64 rng(34);
    TorusGrid g(2, 6);
    for (auto coupling : {Coupling::power(1.0), Coupling::power(3.0)}) {
        MfgProblem p = MfgProblem::time_dependent_problem(
            g, 0.0, NumericalHamiltonian::godunov_quadratic(2), coupling,
            Eigen::VectorXd::Zero(g.node_count()), 1.0, 3, Eigen::VectorXd::Ones(g.node_count()),
            Eigen::VectorXd::Zero(g.node_count()));
        SpaceTimeState y = random_feasible(p, rng);
        CHECK(monotonicity_gap(p, y, y) == 0.0);
        for (int trial = 0; trial < 200; ++trial) {
            SpaceTimeState a = random_feasible(p, rng), b = random_feasible(p, rng);
            CHECK(monotonicity_gap(p, a, b) > 0.0);
        }
        // coupling-only perturbation: gap reduces to the coupling pairing
        SpaceTimeState a = random_feasible(p, rng);
        SpaceTimeState b = a;
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(g.node_count());
        for (int k = 0; k < p.time_slices; ++k) {
            Eigen::VectorXd m = random_field(g, rng, 0.2, 2.0);
            b.M[k] = m / inner_h(g, m, ones);
        }
        double expected = 0.0;
        for (int k = 0; k < p.time_slices; ++k)
            expected += inner_h(g, coupling.apply(g, a.M[k]) - coupling.apply(g, b.M[k]),
                                a.M[k] - b.M[k]);
        expected *= p.dt();
        CHECK(monotonicity_gap(p, a, b) == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("hrf_rhs structure") {
    std::mt19937_64 rng(35);
    MfgProblem p = tiny_td(6, 3);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(p.grid.node_count());
    SpaceTimeState y = random_feasible(p, rng);
    FlowDirection d = hrf_rhs(p, y);
    for (int k = 0; k < p.time_slices; ++k)
        CHECK(std::abs(inner_h(p.grid, d.Mdot[k], ones)) < 1e-14);

    // with unit density the slice mean reduces to the plain weighted mean
    SpaceTimeState yu = y;
    for (auto& m : yu.M) m = ones;
    SpaceTimeResidual f = residual_td(p, yu);
    FlowDirection du = hrf_rhs(p, yu);
    for (int k = 0; k < p.time_slices; ++k) {
        const double rbar = inner_h(p.grid, ones, f.r[k]);
        CHECK((du.Mdot[k] + (f.r[k].array() - rbar).matrix()).lpNorm<Eigen::Infinity>() < 1e-13);
    }

    // at a root the direction vanishes
    MfgProblem pre = downscaled_td_preset(8, 4);
    TimedepNewtonConfig ncfg;
    SpaceTimeState root = newton_timedep_solve(pre, default_timedep_init(pre), ncfg);
    FlowDirection dz = hrf_rhs(pre, root);
    for (int k = 0; k < pre.time_slices; ++k) {
        CHECK(dz.Mdot[k].lpNorm<Eigen::Infinity>() < 1e-9);
        CHECK(dz.Udot[k].lpNorm<Eigen::Infinity>() < 1e-9);
    }
}

TEST_CASE("entropy and Bregman divergence") {
    std::mt19937_64 rng(36);
    MfgProblem p = tiny_td(4, 2);
    SpaceTimeState y = random_feasible(p, rng);
    CHECK(bregman(p, y, y) == doctest::Approx(0.0));

    // U-only difference: quadratic formula
    SpaceTimeState ystar = y;
    for (auto& u : ystar.U) {
        std::uniform_real_distribution<double> unif(-1.0, 1.0);
        for (int i = 0; i < u.size(); ++i) u[i] += unif(rng);
    }
    double expected = 0.0;
    for (int k = 0; k < p.time_slices; ++k) {
        Eigen::VectorXd du = ystar.U[k] - y.U[k];
        expected += 0.5 * p.dt() * inner_h(p.grid, du, du);
    }
    CHECK(bregman(p, ystar, y) == doctest::Approx(expected).epsilon(1e-12));

    // random pair against the direct three-term evaluation
    SpaceTimeState a = random_feasible(p, rng), b = random_feasible(p, rng);
    const int n = p.grid.node_count();
    Eigen::VectorXd gradb(2 * p.time_slices * n);
    for (int k = 0; k < p.time_slices; ++k) {
        gradb.segment(k * n, n) = b.M[k].array().log().matrix();
        gradb.segment((p.time_slices + k) * n, n) = b.U[k];
    }
    const double direct =
        entropy(p, a) - entropy(p, b) - spacetime_pairing(p, gradb, flatten(a) - flatten(b));
    CHECK(bregman(p, a, b) == doctest::Approx(direct).epsilon(1e-12));
    CHECK(bregman(p, a, b) >= 0.0);

    SpaceTimeState bad = a;
    bad.M[0][0] = -1.0;
    CHECK_THROWS_AS(entropy(p, bad), std::domain_error);
}

TEST_CASE("timedep jacobian matches finite differences") {
    std::mt19937_64 rng(37);
    for (auto coupling : {Coupling::power(3.0), Coupling::nonlocal_smooth(1.0)}) {
        MfgProblem p = tiny_td(5, 3, coupling, 0.07);
        SpaceTimeState y = random_feasible(p, rng);
        Eigen::SparseMatrix<double> J = timedep_jacobian(p.with_smoothed_hamiltonian(1e-9), y);
        Eigen::VectorXd z = flatten(y);
        Eigen::VectorXd dz(z.size());
        std::uniform_real_distribution<double> unif(-1.0, 1.0);
        for (int i = 0; i < dz.size(); ++i) dz[i] = 1e-6 * unif(rng);
        Eigen::VectorXd fp = flatten(residual_td(p, unflatten_state(p, z + dz)));
        Eigen::VectorXd fm = flatten(residual_td(p, unflatten_state(p, z - dz)));
        CHECK(((J * dz) - (fp - fm) / 2.0).lpNorm<Eigen::Infinity>() < 1e-7);
    }
}

TEST_CASE("newton timedep root and zero-step restart") {
    MfgProblem p = downscaled_td_preset(10, 6);
    TimedepNewtonConfig cfg;
    TimedepTrace trace;
    SpaceTimeState root = newton_timedep_solve(p, default_timedep_init(p), cfg, &trace);
    CHECK(trace.converged);
    CHECK(flatten(residual_td(p, root)).lpNorm<Eigen::Infinity>() < cfg.tol);
    TimedepTrace t2;
    newton_timedep_solve(p, root, cfg, &t2);
    CHECK(t2.rows.size() == 1);
}

TEST_CASE("hrf timedep: feasibility, descent, endpoint freezing") {
    MfgProblem p = downscaled_td_preset(10, 8);
    const Eigen::VectorXd m0_before = p.initial_density;
    const Eigen::VectorXd uT_before = p.terminal_value;

    TimedepNewtonConfig ncfg;
    SpaceTimeState root = newton_timedep_solve(p, default_timedep_init(p), ncfg);

    TimedepFlowConfig cfg;
    TimedepTrace trace;
    SpaceTimeState sol = hrf_timedep_solve(p, default_timedep_init(p), cfg, &trace, &root);
    CHECK(trace.converged);
    CHECK(flatten(residual_td(p, sol)).lpNorm<Eigen::Infinity>() < cfg.tol);

    double prev = std::numeric_limits<double>::infinity();
    for (const auto& row : trace.rows) {
        CHECK(row.mass_dev < 1e-12);
        CHECK(row.min_density > 0.0);
        CHECK(row.bregman <= prev + 1e-10);
        prev = row.bregman;
    }
    // endpoints bit-identical
    CHECK(std::memcmp(m0_before.data(), p.initial_density.data(),
                      sizeof(double) * m0_before.size()) == 0);
    CHECK(std::memcmp(uT_before.data(), p.terminal_value.data(),
                      sizeof(double) * uT_before.size()) == 0);
    // solution close to the Newton root
    CHECK((flatten(sol) - flatten(root)).lpNorm<Eigen::Infinity>() < 1e-5);

    // starting at the root returns immediately
    TimedepTrace t2;
    hrf_timedep_solve(p, root, cfg, &t2);
    CHECK(t2.rows.size() == 1);
}

TEST_CASE("timedep trace csv") {
    MfgProblem p = downscaled_td_preset(8, 4);
    TimedepFlowConfig cfg;
    TimedepTrace trace;
    hrf_timedep_solve(p, default_timedep_init(p), cfg, &trace);
    const std::string path = "timedep_trace_test.csv";
    trace.to_csv(path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "step,s,ds,res_inf,min_density,mass_dev,bregman");
    std::remove(path.c_str());
}
