#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "presets.hpp"
#include "stationary.hpp"

using namespace mfg;

namespace {

Eigen::VectorXd random_field(const TorusGrid& g, std::mt19937_64& rng, double lo = -1.0,
                             double hi = 1.0) {
    std::uniform_real_distribution<double> unif(lo, hi);
    Eigen::VectorXd v(g.node_count());
    for (int i = 0; i < v.size(); ++i) v[i] = unif(rng);
    return v;
}

MfgProblem small_1d_preset(int n) {
    ExperimentConfig c = preset_config("stationary-1d-effective-hamiltonian");
    c.n_per_axis = n;
    c.obs_m = 4;
    c.obs_v = 4;
    return make_problem(c, preset_true_cost(c.preset, TorusGrid(1, n)));
}

MfgProblem small_nonlocal_preset(int n) {
    ExperimentConfig c = preset_config("stationary-2d-nonlocal");
    c.n_per_axis = n;
    c.obs_m = 4;
    c.obs_v = 4;
    return make_problem(c, preset_true_cost(c.preset, TorusGrid(2, n)));
}

}  // namespace

TEST_CASE("lambda elimination") {
    TorusGrid g(2, 6);
    MfgProblem p = MfgProblem::stationary(g, 0.0, NumericalHamiltonian::godunov_quadratic(2),
                                          Coupling::power(3.0),
                                          Eigen::VectorXd::Zero(g.node_count()));
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(g.node_count());
    CHECK(lambda_eliminate(p, ones, Eigen::VectorXd::Zero(g.node_count())) ==
          doctest::Approx(-1.0).epsilon(1e-14));
    CHECK_THROWS_AS(lambda_eliminate(p, Eigen::VectorXd::Zero(g.node_count()),
                                     Eigen::VectorXd::Zero(g.node_count())),
                    std::domain_error);
}

TEST_CASE("stationary residual hand case and identities") {
    TorusGrid g(2, 6);
    MfgProblem p = MfgProblem::stationary(g, 0.0, NumericalHamiltonian::godunov_quadratic(2),
                                          Coupling::power(1.0),
                                          Eigen::VectorXd::Zero(g.node_count()));
    std::mt19937_64 rng(21);
    Eigen::VectorXd v = random_field(g, rng);
    v.array() -= v.mean();  // zero mean in the plain sense = zero <.,1>_h mean
    p.spatial_cost = v;
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(g.node_count());
    StationaryResidual r = stationary_residual(p, ones, Eigen::VectorXd::Zero(g.node_count()));
    CHECK(r.fp.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(r.lambda == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK((r.hjb - v).lpNorm<Eigen::Infinity>() < 1e-12);

    // identities at random states
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd m = random_field(g, rng, 0.2, 2.0);
        Eigen::VectorXd u = random_field(g, rng);
        StationaryResidual rr = stationary_residual(p, m, u);
        CHECK(std::abs(inner_h(g, m, rr.hjb)) < 1e-12);
        CHECK(std::abs(inner_h(g, rr.fp, ones)) < 1e-12);
    }
}

TEST_CASE("stationary residual equals the naive oracle") {
    std::mt19937_64 rng(22);
    // one componentwise preset and the nonlocal preset
    for (auto* factory : {+[] { return small_1d_preset(12); }, +[] { return small_nonlocal_preset(6); }}) {
        MfgProblem p = factory();
        for (int trial = 0; trial < 25; ++trial) {
            Eigen::VectorXd m = random_field(p.grid, rng, 0.2, 2.0);
            Eigen::VectorXd u = random_field(p.grid, rng);
            StationaryResidual r = stationary_residual(p, m, u);
            Eigen::VectorXd hjb, fp;
            double lambda;
            oracle::stationary_residual(p, m, u, hjb, fp, lambda);
            CHECK((r.hjb - hjb).lpNorm<Eigen::Infinity>() < 1e-12);
            CHECK((r.fp - fp).lpNorm<Eigen::Infinity>() < 1e-12);
            CHECK(r.lambda == doctest::Approx(lambda).epsilon(1e-12));
        }
    }
}

TEST_CASE("stationary jacobian matches finite differences") {
    std::mt19937_64 rng(23);
    for (auto* factory : {+[] { return small_1d_preset(8); }, +[] { return small_nonlocal_preset(4); }}) {
        MfgProblem p = factory();
        const int n = p.grid.node_count();
        Eigen::VectorXd m = random_field(p.grid, rng, 0.4, 1.6);
        Eigen::VectorXd u = 0.3 * random_field(p.grid, rng);
        Eigen::MatrixXd J = stationary_jacobian(p.with_smoothed_hamiltonian(1e-9), m, u);
        auto eval = [&](const Eigen::VectorXd& mm, const Eigen::VectorXd& uu) {
            StationaryResidual r = stationary_residual(p, mm, uu);
            Eigen::VectorXd out(2 * n);
            out << r.hjb, r.fp;
            return out;
        };
        Eigen::VectorXd dz = 1e-6 * random_field(p.grid, rng).replicate(2, 1);
        Eigen::VectorXd fd = (eval(m + dz.head(n), u + dz.tail(n)) -
                              eval(m - dz.head(n), u - dz.tail(n))) /
                             2.0;
        CHECK((J * dz - fd).lpNorm<Eigen::Infinity>() <= 1e-7 * (1.0 + fd.lpNorm<Eigen::Infinity>()));
    }
}

TEST_CASE("hrf stationary: immediate return at a root and flow invariants") {
    MfgProblem p = small_1d_preset(16);
    FlowConfig cfg;
    StationaryTrace trace;
    StationaryState sol = hrf_stationary_solve(p, default_stationary_init(p), cfg, &trace);
    CHECK(trace.converged);
    CHECK(stationary_residual(p, sol.M, sol.U).inf_norm() < cfg.tol);
    // every accepted step keeps unit mass and positivity
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(p.grid.node_count());
    CHECK(std::abs(inner_h(p.grid, sol.M, ones) - 1.0) < 1e-12);
    CHECK(std::abs(inner_h(p.grid, sol.U, ones)) < 1e-10);
    for (const auto& row : trace.rows) CHECK(row.min_density > 0.0);

    StationaryTrace trace2;
    StationaryState again = hrf_stationary_solve(p, sol, cfg, &trace2);
    CHECK(trace2.converged);
    CHECK(trace2.rows.size() == 1);  // zero steps
    CHECK((again.M - sol.M).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("newton stationary solves and agrees with hrf") {
    MfgProblem p = small_1d_preset(16);
    NewtonConfig ncfg;
    StationaryTrace ntrace;
    StationaryState newton = newton_stationary_solve(p, default_stationary_init(p), ncfg, &ntrace);
    CHECK(ntrace.converged);
    FlowConfig fcfg;
    StationaryState flow = hrf_stationary_solve(p, default_stationary_init(p), fcfg);
    CHECK(std::abs(newton.lambda - flow.lambda) < 1e-6);
    CHECK((newton.M - flow.M).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((newton.U - flow.U).lpNorm<Eigen::Infinity>() < 1e-6);

    StationaryTrace t2;
    newton_stationary_solve(p, newton, ncfg, &t2);
    CHECK(t2.converged);
    CHECK(t2.rows.size() == 1);  // zero iterations from the exact root
}

TEST_CASE("cross-solver agreement on the nonlocal preset") {
    MfgProblem p = small_nonlocal_preset(10);
    FlowConfig fcfg;
    NewtonConfig ncfg;
    PolicyConfig pcfg;
    StationaryTrace tf, tn, tp;
    StationaryState a = hrf_stationary_solve(p, default_stationary_init(p), fcfg, &tf);
    StationaryState b = newton_stationary_solve(p, default_stationary_init(p), ncfg, &tn);
    StationaryState c = policy_iteration_solve(p, default_stationary_init(p), pcfg, &tp);
    CHECK(tf.converged);
    CHECK(tn.converged);
    CHECK(tp.converged);
    CHECK(std::abs(a.lambda - b.lambda) < 1e-6);
    CHECK(std::abs(a.lambda - c.lambda) < 1e-6);
    CHECK((a.M - b.M).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((a.M - c.M).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((a.U - b.U).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((a.U - c.U).lpNorm<Eigen::Infinity>() < 1e-6);
    // policy iteration keeps unit mass at every iterate
    for (const auto& row : tp.rows) CHECK(row.min_density > 0.0);
}

TEST_CASE("policy iteration from the exact root is a fixed point") {
    MfgProblem p = small_nonlocal_preset(8);
    NewtonConfig ncfg;
    StationaryState root = newton_stationary_solve(p, default_stationary_init(p), ncfg);
    PolicyConfig pcfg;
    StationaryTrace trace;
    StationaryState again = policy_iteration_solve(p, root, pcfg, &trace);
    CHECK(trace.converged);
    CHECK(trace.rows.size() <= 2);  // at most one outer iteration
    CHECK(std::abs(again.lambda - root.lambda) < 1e-8);
}

TEST_CASE("newton quadratic local convergence on the nonlocal preset") {
    MfgProblem p = small_nonlocal_preset(10);
    NewtonConfig cfg;
    cfg.tol = 1e-12;
    StationaryTrace trace;
    newton_stationary_solve(p, default_stationary_init(p), cfg, &trace);
    // superlinear tail: residual ratios shrink over the last accepted steps
    const auto& rows = trace.rows;
    REQUIRE(rows.size() >= 4);
    const double r1 = rows[rows.size() - 2].residual_norm / rows[rows.size() - 3].residual_norm;
    const double r2 = rows[rows.size() - 1].residual_norm / rows[rows.size() - 2].residual_norm;
    CHECK(r2 < r1);
    CHECK(r2 < 0.1);
}

TEST_CASE("trace csv serialization") {
    MfgProblem p = small_1d_preset(8);
    StationaryTrace trace;
    FlowConfig cfg;
    hrf_stationary_solve(p, default_stationary_init(p), cfg, &trace);
    const std::string path = "stationary_trace_test.csv";
    trace.to_csv(path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "step,residual_norm,lambda,min_density,step_size");
    std::remove(path.c_str());
}
