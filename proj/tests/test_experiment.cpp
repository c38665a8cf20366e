#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "experiment.hpp"
#include "oracles.hpp"

using namespace mfg;

TEST_CASE("l2 error") {
    Eigen::VectorXd u = Eigen::VectorXd::Constant(100, 3.0);
    Eigen::VectorXd v = Eigen::VectorXd::Constant(100, 1.0);
    CHECK(l2_error(u, u, {0.1, 0.1}) == 0.0);
    CHECK(l2_error(u, v, {0.1, 0.1}) == doctest::Approx(2.0).epsilon(1e-14));
    std::mt19937_64 rng(61);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd a(64), b(64);
    for (int i = 0; i < 64; ++i) {
        a[i] = gauss(rng);
        b[i] = gauss(rng);
    }
    CHECK(l2_error(a, b, {0.125}) ==
          doctest::Approx(oracle::l2_error(a, b, {0.125})).epsilon(1e-14));
    CHECK_THROWS_AS(l2_error(a, Eigen::VectorXd::Zero(3), {0.1}), std::invalid_argument);
}

TEST_CASE("catalog fidelity against the published constants") {
    auto catalog = preset_catalog();
    REQUIRE(catalog.size() == 6);

    struct Expected {
        const char* id;
        int dim, n, nt, obs_m, obs_v;
        double alpha, beta, gamma;
        const char* placement;
    };
    const Expected table[] = {
        {"stationary-1d-effective-hamiltonian", 1, 100, 0, 8, 10, 0.002, 2, 2, "grid"},
        {"stationary-2d-congestion", 2, 40, 0, 128, 320, 0.04, 2, 2, "random"},
        {"stationary-2d-nonpotential", 2, 30, 0, 72, 180, 0.04, 1, 1, "random"},
        {"stationary-2d-nonlocal", 2, 30, 0, 72, 180, 0.04, 2, 2, "random"},
        {"timedep-1d", 1, 40, 40, 96, 10, 0.04, 2, 2, "grid"},
        {"timedep-2d", 2, 25, 25, 1250, 125, 0.04, 2, 2, "grid"},
    };
    for (const auto& e : table) {
        ExperimentConfig c = preset_config(e.id);
        CHECK(c.dim == e.dim);
        CHECK(c.n_per_axis == e.n);
        CHECK(c.time_slices == e.nt);
        CHECK(c.obs_m == e.obs_m);
        CHECK(c.obs_v == e.obs_v);
        CHECK(c.alpha == e.alpha);
        CHECK(c.beta == e.beta);
        CHECK(c.gamma == e.gamma);
        CHECK(c.placement == e.placement);
        CHECK(c.noise_sigma == 1e-3);
    }
    CHECK_THROWS_AS(preset_config("no-such-preset"), std::invalid_argument);

    // spot checks of the sampled data
    {
        TorusGrid g(1, 100);
        Eigen::VectorXd v = preset_true_cost("stationary-1d-effective-hamiltonian", g);
        CHECK(v[25] == doctest::Approx(0.5 * (std::sin(M_PI * 0.25) + std::sin(4 * M_PI * 0.25))));
        ExperimentConfig c = preset_config("stationary-1d-effective-hamiltonian");
        MfgProblem p = make_problem(c, v);
        CHECK(p.viscosity == 0.0);
        CHECK(p.coupling.kind() == Coupling::Kind::LogScaled);
    }
    {
        ExperimentConfig c = preset_config("timedep-2d");
        TorusGrid g(2, 25);
        MfgProblem p = make_problem(c, preset_true_cost(c.preset, g));
        CHECK(p.viscosity == 0.05);
        CHECK(p.dt() == doctest::Approx(1.0 / 25.0));
        CHECK(inner_h(g, p.initial_density, Eigen::VectorXd::Ones(625)) ==
              doctest::Approx(1.0).epsilon(1e-14));
        CHECK((p.terminal_value + p.initial_density).lpNorm<Eigen::Infinity>() < 1e-15);
    }
}

TEST_CASE("synthesize determinism and noiseless limit") {
    ExperimentConfig c = preset_config("stationary-1d-effective-hamiltonian");
    c.n_per_axis = 20;
    c.obs_m = 8;
    c.obs_v = 10;
    c.seed = 99;
    c.inner_solver = "newton";
    c.inner_max_iter = 200;

    SynthesizedData a = synthesize_data(c);
    SynthesizedData b = synthesize_data(c);
    CHECK((a.m_obs.values - b.m_obs.values).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.v_obs.values - b.v_obs.values).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.m_obs.targets - b.m_obs.targets).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(a.m_obs.count() == 8);
    CHECK(a.v_obs.count() == 10);

    c.seed = 100;
    SynthesizedData d = synthesize_data(c);
    CHECK((a.m_obs.values - d.m_obs.values).lpNorm<Eigen::Infinity>() > 0.0);

    // noiseless observations reproduce the functionals exactly
    c.noise_sigma = 0.0;
    SynthesizedData e = synthesize_data(c);
    KernelSpec k;
    k.lengthscale = c.lengthscale;
    GramModel gram = GramModel::on_grid(k, e.problem.grid, c.jitter);
    Eigen::MatrixXd rows = build_observation_rows(e.m_obs, gram);
    CHECK((rows * e.stationary_ref.M - e.m_obs.values).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("random placement draws observation locations in the unit square") {
    ExperimentConfig c = preset_config("stationary-2d-nonlocal");
    c.n_per_axis = 8;
    c.obs_m = 15;
    c.obs_v = 25;
    c.seed = 3;
    c.inner_solver = "newton";
    c.inner_max_iter = 200;
    SynthesizedData d = synthesize_data(c);
    CHECK(d.m_obs.targets.minCoeff() >= 0.0);
    CHECK(d.m_obs.targets.maxCoeff() < 1.0);
    CHECK(d.m_obs.targets.rows() == 15);
    CHECK(d.v_obs.targets.rows() == 25);
}

TEST_CASE("field csv round trip") {
    TorusGrid g(2, 5);
    Eigen::MatrixXd rows(3, 25);
    std::mt19937_64 rng(62);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int r = 0; r < 3; ++r)
        for (int cidx = 0; cidx < 25; ++cidx) rows(r, cidx) = gauss(rng);
    const std::string path = "field_roundtrip_test.csv";
    write_field_csv(path, g, 2, rows);
    TorusGrid g2;
    int nt = 0;
    Eigen::MatrixXd back = read_field_csv(path, g2, nt);
    CHECK(g2 == g);
    CHECK(nt == 2);
    CHECK((back - rows).lpNorm<Eigen::Infinity>() == 0.0);
    std::remove(path.c_str());
}

TEST_CASE("config file parse and round trip; unknown keys rejected") {
    ExperimentConfig c = preset_config("timedep-1d");
    c.n_per_axis = 12;
    c.seed = 1234;
    c.out_dir = "";
    const std::string path = "config_roundtrip_test.ini";
    write_config_file(c, path);
    ExperimentConfig back = parse_config_file(path);
    CHECK(back.canonical_text() == c.canonical_text());
    std::remove(path.c_str());

    const std::string bad = "config_bad_test.ini";
    {
        std::ofstream out(bad);
        out << "[grid]\nn_per_axis = 10\nbogus_key = 1\n";
    }
    CHECK_THROWS_WITH_AS(parse_config_file(bad), doctest::Contains("bogus_key"),
                         std::runtime_error);
    std::remove(bad.c_str());
}

TEST_CASE("run_experiment: determinism, zero-iteration degenerate run, bundle round trip") {
    ExperimentConfig c = preset_config("stationary-1d-effective-hamiltonian");
    c.n_per_axis = 16;
    c.obs_m = 6;
    c.obs_v = 8;
    c.seed = 21;
    c.inner_solver = "newton";
    c.inner_max_iter = 200;
    c.outer_method = "gn";
    c.outer_max_iter = 40;

    ResultBundle one = run_experiment(c);
    ResultBundle two = run_experiment(c);
    CHECK(one.content_hash() == two.content_hash());
    CHECK(one.converged);
    CHECK(one.err_m < 0.05);

    // errors recomputable from the stored fields
    CHECK(one.err_v == doctest::Approx(l2_error(one.recovered_v, one.reference_v,
                                                {one.config.n_per_axis > 0
                                                     ? 1.0 / one.config.n_per_axis
                                                     : 1.0}))
                           .epsilon(1e-14));

    // zero outer iterations leaves the initial guess
    ExperimentConfig c0 = c;
    c0.outer_max_iter = 0;
    ResultBundle z = run_experiment(c0);
    CHECK(z.recovered_v.lpNorm<Eigen::Infinity>() == 0.0);

    // write + read reproduces the error values exactly
    namespace fs = std::filesystem;
    const std::string dir = "bundle_roundtrip_test";
    write_bundle(one, dir);
    ResultBundle back = read_bundle(dir);
    CHECK(back.err_m == one.err_m);
    CHECK(back.err_u == one.err_u);
    CHECK(back.err_v == one.err_v);
    CHECK(back.err_lambda == one.err_lambda);
    CHECK(back.lambda_ref == one.lambda_ref);
    CHECK((back.recovered_v - one.recovered_v).lpNorm<Eigen::Infinity>() == 0.0);
    fs::remove_all(dir);
}

TEST_CASE("run_experiment on a small time-dependent preset") {
    ExperimentConfig c = preset_config("timedep-1d");
    c.n_per_axis = 8;
    c.time_slices = 5;
    c.obs_m = 10;
    c.obs_v = 4;
    c.seed = 13;
    c.inner_solver = "newton";
    c.inner_max_iter = 300;
    c.outer_method = "gn";
    c.outer_max_iter = 30;
    ResultBundle b = run_experiment(c);
    CHECK(b.converged);
    CHECK(b.reference_m.rows() == 6);  // NT + 1 slices
    CHECK(std::isfinite(b.err_m));
    CHECK(b.err_m < 0.5);
}

TEST_CASE("property suite passes") {
    std::string report;
    const int failures = run_property_suite(report);
    INFO(report);
    CHECK(failures == 0);
}
