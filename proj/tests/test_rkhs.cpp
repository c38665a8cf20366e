#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "kernels.hpp"

using namespace mfg;

TEST_CASE("kernel symmetry") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (auto kind : {KernelSpec::Kind::PeriodicGaussian, KernelSpec::Kind::TorusMatern,
                      KernelSpec::Kind::Gaussian}) {
        KernelSpec k;
        k.kind = kind;
        k.lengthscale = 0.23;
        for (int trial = 0; trial < 100; ++trial) {
            double a[2] = {unif(rng), unif(rng)};
            double b[2] = {unif(rng), unif(rng)};
            CHECK(std::abs(k.eval(a, b, 2) - k.eval(b, a, 2)) < 1e-15);
        }
    }
}

TEST_CASE("periodic kernels use the wrapped distance") {
    KernelSpec k;
    k.lengthscale = 0.2;
    double a[1] = {0.05}, b[1] = {0.95};  // wrapped distance 0.1
    double c[1] = {0.15};
    CHECK(k.eval(a, b, 1) == doctest::Approx(k.eval(a, c, 1)).epsilon(1e-15));
}

TEST_CASE("recovery row at a node is the unit vector (jitter 0)") {
    KernelSpec k;
    k.lengthscale = 0.1;
    TorusGrid grid(1, 8);
    GramModel gram = GramModel::on_grid(k, grid, 0.0);
    for (int l = 0; l < 8; ++l) {
        double x = grid.coord(l, 1);
        Eigen::VectorXd row = gram.recovery_row(&x);
        Eigen::VectorXd unit = Eigen::VectorXd::Zero(8);
        unit[l] = 1.0;
        CHECK((row - unit).lpNorm<Eigen::Infinity>() < 1e-8);
    }
    // interpolation exactness at nodes
    std::mt19937_64 rng(42);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd z(8);
    for (int i = 0; i < 8; ++i) z[i] = gauss(rng);
    for (int l = 0; l < 8; ++l) {
        double x = grid.coord(l, 1);
        CHECK(std::abs(gram.reconstruct(z, &x) - z[l]) < 1e-8);
    }
}

TEST_CASE("constant samples reconstruct approximately constants") {
    KernelSpec k;
    k.lengthscale = 0.2;
    TorusGrid grid(1, 40);
    GramModel gram = GramModel::on_grid(k, grid, 1e-8);
    Eigen::VectorXd z = Eigen::VectorXd::Constant(40, 3.25);
    for (double x : {0.013, 0.4317, 0.77}) {
        CHECK(gram.reconstruct(z, &x) == doctest::Approx(3.25).epsilon(1e-3));
    }
}

TEST_CASE("two-path consistency of the recovery row") {
    KernelSpec k;
    k.lengthscale = 0.1;  // well conditioned so both algebraic routes agree tightly
    TorusGrid grid(1, 12);
    GramModel gram = GramModel::on_grid(k, grid, 1e-10);
    std::mt19937_64 rng(43);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd z(12);
    for (int i = 0; i < 12; ++i) z[i] = gauss(rng);
    double x = 0.37;
    // row . z must equal k(x,X) . solve(K, z)
    Eigen::VectorXd kx(12);
    for (int i = 0; i < 12; ++i) {
        double xi = grid.coord(i, 1);
        kx[i] = k.eval(&x, &xi, 1);
    }
    const double via_row = gram.recovery_row(&x).dot(z);
    const double via_solve = kx.dot(gram.inv_apply(z));
    CHECK(via_row == doctest::Approx(via_solve).epsilon(1e-12));
}

TEST_CASE("rkhs norm") {
    KernelSpec k;
    k.lengthscale = 0.1;  // comfortably positive definite at jitter 0 on 10 nodes
    TorusGrid grid(1, 10);
    GramModel gram = GramModel::on_grid(k, grid, 0.0);
    CHECK(gram.norm_sq(Eigen::VectorXd::Zero(10)) == 0.0);

    // V = K e1 gives norm^2 = K(x1, x1)
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(10);
    e1[0] = 1.0;
    Eigen::VectorXd v = gram.gram() * e1;
    CHECK(gram.norm_sq(v) == doctest::Approx(gram.gram()(0, 0)).epsilon(1e-8));

    // dense-inverse oracle and quadratic scaling
    std::mt19937_64 rng(44);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd w(10);
    for (int i = 0; i < 10; ++i) w[i] = gauss(rng);
    Eigen::MatrixXd Kinv = gram.gram().inverse();
    CHECK(gram.norm_sq(w) == doctest::Approx(w.dot(Kinv * w)).epsilon(1e-10));
    CHECK(gram.norm_sq(3.0 * w) == doctest::Approx(9.0 * gram.norm_sq(w)).epsilon(1e-12));
    CHECK(gram.norm_sq(w) >= 0.0);

    // J = L^{-1} factorization is consistent with the norm
    Eigen::VectorXd jw = gram.j_apply(w);
    CHECK(jw.squaredNorm() == doctest::Approx(gram.norm_sq(w)).epsilon(1e-12));
    // and J^T J w = K^{-1} w
    CHECK((gram.j_apply_transpose(gram.j_apply(w)) - gram.inv_apply(w)).lpNorm<Eigen::Infinity>() <
          1e-9);
}

TEST_CASE("matern factorization and interpolation") {
    KernelSpec k;
    k.kind = KernelSpec::Kind::TorusMatern;
    k.lengthscale = 0.25;
    k.matern_nu = 2.5;
    TorusGrid grid(2, 6);
    GramModel gram = GramModel::on_grid(k, grid, 1e-10);
    std::mt19937_64 rng(45);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd z(grid.node_count());
    for (int i = 0; i < z.size(); ++i) z[i] = gauss(rng);
    double target[2] = {grid.coord(7, 1), grid.coord(7, 2)};
    CHECK(gram.reconstruct(z, target) == doctest::Approx(z[7]).epsilon(1e-6));
}

TEST_CASE("observation rows: node targets give a selection matrix") {
    KernelSpec k;
    k.lengthscale = 0.1;
    TorusGrid grid(1, 8);
    GramModel gram = GramModel::on_grid(k, grid, 0.0);
    ObservationSet obs;
    obs.targets.resize(3, 1);
    obs.targets << grid.coord(1, 1), grid.coord(4, 1), grid.coord(6, 1);
    obs.values = Eigen::VectorXd::Zero(3);
    Eigen::MatrixXd rows = build_observation_rows(obs, gram);
    for (int r = 0; r < 3; ++r) {
        Eigen::VectorXd unit = Eigen::VectorXd::Zero(8);
        unit[r == 0 ? 1 : (r == 1 ? 4 : 6)] = 1.0;
        CHECK((rows.row(r).transpose() - unit).lpNorm<Eigen::Infinity>() < 1e-8);
    }
}

TEST_CASE("single off-grid observation approximates a smooth function") {
    KernelSpec k;
    k.lengthscale = 0.2;
    TorusGrid grid(1, 40);
    GramModel gram = GramModel::on_grid(k, grid, 1e-8);
    Eigen::VectorXd z(40);
    for (int i = 0; i < 40; ++i) z[i] = std::sin(2.0 * M_PI * grid.coord(i, 1));
    ObservationSet obs;
    obs.targets.resize(1, 1);
    obs.targets(0, 0) = 0.333;
    obs.values = Eigen::VectorXd::Zero(1);
    Eigen::MatrixXd rows = build_observation_rows(obs, gram);
    CHECK((rows * z)(0) == doctest::Approx(std::sin(2.0 * M_PI * 0.333)).epsilon(1e-2));
}

TEST_CASE("spacetime observation affine fold consistency") {
    TorusGrid grid(1, 6);
    const int nt = 3;
    KernelSpec ks;
    ks.lengthscale = 0.25;
    KernelSpec kt;
    kt.kind = KernelSpec::Kind::Gaussian;
    kt.lengthscale = 0.3;
    GramModel spatial = GramModel::on_grid(ks, grid, 1e-10);
    GramModel temporal = GramModel::on_time_grid(kt, 1.0, nt, 1e-10);

    std::mt19937_64 rng(46);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    ObservationSet obs;
    obs.spacetime = true;
    obs.targets.resize(5, 2);
    for (int i = 0; i < 5; ++i) {
        obs.targets(i, 0) = unif(rng);
        obs.targets(i, 1) = unif(rng);
    }
    obs.values = Eigen::VectorXd::Zero(5);

    Eigen::VectorXd m0(6);
    std::normal_distribution<double> gauss(1.0, 0.1);
    for (int i = 0; i < 6; ++i) m0[i] = gauss(rng);
    auto W = build_spacetime_observation(obs, spatial, temporal, m0, nt, 1.0);

    // full-stack evaluation equals interior map + offset
    Eigen::MatrixXd stack(nt + 1, 6);
    stack.row(0) = m0.transpose();
    Eigen::VectorXd z = Eigen::VectorXd::Zero(2 * nt * 6);
    for (int k = 1; k <= nt; ++k) {
        for (int i = 0; i < 6; ++i) {
            const double v = gauss(rng);
            stack(k, i) = v;
            z[(k - 1) * 6 + i] = v;
        }
    }
    CHECK((W->apply_full_stack(stack) - W->apply(z)).lpNorm<Eigen::Infinity>() < 1e-14);

    // transpose consistency
    Eigen::VectorXd w(5), v(z.size());
    for (int i = 0; i < 5; ++i) w[i] = gauss(rng);
    for (int i = 0; i < v.size(); ++i) v[i] = gauss(rng);
    const double lhs = (W->apply(v) - W->offset()).dot(w);  // linear part only
    CHECK(lhs == doctest::Approx(v.dot(W->apply_transpose(w))).epsilon(1e-12));
}

TEST_CASE("observation csv round trip") {
    ObservationSet obs;
    obs.observes = ObservationSet::Observes::Cost;
    obs.targets.resize(3, 2);
    obs.targets << 0.1, 0.9, 0.25, 0.5, 0.625, 1.0 / 3.0;
    obs.values.resize(3);
    obs.values << 1.25, -0.5, 3.14159;
    obs.noise_sigma = 1e-3;
    const std::string path = "obs_roundtrip_test.csv";
    obs.to_csv(path);
    ObservationSet back = ObservationSet::from_csv(path, ObservationSet::Observes::Cost, false);
    CHECK((back.targets - obs.targets).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((back.values - obs.values).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(back.noise_sigma == obs.noise_sigma);
    std::remove(path.c_str());
}
