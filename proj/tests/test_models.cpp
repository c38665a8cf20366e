#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "problem.hpp"

using namespace mfg;

namespace {

Eigen::VectorXd random_field(const TorusGrid& g, std::mt19937_64& rng, double lo = -1.0,
                             double hi = 1.0) {
    std::uniform_real_distribution<double> unif(lo, hi);
    Eigen::VectorXd v(g.node_count());
    for (int i = 0; i < v.size(); ++i) v[i] = unif(rng);
    return v;
}

double fd_grad(const NumericalHamiltonian& h, const double* q, int l, double m) {
    double qp[4], qm[4];
    for (int i = 0; i < 4; ++i) qp[i] = qm[i] = q[i];
    const double step = 1e-6 * (1.0 + std::abs(q[l]));
    qp[l] += step;
    qm[l] -= step;
    return (h.value(0.3, 0.6, qp, m) - h.value(0.3, 0.6, qm, m)) / (2.0 * step);
}

}  // namespace

TEST_CASE("godunov quadratic values and gradient") {
    auto h = NumericalHamiltonian::godunov_quadratic(2);
    double q[4] = {0, 0, 0, 0};
    double grad[4];
    CHECK(h.value(0, 0, q, 1.0) == 0.0);
    h.grad_q(0, 0, q, 1.0, grad);
    for (int l = 0; l < 4; ++l) CHECK(grad[l] == 0.0);

    double q2[4] = {-1, -1, 2, 2};
    CHECK(h.value(0, 0, q2, 1.0) == doctest::Approx(2.5));

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(-3.0, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
        double qq[4];
        bool near_kink = false;
        for (int l = 0; l < 4; ++l) {
            qq[l] = unif(rng);
            if (std::abs(qq[l]) < 1e-4) near_kink = true;
        }
        if (near_kink) continue;
        h.grad_q(0.3, 0.6, qq, 1.0, grad);
        for (int l = 0; l < 4; ++l)
            CHECK(grad[l] == doctest::Approx(fd_grad(h, qq, l, 1.0)).epsilon(1e-6));
    }
}

TEST_CASE("consistency of the built-in Hamiltonians") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> unif(-4.0, 4.0);
    auto god = NumericalHamiltonian::godunov_quadratic(2);
    auto shifted = NumericalHamiltonian::shifted_quadratic(2, {2.0, -1.0});
    auto cong = NumericalHamiltonian::congestion_power(2, 1.5, 2.0, {1.0, 3.0});
    for (int trial = 0; trial < 100; ++trial) {
        const double xi = unif(rng), eta = unif(rng);
        const double m = 0.2 + std::abs(unif(rng));
        double q[4] = {xi, xi, eta, eta};
        CHECK(god.value(0.1, 0.9, q, m) ==
              doctest::Approx(0.5 * (xi * xi + eta * eta)).epsilon(1e-12));
        CHECK(shifted.value(0.1, 0.9, q, m) ==
              doctest::Approx(0.5 * ((2 + xi) * (2 + xi) + (-1 + eta) * (-1 + eta))).epsilon(1e-12));
        CHECK(cong.value(0.1, 0.9, q, m) ==
              doctest::Approx(((1 + xi) * (1 + xi) + (3 + eta) * (3 + eta)) /
                              (2.0 * std::pow(m, 1.5)))
                  .epsilon(1e-12));
    }
}

TEST_CASE("gradient sign monotonicity") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> unif(-5.0, 5.0);
    for (auto h : {NumericalHamiltonian::godunov_quadratic(2),
                   NumericalHamiltonian::shifted_quadratic(2, {1.0, 3.0}),
                   NumericalHamiltonian::congestion_power(2, 1.5, 2.0, {1.0, 3.0})}) {
        for (int trial = 0; trial < 1000; ++trial) {
            double q[4], grad[4];
            for (int l = 0; l < 4; ++l) q[l] = unif(rng);
            h.grad_q(0.2, 0.4, q, 0.7, grad);
            CHECK(grad[0] <= 0.0);
            CHECK(grad[2] <= 0.0);
            CHECK(grad[1] >= 0.0);
            CHECK(grad[3] >= 0.0);
        }
    }
}

TEST_CASE("smoothed variant stays close and has finite second derivatives") {
    auto h = NumericalHamiltonian::godunov_quadratic(1).smoothed(1e-3);
    double q[2] = {0.5, -0.25};
    double hd[2];
    CHECK(h.value(0, 0, q, 1.0) ==
          doctest::Approx(NumericalHamiltonian::godunov_quadratic(1).value(0, 0, q, 1.0))
              .epsilon(1e-4));
    h.hess_q_diag(0, 0, q, 1.0, hd);
    CHECK(std::isfinite(hd[0]));
    CHECK(std::isfinite(hd[1]));
}

TEST_CASE("congestion density derivatives") {
    auto h = NumericalHamiltonian::congestion_power(2, 1.5, 2.0, {1.0, 3.0});
    double q[4] = {0.4, -0.7, 1.2, 0.3};
    const double m = 0.8;
    const double step = 1e-6;
    const double fd = (h.value(0, 0, q, m + step) - h.value(0, 0, q, m - step)) / (2 * step);
    CHECK(h.dvalue_dm(0, 0, q, m) == doctest::Approx(fd).epsilon(1e-6));
    double ga[4], gb[4], dm[4];
    h.grad_q(0, 0, q, m + step, ga);
    h.grad_q(0, 0, q, m - step, gb);
    h.dgrad_q_dm(0, 0, q, m, dm);
    for (int l = 0; l < 4; ++l)
        CHECK(dm[l] == doctest::Approx((ga[l] - gb[l]) / (2 * step)).epsilon(1e-5));
}

TEST_CASE("custom Hamiltonian falls back to finite-difference gradients") {
    auto h = NumericalHamiltonian::custom(
        1, [](double, double, const double* q) { return std::cosh(q[0]) + 0.5 * q[1] * q[1]; });
    double q[2] = {0.3, -0.4};
    double grad[2];
    h.grad_q(0, 0, q, 0.0, grad);
    CHECK(grad[0] == doctest::Approx(std::sinh(0.3)).epsilon(1e-6));
    CHECK(grad[1] == doctest::Approx(-0.4).epsilon(1e-6));
    CHECK_FALSE(h.has_analytic_hessian());
}

TEST_CASE("transport operator") {
    std::mt19937_64 rng(14);
    TorusGrid g(2, 4);
    MfgProblem p = MfgProblem::stationary(g, 0.0, NumericalHamiltonian::godunov_quadratic(2),
                                          Coupling::power(1.0), Eigen::VectorXd::Zero(16));
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(16);
    Eigen::VectorXd u = random_field(g, rng);
    CHECK(transport_operator(p, u, zero).lpNorm<Eigen::Infinity>() == 0.0);
    Eigen::VectorXd constu = Eigen::VectorXd::Constant(16, 1.3);
    Eigen::VectorXd m = random_field(g, rng, 0.1, 2.0);
    CHECK(transport_operator(p, constu, m).lpNorm<Eigen::Infinity>() == 0.0);

    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd uu = random_field(g, rng), mm = random_field(g, rng);
        Eigen::VectorXd b = transport_operator(p, uu, mm);
        CHECK((b - oracle::transport(p, uu, mm)).lpNorm<Eigen::Infinity>() < 1e-12);
        CHECK(std::abs(inner_h(g, b, Eigen::VectorXd::Ones(16))) < 1e-12);
    }
}

TEST_CASE("discrete adjoint identity of the transport operator") {
    std::mt19937_64 rng(15);
    {
        TorusGrid g(2, 6);
        MfgProblem p = MfgProblem::stationary(g, 0.0, NumericalHamiltonian::godunov_quadratic(2),
                                              Coupling::power(1.0),
                                              Eigen::VectorXd::Zero(g.node_count()));
        Eigen::VectorXd u = random_field(g, rng), v = random_field(g, rng);
        CHECK(adjoint_identity_check(p, u, Eigen::VectorXd::Zero(g.node_count()), v) == 0.0);
        for (int trial = 0; trial < 50; ++trial) {
            Eigen::VectorXd uu = random_field(g, rng), mm = random_field(g, rng),
                            vv = random_field(g, rng);
            CHECK(adjoint_identity_check(p, uu, mm, vv) < 1e-12);
        }
    }
    {
        TorusGrid g(1, 8);
        MfgProblem p = MfgProblem::stationary(g, 0.0,
                                              NumericalHamiltonian::shifted_quadratic(1, {2.0, 0.0}),
                                              Coupling::power(1.0),
                                              Eigen::VectorXd::Zero(g.node_count()));
        for (int trial = 0; trial < 50; ++trial) {
            Eigen::VectorXd uu = random_field(g, rng), mm = random_field(g, rng),
                            vv = random_field(g, rng);
            CHECK(adjoint_identity_check(p, uu, mm, vv) < 1e-12);
        }
    }
}

TEST_CASE("couplings") {
    TorusGrid g(2, 6);
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(g.node_count());

    CHECK((Coupling::power(3.0).apply(g, ones) - ones).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(Coupling::log_scaled(100.0).apply(g, ones).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((Coupling::nonlocal_smooth(50.0).apply(g, ones) - 50.0 * ones).lpNorm<Eigen::Infinity>() <
          1e-9);

    Eigen::VectorXd bad = ones;
    bad[7] = -0.5;
    CHECK_THROWS_WITH_AS(Coupling::log_scaled(100.0).apply(g, bad),
                         doctest::Contains("node 7"), std::domain_error);

    // componentwise monotonicity
    std::mt19937_64 rng(16);
    for (auto c : {Coupling::power(3.0), Coupling::power(1.0), Coupling::log_scaled(100.0)}) {
        for (int trial = 0; trial < 100; ++trial) {
            Eigen::VectorXd a = random_field(g, rng, 0.05, 3.0);
            Eigen::VectorXd b = random_field(g, rng, 0.05, 3.0);
            if ((a - b).lpNorm<Eigen::Infinity>() == 0.0) continue;
            CHECK(inner_h(g, c.apply(g, a) - c.apply(g, b), a - b) > 0.0);
        }
    }

    // local drift against the oracle (preset drift field)
    auto bx = [](double, double y) { return -std::sin(2 * M_PI * y); };
    auto by = [](double x, double) { return std::sin(2 * M_PI * x); };
    Coupling drift = Coupling::local_drift(bx, by);
    MfgProblem p = MfgProblem::stationary(g, 0.1, NumericalHamiltonian::godunov_quadratic(2),
                                          drift, Eigen::VectorXd::Zero(g.node_count()));
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXd m = random_field(g, rng, 0.1, 2.0);
        CHECK((drift.apply(g, m) - oracle::coupling(p, m)).lpNorm<Eigen::Infinity>() < 1e-12);
    }
}

TEST_CASE("coupling jacobians match directional differences") {
    std::mt19937_64 rng(17);
    TorusGrid g(2, 5);
    auto bx = [](double, double y) { return -std::sin(2 * M_PI * y); };
    auto by = [](double x, double) { return std::sin(2 * M_PI * x); };
    for (auto c : {Coupling::power(3.0), Coupling::log_scaled(50.0), Coupling::local_drift(bx, by),
                   Coupling::nonlocal_smooth(7.0)}) {
        Eigen::VectorXd m = random_field(g, rng, 0.3, 2.0);
        Eigen::VectorXd v = random_field(g, rng);
        const double step = 1e-6;
        Eigen::VectorXd fd = (c.apply(g, m + step * v) - c.apply(g, (m - step * v).eval())) /
                             (2 * step);
        CHECK((c.jacobian_apply(g, m, v) - fd).lpNorm<Eigen::Infinity>() < 1e-6);
        // transpose consistency
        Eigen::VectorXd w = random_field(g, rng);
        CHECK(c.jacobian_apply(g, m, v).dot(w) ==
              doctest::Approx(v.dot(c.jacobian_apply_transpose(g, m, w))).epsilon(1e-10));
        // triplet assembly agrees with the action
        std::vector<Eigen::Triplet<double>> trips;
        c.jacobian_triplets(g, m, 0, 0, 1.0, trips);
        Eigen::SparseMatrix<double> J(g.node_count(), g.node_count());
        J.setFromTriplets(trips.begin(), trips.end());
        CHECK((J * v - c.jacobian_apply(g, m, v)).lpNorm<Eigen::Infinity>() < 1e-11);
    }
}
