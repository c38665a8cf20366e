#include "presets.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mfg {

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::VectorXd sample(const TorusGrid& grid, double (*fn)(double, double)) {
    Eigen::VectorXd v(grid.node_count());
    for (int i = 0; i < grid.node_count(); ++i)
        v[i] = fn(grid.coord(i, 1), grid.dim == 2 ? grid.coord(i, 2) : 0.0);
    return v;
}

double cost_1d_effective(double x, double) {
    return 0.5 * (std::sin(kPi * x) + std::sin(4.0 * kPi * x));
}
double cost_congestion(double x, double y) {
    return 2.0 * std::sin(2.0 * kPi * (x + 0.25)) * std::cos(2.0 * kPi * (y + 0.25));
}
double cost_nonpotential(double x, double y) {
    return -(std::sin(2.0 * kPi * x) + std::cos(4.0 * kPi * x) + std::sin(2.0 * kPi * y));
}
double cost_nonlocal(double x, double y) {
    return std::sin(2.0 * kPi * x) + std::cos(2.0 * kPi * x) + std::sin(4.0 * kPi * y);
}
double cost_timedep_1d(double x, double) {
    return std::sin(2.0 * kPi * x) + std::cos(4.0 * kPi * x);
}
double cost_timedep_2d(double x, double y) {
    return std::cos(2.0 * kPi * x) * std::cos(2.0 * kPi * y);
}

double gaussian_bump(double x, double y) {
    const double dx = x - 0.5, dy = y - 0.5;
    return std::exp(-8.0 * (dx * dx + dy * dy));
}

}  // namespace

void ExperimentConfig::validate() const {
    if (dim != 1 && dim != 2) throw std::invalid_argument("config: dim must be 1 or 2");
    if (n_per_axis <= 0) throw std::invalid_argument("config: n_per_axis must be positive");
    if (time_slices < 0) throw std::invalid_argument("config: time_slices must be >= 0");
    if (obs_m < 0 || obs_v < 0)
        throw std::invalid_argument("config: observation counts must be >= 0");
    if (placement != "grid" && placement != "random")
        throw std::invalid_argument("config: placement must be 'grid' or 'random'");
    if (placement == "grid") {
        TorusGrid g(dim, n_per_axis);
        const long available =
            time_slices > 0 ? static_cast<long>(g.node_count()) * (time_slices + 1)
                            : static_cast<long>(g.node_count());
        if (obs_m > available || obs_v > g.node_count())
            throw std::invalid_argument("config: grid-subset observation count exceeds nodes");
    }
    if (inner_solver != "hrf" && inner_solver != "newton" && inner_solver != "policy")
        throw std::invalid_argument("config: unknown inner solver '" + inner_solver + "'");
    if (outer_method != "gd" && outer_method != "gn")
        throw std::invalid_argument("config: outer method must be 'gd' or 'gn'");
    if (kernel != "periodic_gaussian" && kernel != "torus_matern")
        throw std::invalid_argument("config: unknown kernel '" + kernel + "'");
}

std::string ExperimentConfig::canonical_text() const {
    std::ostringstream s;
    s.precision(17);
    s << "preset=" << preset << "\ndim=" << dim << "\nn_per_axis=" << n_per_axis
      << "\ntime_slices=" << time_slices << "\nhorizon=" << horizon << "\nobs_m=" << obs_m
      << "\nobs_v=" << obs_v << "\nplacement=" << placement << "\nnoise_sigma=" << noise_sigma
      << "\nalpha=" << alpha << "\nbeta=" << beta << "\ngamma=" << gamma << "\nkernel=" << kernel
      << "\nlengthscale=" << lengthscale << "\ntime_lengthscale=" << time_lengthscale
      << "\nmatern_nu=" << matern_nu << "\njitter=" << jitter << "\ninner_solver=" << inner_solver
      << "\ninner_tol=" << inner_tol << "\ninner_max_iter=" << inner_max_iter
      << "\nouter_method=" << outer_method << "\nouter_tol=" << outer_tol
      << "\nouter_max_iter=" << outer_max_iter << "\nseed=" << seed << "\n";
    return s.str();
}

std::vector<PresetInfo> preset_catalog() {
    std::vector<PresetInfo> catalog;

    {
        ExperimentConfig c;
        c.preset = "stationary-1d-effective-hamiltonian";
        c.dim = 1;
        c.n_per_axis = 100;
        c.obs_m = 8;
        c.obs_v = 10;
        c.placement = "grid";
        c.alpha = 0.002;
        c.beta = 2.0;
        c.gamma = 2.0;
        catalog.push_back({c.preset,
                           "1D first-order stationary MFG with shifted quadratic Hamiltonian "
                           "(P=2) and entropic coupling ln(m)/100",
                           c});
    }
    {
        ExperimentConfig c;
        c.preset = "stationary-2d-congestion";
        c.dim = 2;
        c.n_per_axis = 40;
        c.obs_m = 128;
        c.obs_v = 320;
        c.placement = "random";
        c.alpha = 0.04;
        c.beta = 2.0;
        c.gamma = 2.0;
        catalog.push_back({c.preset,
                           "2D first-order stationary MFG with congestion Hamiltonian "
                           "|Q+p|^2/(2 m^1.5), Q=(1,3), cubic coupling",
                           c});
    }
    {
        ExperimentConfig c;
        c.preset = "stationary-2d-nonpotential";
        c.dim = 2;
        c.n_per_axis = 30;
        c.obs_m = 72;
        c.obs_v = 180;
        c.placement = "random";
        c.alpha = 0.04;
        c.beta = 1.0;
        c.gamma = 1.0;
        catalog.push_back({c.preset,
                           "2D second-order stationary MFG (nu=0.1) with non-potential coupling "
                           "m^2 + b(x,y).grad m",
                           c});
    }
    {
        ExperimentConfig c;
        c.preset = "stationary-2d-nonlocal";
        c.dim = 2;
        c.n_per_axis = 30;
        c.obs_m = 72;
        c.obs_v = 180;
        c.placement = "random";
        c.alpha = 0.04;
        c.beta = 2.0;
        c.gamma = 2.0;
        catalog.push_back({c.preset,
                           "2D second-order stationary MFG (nu=0.2) with nonlocal coupling "
                           "50 (I-Lap)^-2 m; the cross-solver comparison preset",
                           c});
    }
    {
        ExperimentConfig c;
        c.preset = "timedep-1d";
        c.dim = 1;
        c.n_per_axis = 40;
        c.time_slices = 40;
        c.obs_m = 96;
        c.obs_v = 10;
        c.placement = "grid";
        c.alpha = 0.04;
        c.beta = 2.0;
        c.gamma = 2.0;
        c.inner_tol = 1e-8;
        catalog.push_back({c.preset,
                           "1D time-dependent MFG (nu=0.1, T=1) with coupling (I-Lap)^-2 m, "
                           "uniform initial density",
                           c});
    }
    {
        ExperimentConfig c;
        c.preset = "timedep-2d";
        c.dim = 2;
        c.n_per_axis = 25;
        c.time_slices = 25;
        c.obs_m = 1250;
        c.obs_v = 125;
        c.placement = "grid";
        c.alpha = 0.04;
        c.beta = 2.0;
        c.gamma = 2.0;
        c.inner_tol = 1e-8;
        catalog.push_back({c.preset,
                           "2D time-dependent MFG (nu=0.05, T=1) with cubic coupling, Gaussian "
                           "initial density, u_T = -m_0",
                           c});
    }
    return catalog;
}

ExperimentConfig preset_config(const std::string& id) {
    for (const auto& p : preset_catalog())
        if (p.id == id) return p.config;
    throw std::invalid_argument("unknown preset '" + id + "'");
}

Eigen::VectorXd preset_true_cost(const std::string& preset, const TorusGrid& grid) {
    if (preset == "stationary-1d-effective-hamiltonian") return sample(grid, cost_1d_effective);
    if (preset == "stationary-2d-congestion") return sample(grid, cost_congestion);
    if (preset == "stationary-2d-nonpotential") return sample(grid, cost_nonpotential);
    if (preset == "stationary-2d-nonlocal") return sample(grid, cost_nonlocal);
    if (preset == "timedep-1d") return sample(grid, cost_timedep_1d);
    if (preset == "timedep-2d") return sample(grid, cost_timedep_2d);
    throw std::invalid_argument("unknown preset '" + preset + "'");
}

TorusGrid make_grid(const ExperimentConfig& config) {
    return TorusGrid(config.dim, config.n_per_axis);
}

MfgProblem make_problem(const ExperimentConfig& config, const Eigen::VectorXd& spatial_cost) {
    config.validate();
    TorusGrid grid = make_grid(config);
    const std::string& id = config.preset;

    if (id == "stationary-1d-effective-hamiltonian") {
        return MfgProblem::stationary(grid, 0.0,
                                      NumericalHamiltonian::shifted_quadratic(1, {2.0, 0.0}),
                                      Coupling::log_scaled(100.0), spatial_cost);
    }
    if (id == "stationary-2d-congestion") {
        return MfgProblem::stationary(
            grid, 0.0, NumericalHamiltonian::congestion_power(2, 1.5, 2.0, {1.0, 3.0}),
            Coupling::power(3.0), spatial_cost);
    }
    if (id == "stationary-2d-nonpotential") {
        auto bx = [](double, double y) { return -std::sin(2.0 * kPi * y); };
        auto by = [](double x, double) { return std::sin(2.0 * kPi * x); };
        return MfgProblem::stationary(grid, 0.1, NumericalHamiltonian::godunov_quadratic(2),
                                      Coupling::local_drift(bx, by), spatial_cost);
    }
    if (id == "stationary-2d-nonlocal") {
        return MfgProblem::stationary(grid, 0.2, NumericalHamiltonian::godunov_quadratic(2),
                                      Coupling::nonlocal_smooth(50.0), spatial_cost);
    }
    if (id == "timedep-1d") {
        Eigen::VectorXd m0 = Eigen::VectorXd::Ones(grid.node_count());
        Eigen::VectorXd uT = Eigen::VectorXd::Zero(grid.node_count());
        return MfgProblem::time_dependent_problem(
            grid, 0.1, NumericalHamiltonian::godunov_quadratic(1), Coupling::nonlocal_smooth(1.0),
            spatial_cost, config.horizon, config.time_slices, m0, uT);
    }
    if (id == "timedep-2d") {
        Eigen::VectorXd m0 = sample(grid, gaussian_bump);
        m0 /= inner_h(grid, m0, Eigen::VectorXd::Ones(grid.node_count()));
        Eigen::VectorXd uT = -m0;
        return MfgProblem::time_dependent_problem(
            grid, 0.05, NumericalHamiltonian::godunov_quadratic(2), Coupling::power(3.0),
            spatial_cost, config.horizon, config.time_slices, m0, uT);
    }
    throw std::invalid_argument("unknown preset '" + id + "'");
}

}  // namespace mfg
