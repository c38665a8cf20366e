#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "problem.hpp"

namespace mfg {

/// Everything needed to reproduce one experiment: grid sizes, observation
/// layout, weights, kernels, solver selection, and output location. Every key
/// of the config file maps onto one field here.
struct ExperimentConfig {
    std::string preset;

    int dim = 2;
    int n_per_axis = 0;
    int time_slices = 0;  // 0 = stationary
    double horizon = 1.0;

    int obs_m = 0;
    int obs_v = 0;
    std::string placement = "grid";  // "grid" | "random"
    double noise_sigma = 1e-3;

    double alpha = 0.0;
    double beta = 1.0;
    double gamma = 1.0;

    std::string kernel = "periodic_gaussian";  // "periodic_gaussian" | "torus_matern"
    double lengthscale = 0.2;
    double time_lengthscale = 0.2;  // relative to the horizon
    double matern_nu = 1.5;
    double jitter = 1e-8;

    std::string inner_solver = "hrf";  // "hrf" | "newton" | "policy"
    double inner_tol = 1e-9;
    int inner_max_iter = 50000;
    std::string outer_method = "gn";  // "gd" | "gn"
    double outer_tol = 1e-6;
    int outer_max_iter = 500;

    std::uint64_t seed = 0;
    std::string out_dir;

    void validate() const;
    /// Canonical key=value text (one key per line, fixed order).
    std::string canonical_text() const;
};

struct PresetInfo {
    std::string id;
    std::string description;
    ExperimentConfig config;
};

/// The six built-in experiment presets with their published constants.
std::vector<PresetInfo> preset_catalog();

ExperimentConfig preset_config(const std::string& id);

/// The true spatial cost V* of the preset sampled on a grid.
Eigen::VectorXd preset_true_cost(const std::string& preset, const TorusGrid& grid);

/// Assembles the discrete problem for the preset at the configured sizes,
/// with the given spatial cost (pass the true cost for forward runs).
MfgProblem make_problem(const ExperimentConfig& config, const Eigen::VectorXd& spatial_cost);

TorusGrid make_grid(const ExperimentConfig& config);

}  // namespace mfg
