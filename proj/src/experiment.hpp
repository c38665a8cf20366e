#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "inverse.hpp"
#include "kernels.hpp"
#include "presets.hpp"

namespace mfg {

/// Discrete L2 error sqrt(prod(spacings) * sum |u_i - v_i|^2).
double l2_error(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                const std::vector<double>& spacings);

/// Reference forward solution plus the noisy observation sets drawn from it.
/// Deterministic given (config, seed).
struct SynthesizedData {
    MfgProblem problem;  // carries the true spatial cost
    Eigen::VectorXd true_cost;
    bool timedep = false;
    StationaryState stationary_ref;
    SpaceTimeState timedep_ref;
    ObservationSet m_obs;
    ObservationSet v_obs;
};

SynthesizedData synthesize_data(const ExperimentConfig& config);

/// Everything an experiment produces. Errors are recomputable from the stored
/// fields via l2_error (see the round-trip test).
struct ResultBundle {
    ExperimentConfig config;
    std::uint64_t config_hash = 0;
    std::string version;

    // Stationary fields are single rows; time-dependent fields hold the full
    // slice stack (M_0..M_NT rows, U_0..U_NT rows).
    Eigen::MatrixXd reference_m, reference_u;
    Eigen::VectorXd reference_v;
    Eigen::MatrixXd recovered_m, recovered_u;
    Eigen::VectorXd recovered_v;
    double lambda_ref = 0.0;
    double lambda_rec = 0.0;

    double err_m = 0.0, err_u = 0.0, err_v = 0.0, err_lambda = 0.0;
    int outer_iterations = 0;
    bool converged = false;
    OuterTrace outer_trace;

    std::uint64_t content_hash() const;
};

/// synthesize -> invert -> errors; writes files when config.out_dir is set.
ResultBundle run_experiment(const ExperimentConfig& config);

/// Forward solve only (reference solution at the true cost); writes fields
/// and the solver trace when out_dir is set.
ResultBundle run_forward(const ExperimentConfig& config);

// --- file formats -----------------------------------------------------------

/// Field CSV: one metadata header line "dim,n_per_axis,time_slices" followed
/// by one row per time level (a single row for spatial fields).
void write_field_csv(const std::string& path, const TorusGrid& grid, int time_slices,
                     const Eigen::MatrixXd& rows);
Eigen::MatrixXd read_field_csv(const std::string& path, TorusGrid& grid, int& time_slices);

void write_bundle(const ResultBundle& bundle, const std::string& dir);
ResultBundle read_bundle(const std::string& dir);

/// Flat sectioned key=value config file; unknown keys are errors.
ExperimentConfig parse_config_file(const std::string& path);
void write_config_file(const ExperimentConfig& config, const std::string& path);

/// FNV-1a over a byte range, used for provenance hashes.
std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed = 1469598103934665603ull);

/// Runs the property suite (the `check` subcommand): discrete identities,
/// monotonicity, feasibility and oracle checks on small problems. Returns the
/// number of failed checks and appends one line per check to `report`.
int run_property_suite(std::string& report);

std::string library_version();

}  // namespace mfg
