#include "experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

namespace mfg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string library_version() { return "1.0.0"; }

double l2_error(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                const std::vector<double>& spacings) {
    if (u.size() != v.size()) throw std::invalid_argument("l2_error: shape mismatch");
    double w = 1.0;
    for (double s : spacings) w *= s;
    Eigen::VectorXd diff = u - v;
    Eigen::VectorXd sq = diff.cwiseProduct(diff);
    return std::sqrt(w * pairwise_sum(sq));
}

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

std::uint64_t fnv_vec(const Eigen::VectorXd& v, std::uint64_t h) {
    return fnv1a(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()), h);
}
std::uint64_t fnv_mat(const Eigen::MatrixXd& m, std::uint64_t h) {
    return fnv1a(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()), h);
}

struct Grams {
    GramModel spatial;
    GramModel temporal;  // only valid for time-dependent configs
};

KernelSpec spatial_kernel(const ExperimentConfig& c) {
    KernelSpec k;
    k.kind = c.kernel == "torus_matern" ? KernelSpec::Kind::TorusMatern
                                        : KernelSpec::Kind::PeriodicGaussian;
    k.lengthscale = c.lengthscale;
    k.matern_nu = c.matern_nu;
    return k;
}

Grams build_grams(const ExperimentConfig& c, const TorusGrid& grid) {
    Grams g;
    g.spatial = GramModel::on_grid(spatial_kernel(c), grid, c.jitter);
    if (c.time_slices > 0) {
        KernelSpec kt;
        kt.kind = KernelSpec::Kind::Gaussian;
        kt.lengthscale = c.time_lengthscale * c.horizon;
        g.temporal = GramModel::on_time_grid(kt, c.horizon, c.time_slices, c.jitter);
    }
    return g;
}

/// Full slice stacks including the frozen endpoints, (NT+1) x nx.
Eigen::MatrixXd full_density_stack(const MfgProblem& p, const SpaceTimeState& y) {
    Eigen::MatrixXd rows(p.time_slices + 1, p.grid.node_count());
    rows.row(0) = p.initial_density.transpose();
    for (int k = 1; k <= p.time_slices; ++k) rows.row(k) = y.M[k - 1].transpose();
    return rows;
}
Eigen::MatrixXd full_value_stack(const MfgProblem& p, const SpaceTimeState& y) {
    Eigen::MatrixXd rows(p.time_slices + 1, p.grid.node_count());
    for (int k = 0; k < p.time_slices; ++k) rows.row(k) = y.U[k].transpose();
    rows.row(p.time_slices) = p.terminal_value.transpose();
    return rows;
}

/// Deterministic observation targets. Row-major flattening over the full
/// space-time stack for grid placement; seeded uniform draws for random
/// placement. The generator draws m-targets, then v-targets, then m-noise,
/// then v-noise, in that fixed order.
void make_targets(const ExperimentConfig& c, const TorusGrid& grid, std::mt19937_64& rng,
                  Eigen::MatrixXd& m_targets, Eigen::MatrixXd& v_targets) {
    const int n = grid.node_count();
    const bool td = c.time_slices > 0;
    const int mcols = grid.dim + (td ? 1 : 0);
    m_targets.resize(c.obs_m, mcols);
    v_targets.resize(c.obs_v, grid.dim);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    if (c.placement == "grid") {
        const long total = td ? static_cast<long>(n) * (c.time_slices + 1) : n;
        for (int j = 0; j < c.obs_m; ++j) {
            const long f = (static_cast<long>(j) * total) / c.obs_m;
            const int node = static_cast<int>(f % n);
            m_targets(j, 0) = grid.coord(node, 1);
            if (grid.dim == 2) m_targets(j, 1) = grid.coord(node, 2);
            if (td) m_targets(j, grid.dim) = c.horizon * static_cast<double>(f / n) / c.time_slices;
        }
        for (int j = 0; j < c.obs_v; ++j) {
            const int node = static_cast<int>((static_cast<long>(j) * n) / c.obs_v);
            v_targets(j, 0) = grid.coord(node, 1);
            if (grid.dim == 2) v_targets(j, 1) = grid.coord(node, 2);
        }
    } else {
        for (int j = 0; j < c.obs_m; ++j) {
            for (int d = 0; d < grid.dim; ++d) m_targets(j, d) = unif(rng);
            if (td) m_targets(j, grid.dim) = c.horizon * unif(rng);
        }
        for (int j = 0; j < c.obs_v; ++j)
            for (int d = 0; d < grid.dim; ++d) v_targets(j, d) = unif(rng);
    }
}

struct ForwardSolution {
    bool timedep = false;
    StationaryState st;
    SpaceTimeState td;
};

ForwardSolution solve_reference(const ExperimentConfig& c, const MfgProblem& problem) {
    ForwardSolution out;
    out.timedep = problem.time_dependent();
    auto model = out.timedep ? make_timedep_model(problem, c.inner_solver == "policy" ? "hrf"
                                                                                      : c.inner_solver,
                                                  c.inner_tol, c.inner_max_iter)
                             : make_stationary_model(problem, c.inner_solver, c.inner_tol,
                                                     c.inner_max_iter);
    InnerReport report;
    Eigen::VectorXd z = model->solve_forward(problem.spatial_cost, nullptr, &report);
    if (!report.converged)
        throw std::runtime_error("forward solve failed (residual " +
                                 std::to_string(report.residual_inf) + ")");
    if (out.timedep) {
        out.td = unflatten_state(problem, z);
    } else {
        const int n = problem.grid.node_count();
        out.st.M = z.head(n);
        out.st.U = z.tail(n);
        out.st.lambda = lambda_eliminate(problem, out.st.M, out.st.U);
    }
    return out;
}

SynthesizedData synthesize_impl(const ExperimentConfig& config, const Grams& grams) {
    config.validate();
    TorusGrid grid = make_grid(config);
    Eigen::VectorXd vstar = preset_true_cost(config.preset, grid);
    MfgProblem problem = make_problem(config, vstar);

    SynthesizedData data;
    data.problem = problem;
    data.true_cost = vstar;
    data.timedep = problem.time_dependent();

    ForwardSolution ref = solve_reference(config, problem);
    data.stationary_ref = ref.st;
    data.timedep_ref = ref.td;

    std::mt19937_64 rng(config.seed);
    Eigen::MatrixXd m_targets, v_targets;
    make_targets(config, grid, rng, m_targets, v_targets);

    ObservationSet m_obs;
    m_obs.observes = ObservationSet::Observes::Density;
    m_obs.spacetime = data.timedep;
    m_obs.targets = m_targets;
    m_obs.noise_sigma = config.noise_sigma;
    if (data.timedep) {
        auto W = build_spacetime_observation(m_obs, grams.spatial, grams.temporal,
                                             problem.initial_density, problem.time_slices,
                                             config.horizon);
        m_obs.values = W->apply(flatten(ref.td));
    } else {
        Eigen::MatrixXd rows = build_observation_rows(m_obs, grams.spatial);
        m_obs.values = rows * ref.st.M;
    }

    ObservationSet v_obs;
    v_obs.observes = ObservationSet::Observes::Cost;
    v_obs.spacetime = false;
    v_obs.targets = v_targets;
    v_obs.noise_sigma = config.noise_sigma;
    v_obs.values = build_observation_rows(v_obs, grams.spatial) * vstar;

    std::normal_distribution<double> gauss(0.0, 1.0);
    if (config.noise_sigma > 0.0) {
        for (int i = 0; i < m_obs.count(); ++i) m_obs.values[i] += config.noise_sigma * gauss(rng);
        for (int i = 0; i < v_obs.count(); ++i) v_obs.values[i] += config.noise_sigma * gauss(rng);
    }
    data.m_obs = std::move(m_obs);
    data.v_obs = std::move(v_obs);
    return data;
}

std::vector<double> space_spacings(const TorusGrid& grid) {
    return grid.dim == 1 ? std::vector<double>{grid.spacing}
                         : std::vector<double>{grid.spacing, grid.spacing};
}

}  // namespace

SynthesizedData synthesize_data(const ExperimentConfig& config) {
    Grams grams = build_grams(config, make_grid(config));
    return synthesize_impl(config, grams);
}

std::uint64_t ResultBundle::content_hash() const {
    std::string cfg = config.canonical_text();
    std::uint64_t h = fnv1a(cfg.data(), cfg.size());
    h = fnv_mat(reference_m, h);
    h = fnv_mat(reference_u, h);
    h = fnv_vec(reference_v, h);
    h = fnv_mat(recovered_m, h);
    h = fnv_mat(recovered_u, h);
    h = fnv_vec(recovered_v, h);
    const double scalars[6] = {lambda_ref, lambda_rec, err_m, err_u, err_v, err_lambda};
    h = fnv1a(scalars, sizeof(scalars), h);
    return h;
}

ResultBundle run_forward(const ExperimentConfig& config) {
    config.validate();
    TorusGrid grid = make_grid(config);
    Eigen::VectorXd vstar = preset_true_cost(config.preset, grid);
    MfgProblem problem = make_problem(config, vstar);

    ResultBundle bundle;
    bundle.config = config;
    bundle.version = library_version();
    const std::string cfg = config.canonical_text();
    bundle.config_hash = fnv1a(cfg.data(), cfg.size());
    bundle.reference_v = vstar;
    bundle.recovered_v = vstar;

    ForwardSolution ref = solve_reference(config, problem);
    if (ref.timedep) {
        bundle.reference_m = full_density_stack(problem, ref.td);
        bundle.reference_u = full_value_stack(problem, ref.td);
    } else {
        bundle.reference_m = ref.st.M.transpose();
        bundle.reference_u = ref.st.U.transpose();
        bundle.lambda_ref = ref.st.lambda;
        bundle.lambda_rec = ref.st.lambda;
    }
    bundle.recovered_m = bundle.reference_m;
    bundle.recovered_u = bundle.reference_u;
    bundle.converged = true;

    if (!config.out_dir.empty()) write_bundle(bundle, config.out_dir);
    return bundle;
}

ResultBundle run_experiment(const ExperimentConfig& config) {
    config.validate();
    TorusGrid grid = make_grid(config);
    Grams grams = build_grams(config, grid);
    SynthesizedData data = synthesize_impl(config, grams);
    const MfgProblem& problem = data.problem;

    InverseProblem ip;
    ip.alpha = config.alpha;
    ip.beta = config.beta;
    ip.gamma = config.gamma;
    ip.regularizer = std::make_shared<GramModel>(grams.spatial);
    ip.cost_rows = build_observation_rows(data.v_obs, grams.spatial);
    ip.cost_data = data.v_obs.values;
    ip.density_data = data.m_obs.values;
    if (data.timedep) {
        ip.model = make_timedep_model(problem,
                                      config.inner_solver == "policy" ? "hrf" : config.inner_solver,
                                      config.inner_tol, config.inner_max_iter);
        ip.density_obs = build_spacetime_observation(data.m_obs, grams.spatial, grams.temporal,
                                                     problem.initial_density, problem.time_slices,
                                                     config.horizon);
    } else {
        ip.model = make_stationary_model(problem, config.inner_solver, config.inner_tol,
                                         config.inner_max_iter);
        ip.density_obs = std::make_shared<SegmentObservation>(
            build_observation_rows(data.m_obs, grams.spatial), 2 * grid.node_count(), 0);
    }

    OuterConfig outer;
    outer.objective_change_tol = config.outer_tol;
    outer.max_iter = config.outer_max_iter;
    OuterResult result =
        run_outer(ip, config.outer_method, Eigen::VectorXd::Zero(grid.node_count()), outer);

    ResultBundle bundle;
    bundle.config = config;
    bundle.version = library_version();
    const std::string cfg = config.canonical_text();
    bundle.config_hash = fnv1a(cfg.data(), cfg.size());
    bundle.outer_trace = result.trace;
    bundle.outer_iterations = static_cast<int>(result.trace.rows.size()) - 1;
    bundle.converged = result.converged;
    bundle.reference_v = data.true_cost;
    bundle.recovered_v = result.theta;

    std::vector<double> sp = space_spacings(grid);
    if (data.timedep) {
        SpaceTimeState rec = unflatten_state(problem, result.z);
        bundle.reference_m = full_density_stack(problem, data.timedep_ref);
        bundle.reference_u = full_value_stack(problem, data.timedep_ref);
        bundle.recovered_m = full_density_stack(problem, rec);
        bundle.recovered_u = full_value_stack(problem, rec);
        std::vector<double> spt = sp;
        spt.push_back(problem.dt());
        auto flat = [](const Eigen::MatrixXd& m) {
            return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()));
        };
        bundle.err_m = l2_error(flat(bundle.recovered_m), flat(bundle.reference_m), spt);
        bundle.err_u = l2_error(flat(bundle.recovered_u), flat(bundle.reference_u), spt);
    } else {
        const int n = grid.node_count();
        bundle.reference_m = data.stationary_ref.M.transpose();
        bundle.reference_u = data.stationary_ref.U.transpose();
        bundle.recovered_m = result.z.head(n).transpose();
        bundle.recovered_u = result.z.tail(n).transpose();
        bundle.lambda_ref = data.stationary_ref.lambda;
        MfgProblem prec = problem;
        prec.spatial_cost = result.theta;
        bundle.lambda_rec = lambda_eliminate(prec, result.z.head(n), result.z.tail(n));
        bundle.err_m = l2_error(bundle.recovered_m.row(0), bundle.reference_m.row(0), sp);
        bundle.err_u = l2_error(bundle.recovered_u.row(0), bundle.reference_u.row(0), sp);
        bundle.err_lambda = std::abs(bundle.lambda_rec - bundle.lambda_ref);
    }
    bundle.err_v = l2_error(bundle.recovered_v, bundle.reference_v, sp);

    if (!config.out_dir.empty()) {
        write_bundle(bundle, config.out_dir);
        data.m_obs.to_csv((fs::path(config.out_dir) / "obs_m.csv").string());
        data.v_obs.to_csv((fs::path(config.out_dir) / "obs_v.csv").string());
    }
    return bundle;
}

// --- file formats ------------------------------------------------------------

void write_field_csv(const std::string& path, const TorusGrid& grid, int time_slices,
                     const Eigen::MatrixXd& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open field file " + path);
    out << grid.dim << "," << grid.n_per_axis << "," << time_slices << "\n";
    char buf[40];
    for (int r = 0; r < rows.rows(); ++r) {
        for (int c = 0; c < rows.cols(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", rows(r, c));
            out << buf << (c + 1 < rows.cols() ? "," : "");
        }
        out << "\n";
    }
}

Eigen::MatrixXd read_field_csv(const std::string& path, TorusGrid& grid, int& time_slices) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open field file " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty field file " + path);
    int dim, n;
    if (std::sscanf(line.c_str(), "%d,%d,%d", &dim, &n, &time_slices) != 3)
        throw std::runtime_error("malformed field header in " + path);
    grid = TorusGrid(dim, n);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("field file has no data rows: " + path);
    Eigen::MatrixXd m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (int r = 0; r < m.rows(); ++r) {
        if (static_cast<int>(rows[static_cast<size_t>(r)].size()) != m.cols())
            throw std::runtime_error("ragged field rows in " + path);
        for (int c = 0; c < m.cols(); ++c) m(r, c) = rows[static_cast<size_t>(r)][static_cast<size_t>(c)];
    }
    return m;
}

void write_bundle(const ResultBundle& bundle, const std::string& dir) {
    fs::create_directories(dir);
    const TorusGrid grid = make_grid(bundle.config);
    const int nt = bundle.config.time_slices;
    write_field_csv((fs::path(dir) / "reference_m.csv").string(), grid, nt, bundle.reference_m);
    write_field_csv((fs::path(dir) / "reference_u.csv").string(), grid, nt, bundle.reference_u);
    write_field_csv((fs::path(dir) / "reference_v.csv").string(), grid, 0,
                    bundle.reference_v.transpose());
    write_field_csv((fs::path(dir) / "recovered_m.csv").string(), grid, nt, bundle.recovered_m);
    write_field_csv((fs::path(dir) / "recovered_u.csv").string(), grid, nt, bundle.recovered_u);
    write_field_csv((fs::path(dir) / "recovered_v.csv").string(), grid, 0,
                    bundle.recovered_v.transpose());
    bundle.outer_trace.to_csv((fs::path(dir) / "outer_trace.csv").string());
    write_config_file(bundle.config, (fs::path(dir) / "config.ini").string());

    json j;
    j["lambda_ref"] = bundle.lambda_ref;
    j["lambda_rec"] = bundle.lambda_rec;
    j["err_m"] = bundle.err_m;
    j["err_u"] = bundle.err_u;
    j["err_v"] = bundle.err_v;
    j["err_lambda"] = bundle.err_lambda;
    j["outer_iterations"] = bundle.outer_iterations;
    j["converged"] = bundle.converged;
    j["provenance"] = {{"config_hash", bundle.config_hash},
                       {"seed", bundle.config.seed},
                       {"version", bundle.version}};
    std::ofstream out(fs::path(dir) / "summary.json");
    out << j.dump(2) << "\n";
}

ResultBundle read_bundle(const std::string& dir) {
    ResultBundle bundle;
    bundle.config = parse_config_file((fs::path(dir) / "config.ini").string());
    TorusGrid grid;
    int nt = 0;
    bundle.reference_m = read_field_csv((fs::path(dir) / "reference_m.csv").string(), grid, nt);
    bundle.reference_u = read_field_csv((fs::path(dir) / "reference_u.csv").string(), grid, nt);
    bundle.reference_v =
        read_field_csv((fs::path(dir) / "reference_v.csv").string(), grid, nt).row(0);
    bundle.recovered_m = read_field_csv((fs::path(dir) / "recovered_m.csv").string(), grid, nt);
    bundle.recovered_u = read_field_csv((fs::path(dir) / "recovered_u.csv").string(), grid, nt);
    bundle.recovered_v =
        read_field_csv((fs::path(dir) / "recovered_v.csv").string(), grid, nt).row(0);
    std::ifstream in(fs::path(dir) / "summary.json");
    if (!in) throw std::runtime_error("missing summary.json in " + dir);
    json j;
    in >> j;
    bundle.lambda_ref = j["lambda_ref"];
    bundle.lambda_rec = j["lambda_rec"];
    bundle.err_m = j["err_m"];
    bundle.err_u = j["err_u"];
    bundle.err_v = j["err_v"];
    bundle.err_lambda = j["err_lambda"];
    bundle.outer_iterations = j["outer_iterations"];
    bundle.converged = j["converged"];
    bundle.config_hash = j["provenance"]["config_hash"];
    bundle.version = j["provenance"]["version"];
    return bundle;
}

// --- config files ------------------------------------------------------------

namespace {

const std::map<std::string, std::string>& key_sections() {
    static const std::map<std::string, std::string> m = {
        {"preset", "experiment"},       {"seed", "experiment"},
        {"dim", "grid"},                {"n_per_axis", "grid"},
        {"time_slices", "grid"},        {"horizon", "grid"},
        {"obs_m", "observations"},      {"obs_v", "observations"},
        {"placement", "observations"},  {"noise_sigma", "observations"},
        {"alpha", "weights"},           {"beta", "weights"},
        {"gamma", "weights"},           {"kind", "kernel"},
        {"lengthscale", "kernel"},      {"time_lengthscale", "kernel"},
        {"matern_nu", "kernel"},        {"jitter", "kernel"},
        {"inner", "solver"},            {"inner_tol", "solver"},
        {"inner_max_iter", "solver"},   {"method", "solver"},
        {"outer_tol", "solver"},        {"outer_max_iter", "solver"},
        {"dir", "output"},
    };
    return m;
}

void apply_key(ExperimentConfig& c, const std::string& section, const std::string& key,
               const std::string& value) {
    auto it = key_sections().find(key);
    if (it == key_sections().end() || it->second != section)
        throw std::runtime_error("unknown config key [" + section + "] " + key);
    if (key == "preset") {
        ExperimentConfig base = preset_config(value);
        base.seed = c.seed;
        base.out_dir = c.out_dir;
        c = base;
    } else if (key == "seed") c.seed = std::stoull(value);
    else if (key == "dim") c.dim = std::stoi(value);
    else if (key == "n_per_axis") c.n_per_axis = std::stoi(value);
    else if (key == "time_slices") c.time_slices = std::stoi(value);
    else if (key == "horizon") c.horizon = std::stod(value);
    else if (key == "obs_m") c.obs_m = std::stoi(value);
    else if (key == "obs_v") c.obs_v = std::stoi(value);
    else if (key == "placement") c.placement = value;
    else if (key == "noise_sigma") c.noise_sigma = std::stod(value);
    else if (key == "alpha") c.alpha = std::stod(value);
    else if (key == "beta") c.beta = std::stod(value);
    else if (key == "gamma") c.gamma = std::stod(value);
    else if (key == "kind") c.kernel = value;
    else if (key == "lengthscale") c.lengthscale = std::stod(value);
    else if (key == "time_lengthscale") c.time_lengthscale = std::stod(value);
    else if (key == "matern_nu") c.matern_nu = std::stod(value);
    else if (key == "jitter") c.jitter = std::stod(value);
    else if (key == "inner") c.inner_solver = value;
    else if (key == "inner_tol") c.inner_tol = std::stod(value);
    else if (key == "inner_max_iter") c.inner_max_iter = std::stoi(value);
    else if (key == "method") c.outer_method = value;
    else if (key == "outer_tol") c.outer_tol = std::stod(value);
    else if (key == "outer_max_iter") c.outer_max_iter = std::stoi(value);
    else if (key == "dir") c.out_dir = value;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    ExperimentConfig c;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
        apply_key(c, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
}

void write_config_file(const ExperimentConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open config file " + path);
    out.precision(17);
    out << "[experiment]\npreset = " << c.preset << "\nseed = " << c.seed << "\n\n";
    out << "[grid]\ndim = " << c.dim << "\nn_per_axis = " << c.n_per_axis
        << "\ntime_slices = " << c.time_slices << "\nhorizon = " << c.horizon << "\n\n";
    out << "[observations]\nobs_m = " << c.obs_m << "\nobs_v = " << c.obs_v
        << "\nplacement = " << c.placement << "\nnoise_sigma = " << c.noise_sigma << "\n\n";
    out << "[weights]\nalpha = " << c.alpha << "\nbeta = " << c.beta << "\ngamma = " << c.gamma
        << "\n\n";
    out << "[kernel]\nkind = " << c.kernel << "\nlengthscale = " << c.lengthscale
        << "\ntime_lengthscale = " << c.time_lengthscale << "\nmatern_nu = " << c.matern_nu
        << "\njitter = " << c.jitter << "\n\n";
    out << "[solver]\ninner = " << c.inner_solver << "\ninner_tol = " << c.inner_tol
        << "\ninner_max_iter = " << c.inner_max_iter << "\nmethod = " << c.outer_method
        << "\nouter_tol = " << c.outer_tol << "\nouter_max_iter = " << c.outer_max_iter << "\n\n";
    out << "[output]\ndir = " << c.out_dir << "\n";
}

// --- property suite -----------------------------------------------------------

namespace {

struct SuiteReport {
    int failures = 0;
    std::ostringstream lines;
    void check(const std::string& name, bool ok, double value) {
        lines << (ok ? "[ok]   " : "[FAIL] ") << name << " (" << value << ")\n";
        if (!ok) ++failures;
    }
};

}  // namespace

int run_property_suite(std::string& report) {
    SuiteReport rep;
    std::mt19937_64 rng(20240901);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto random_field = [&](const TorusGrid& g) {
        Eigen::VectorXd v(g.node_count());
        for (int i = 0; i < v.size(); ++i) v[i] = gauss(rng);
        return v;
    };

    for (int dim : {1, 2}) {
        TorusGrid grid(dim, dim == 1 ? 16 : 8);
        double worst_sbp = 0.0, worst_sa = 0.0, worst_nsd = -1.0, worst_mean = 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            Eigen::VectorXd a = random_field(grid), b = random_field(grid);
            for (int axis = 1; axis <= dim; ++axis) {
                worst_sbp = std::max(worst_sbp,
                                     std::abs(inner_h(grid, -one_sided_diff(grid, a, axis, -1), b) -
                                              inner_h(grid, a, one_sided_diff(grid, b, axis, 1))));
                worst_sbp = std::max(worst_sbp,
                                     std::abs(inner_h(grid, -one_sided_diff(grid, a, axis, 1), b) -
                                              inner_h(grid, a, one_sided_diff(grid, b, axis, -1))));
            }
            worst_sa = std::max(worst_sa, std::abs(inner_h(grid, laplacian(grid, a), b) -
                                                   inner_h(grid, a, laplacian(grid, b))));
            worst_nsd = std::max(worst_nsd, inner_h(grid, laplacian(grid, a), a));
            worst_mean = std::max(worst_mean,
                                  std::abs(inner_h(grid, laplacian(grid, a),
                                                   Eigen::VectorXd::Ones(grid.node_count()))));
        }
        const std::string d = std::to_string(dim) + "d";
        rep.check("summation-by-parts " + d, worst_sbp < 1e-12, worst_sbp);
        rep.check("laplacian self-adjoint " + d, worst_sa < 1e-12, worst_sa);
        rep.check("laplacian negative semidefinite " + d, worst_nsd <= 1e-12, worst_nsd);
        rep.check("laplacian zero mean " + d, worst_mean < 1e-12, worst_mean);
    }

    {
        TorusGrid grid(2, 6);
        MfgProblem p = MfgProblem::stationary(grid, 0.0,
                                              NumericalHamiltonian::godunov_quadratic(2),
                                              Coupling::power(1.0),
                                              Eigen::VectorXd::Zero(grid.node_count()));
        double worst = 0.0, worst_mean = 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            Eigen::VectorXd u = random_field(grid), m = random_field(grid), v = random_field(grid);
            worst = std::max(worst, adjoint_identity_check(p, u, m, v));
            worst_mean = std::max(worst_mean,
                                  std::abs(inner_h(grid, transport_operator(p, u, m),
                                                   Eigen::VectorXd::Ones(grid.node_count()))));
        }
        rep.check("transport adjoint identity", worst < 1e-12, worst);
        rep.check("transport zero mean", worst_mean < 1e-12, worst_mean);
    }

    {
        // Hamiltonian consistency and monotone gradient signs.
        std::uniform_real_distribution<double> unif(-3.0, 3.0);
        auto check_ham = [&](const NumericalHamiltonian& h, const char* name, double m,
                             auto reference) {
            double worst = 0.0;
            bool signs_ok = true;
            double q[4], gr[4];
            const int w = h.stencil_width();
            for (int trial = 0; trial < 200; ++trial) {
                const double xi = unif(rng), eta = unif(rng);
                q[0] = q[1] = xi;
                if (w == 4) q[2] = q[3] = eta;
                worst = std::max(worst, std::abs(h.value(0.3, 0.7, q, m) - reference(xi, eta, m)));
                for (int l = 0; l < w; ++l) q[l] = unif(rng);
                h.grad_q(0.3, 0.7, q, m, gr);
                for (int l = 0; l < w; ++l) {
                    const bool plus_slot = l % 2 == 0;
                    if (plus_slot && gr[l] > 1e-12) signs_ok = false;
                    if (!plus_slot && gr[l] < -1e-12) signs_ok = false;
                }
            }
            rep.check(std::string("hamiltonian consistency ") + name, worst < 1e-12, worst);
            rep.check(std::string("gradient monotone signs ") + name, signs_ok, 0.0);
        };
        check_ham(NumericalHamiltonian::godunov_quadratic(2), "godunov", 1.0,
                  [](double xi, double eta, double) { return 0.5 * (xi * xi + eta * eta); });
        check_ham(NumericalHamiltonian::shifted_quadratic(2, {1.0, 3.0}), "shifted", 1.0,
                  [](double xi, double eta, double) {
                      return 0.5 * ((1.0 + xi) * (1.0 + xi) + (3.0 + eta) * (3.0 + eta));
                  });
        check_ham(NumericalHamiltonian::congestion_power(2, 1.5, 2.0, {1.0, 3.0}), "congestion",
                  0.8, [](double xi, double eta, double m) {
                      return ((1.0 + xi) * (1.0 + xi) + (3.0 + eta) * (3.0 + eta)) /
                             (2.0 * std::pow(m, 1.5));
                  });
    }

    {
        // Strict monotonicity of the time-dependent residual on random
        // feasible pairs.
        TorusGrid grid(2, 6);
        MfgProblem p = MfgProblem::time_dependent_problem(
            grid, 0.1, NumericalHamiltonian::godunov_quadratic(2), Coupling::power(1.0),
            Eigen::VectorXd::Zero(grid.node_count()), 1.0, 3,
            Eigen::VectorXd::Ones(grid.node_count()), Eigen::VectorXd::Zero(grid.node_count()));
        std::uniform_real_distribution<double> unif(0.2, 2.0);
        auto feasible = [&]() {
            SpaceTimeState y;
            for (int k = 0; k < p.time_slices; ++k) {
                Eigen::VectorXd m(grid.node_count());
                for (int i = 0; i < m.size(); ++i) m[i] = unif(rng);
                m /= inner_h(grid, m, Eigen::VectorXd::Ones(grid.node_count()));
                y.M.push_back(m);
                y.U.push_back(random_field(grid));
            }
            return y;
        };
        double min_gap = 1e300;
        for (int trial = 0; trial < 100; ++trial) {
            SpaceTimeState a = feasible(), b = feasible();
            min_gap = std::min(min_gap, monotonicity_gap(p, a, b));
        }
        rep.check("monotonicity gap positive", min_gap > 0.0, min_gap);
    }

    {
        // Feasibility along a short flow on a small time-dependent problem.
        TorusGrid grid(1, 12);
        ExperimentConfig c = preset_config("timedep-1d");
        c.n_per_axis = 12;
        c.time_slices = 8;
        MfgProblem p = make_problem(c, preset_true_cost(c.preset, TorusGrid(1, 12)));
        TimedepFlowConfig fc;
        fc.tol = 1e-8;
        TimedepTrace trace;
        hrf_timedep_solve(p, default_timedep_init(p), fc, &trace);
        double worst_mass = 0.0, worst_min = 1e300;
        for (const auto& row : trace.rows) {
            worst_mass = std::max(worst_mass, row.mass_dev);
            worst_min = std::min(worst_min, row.min_density);
        }
        rep.check("flow converged", trace.converged, trace.rows.back().res_inf);
        rep.check("flow slice masses", worst_mass < 1e-12, worst_mass);
        rep.check("flow positivity", worst_min > 0.0, worst_min);
    }

    report = rep.lines.str();
    return rep.failures;
}

}  // namespace mfg
