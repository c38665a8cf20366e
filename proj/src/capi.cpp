#include "mfgflow/mfgflow.h"

#include <cstring>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "experiment.hpp"

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

template <typename Fn>
mfg_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const std::invalid_argument& e) {
        set_error(e.what());
        return MFG_ERR_INVALID_ARG;
    } catch (const std::domain_error& e) {
        set_error(e.what());
        return MFG_ERR_DOMAIN;
    } catch (const mfg::InnerSolveError& e) {
        set_error(e.what());
        return MFG_ERR_SOLVER;
    } catch (const std::ios_base::failure& e) {
        set_error(e.what());
        return MFG_ERR_IO;
    } catch (const std::exception& e) {
        set_error(e.what());
        return MFG_ERR_INTERNAL;
    }
}

}  // namespace

struct mfg_config {
    mfg::ExperimentConfig config;
};

struct mfg_result {
    mfg::ResultBundle bundle;
    std::string report;
    bool has_bundle = false;
};

extern "C" {

const char* mfg_version(void) { return "1.0.0"; }

const char* mfg_last_error(void) { return g_last_error.c_str(); }

mfg_status mfg_config_from_preset(const char* preset_id, mfg_config** out) {
    if (!preset_id || !out) {
        set_error("null argument");
        return MFG_ERR_INVALID_ARG;
    }
    return guarded([&] {
        *out = new mfg_config{mfg::preset_config(preset_id)};
        return MFG_OK;
    });
}

mfg_status mfg_config_from_file(const char* path, mfg_config** out) {
    if (!path || !out) {
        set_error("null argument");
        return MFG_ERR_INVALID_ARG;
    }
    return guarded([&] {
        *out = new mfg_config{mfg::parse_config_file(path)};
        return MFG_OK;
    });
}

mfg_status mfg_config_set(mfg_config* config, const char* key, const char* value) {
    if (!config || !key || !value) {
        set_error("null argument");
        return MFG_ERR_INVALID_ARG;
    }
    return guarded([&] {
        const std::string k = key, v = value;
        mfg::ExperimentConfig& c = config->config;
        if (k == "preset") c = mfg::preset_config(v);
        else if (k == "seed") c.seed = std::stoull(v);
        else if (k == "dim") c.dim = std::stoi(v);
        else if (k == "n_per_axis") c.n_per_axis = std::stoi(v);
        else if (k == "time_slices") c.time_slices = std::stoi(v);
        else if (k == "horizon") c.horizon = std::stod(v);
        else if (k == "obs_m") c.obs_m = std::stoi(v);
        else if (k == "obs_v") c.obs_v = std::stoi(v);
        else if (k == "placement") c.placement = v;
        else if (k == "noise_sigma") c.noise_sigma = std::stod(v);
        else if (k == "alpha") c.alpha = std::stod(v);
        else if (k == "beta") c.beta = std::stod(v);
        else if (k == "gamma") c.gamma = std::stod(v);
        else if (k == "kind" || k == "kernel") c.kernel = v;
        else if (k == "lengthscale") c.lengthscale = std::stod(v);
        else if (k == "time_lengthscale") c.time_lengthscale = std::stod(v);
        else if (k == "matern_nu") c.matern_nu = std::stod(v);
        else if (k == "jitter") c.jitter = std::stod(v);
        else if (k == "inner") c.inner_solver = v;
        else if (k == "inner_tol") c.inner_tol = std::stod(v);
        else if (k == "inner_max_iter") c.inner_max_iter = std::stoi(v);
        else if (k == "method") c.outer_method = v;
        else if (k == "outer_tol") c.outer_tol = std::stod(v);
        else if (k == "outer_max_iter") c.outer_max_iter = std::stoi(v);
        else if (k == "dir") c.out_dir = v;
        else {
            set_error("unknown config key '" + k + "'");
            return MFG_ERR_INVALID_ARG;
        }
        return MFG_OK;
    });
}

void mfg_config_free(mfg_config* config) { delete config; }

mfg_status mfg_run_forward(const mfg_config* config, mfg_result** out) {
    if (!config || !out) {
        set_error("null argument");
        return MFG_ERR_INVALID_ARG;
    }
    return guarded([&] {
        auto* r = new mfg_result;
        r->bundle = mfg::run_forward(config->config);
        r->has_bundle = true;
        *out = r;
        return MFG_OK;
    });
}

mfg_status mfg_run_inverse(const mfg_config* config, mfg_result** out) {
    if (!config || !out) {
        set_error("null argument");
        return MFG_ERR_INVALID_ARG;
    }
    return guarded([&] {
        auto* r = new mfg_result;
        r->bundle = mfg::run_experiment(config->config);
        r->has_bundle = true;
        *out = r;
        return MFG_OK;
    });
}

mfg_status mfg_run_synthesize(const mfg_config* config, const char* dir) {
    if (!config || !dir) {
        set_error("null argument");
        return MFG_ERR_INVALID_ARG;
    }
    return guarded([&] {
        mfg::SynthesizedData data = mfg::synthesize_data(config->config);
        std::filesystem::create_directories(dir);
        data.m_obs.to_csv(std::string(dir) + "/obs_m.csv");
        data.v_obs.to_csv(std::string(dir) + "/obs_v.csv");
        return MFG_OK;
    });
}

mfg_status mfg_run_check(mfg_result** out, int* failures) {
    if (!out || !failures) {
        set_error("null argument");
        return MFG_ERR_INVALID_ARG;
    }
    return guarded([&] {
        auto* r = new mfg_result;
        *failures = mfg::run_property_suite(r->report);
        *out = r;
        return MFG_OK;
    });
}

mfg_status mfg_result_scalar(const mfg_result* result, const char* name, double* out) {
    if (!result || !name || !out) {
        set_error("null argument");
        return MFG_ERR_INVALID_ARG;
    }
    const std::string n = name;
    const mfg::ResultBundle& b = result->bundle;
    if (n == "lambda_ref") *out = b.lambda_ref;
    else if (n == "lambda_rec") *out = b.lambda_rec;
    else if (n == "err_m") *out = b.err_m;
    else if (n == "err_u") *out = b.err_u;
    else if (n == "err_v") *out = b.err_v;
    else if (n == "err_lambda") *out = b.err_lambda;
    else if (n == "outer_iterations") *out = b.outer_iterations;
    else if (n == "converged") *out = b.converged ? 1.0 : 0.0;
    else if (n == "content_hash") *out = static_cast<double>(b.content_hash());
    else {
        set_error("unknown scalar '" + n + "'");
        return MFG_ERR_INVALID_ARG;
    }
    return MFG_OK;
}

mfg_status mfg_result_field(const mfg_result* result, const char* name, double* buffer,
                            size_t* rows, size_t* cols) {
    if (!result || !name || !rows || !cols) {
        set_error("null argument");
        return MFG_ERR_INVALID_ARG;
    }
    const std::string n = name;
    const mfg::ResultBundle& b = result->bundle;
    Eigen::MatrixXd field;
    if (n == "reference_m") field = b.reference_m;
    else if (n == "reference_u") field = b.reference_u;
    else if (n == "reference_v") field = b.reference_v.transpose();
    else if (n == "recovered_m") field = b.recovered_m;
    else if (n == "recovered_u") field = b.recovered_u;
    else if (n == "recovered_v") field = b.recovered_v.transpose();
    else {
        set_error("unknown field '" + n + "'");
        return MFG_ERR_INVALID_ARG;
    }
    *rows = static_cast<size_t>(field.rows());
    *cols = static_cast<size_t>(field.cols());
    if (buffer) {
        for (Eigen::Index r = 0; r < field.rows(); ++r)
            for (Eigen::Index c = 0; c < field.cols(); ++c)
                buffer[static_cast<size_t>(r) * static_cast<size_t>(field.cols()) +
                       static_cast<size_t>(c)] = field(r, c);
    }
    return MFG_OK;
}

mfg_status mfg_result_write(const mfg_result* result, const char* dir) {
    if (!result || !dir) {
        set_error("null argument");
        return MFG_ERR_INVALID_ARG;
    }
    if (!result->has_bundle) {
        set_error("result carries no bundle");
        return MFG_ERR_INVALID_ARG;
    }
    return guarded([&] {
        mfg::write_bundle(result->bundle, dir);
        return MFG_OK;
    });
}

const char* mfg_result_report(const mfg_result* result) {
    return result ? result->report.c_str() : "";
}

void mfg_result_free(mfg_result* result) { delete result; }

mfg_status mfg_catalog_json(char** out) {
    if (!out) {
        set_error("null argument");
        return MFG_ERR_INVALID_ARG;
    }
    return guarded([&] {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& p : mfg::preset_catalog())
            j.push_back({{"id", p.id}, {"description", p.description}});
        const std::string s = j.dump(2);
        *out = new char[s.size() + 1];
        std::memcpy(*out, s.c_str(), s.size() + 1);
        return MFG_OK;
    });
}

void mfg_string_free(char* s) { delete[] s; }

}  // extern "C"
