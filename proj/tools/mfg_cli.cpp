// Command-line front end. Talks to the library exclusively through the C API.

#include <cstdio>
#include <cstdlib>
#include <string>

#include <CLI11.hpp>

#include "mfgflow/mfgflow.h"

namespace {

int log_level() {
    // MFGFLOW_LOG in {error, warn, info, debug}; default info.
    const char* env = std::getenv("MFGFLOW_LOG");
    if (!env) return 2;
    const std::string v = env;
    if (v == "error") return 0;
    if (v == "warn") return 1;
    if (v == "debug") return 3;
    return 2;
}

struct ConfigHandle {
    mfg_config* ptr = nullptr;
    ~ConfigHandle() { mfg_config_free(ptr); }
};

struct ResultHandle {
    mfg_result* ptr = nullptr;
    ~ResultHandle() { mfg_result_free(ptr); }
};

int fail(const char* stage) {
    std::fprintf(stderr, "error [%s]: %s\n", stage, mfg_last_error());
    return 1;
}

struct CommonOpts {
    std::string preset;
    std::string config_file;
    std::string out_dir;
    std::string solver;
    std::string method;
    std::uint64_t seed = 0;
    bool seed_set = false;
    double tol = 0.0;
    bool tol_set = false;
    int max_iter = 0;
    bool max_iter_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_method) {
    cmd->add_option("preset", o.preset, "preset id (see `mfg catalog`)");
    cmd->add_option("--config", o.config_file, "config file (overrides preset defaults)");
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--solver", o.solver, "inner solver: hrf, newton, policy");
    if (with_method) cmd->add_option("--method", o.method, "outer method: gd, gn");
    cmd->add_option("--seed", o.seed, "random seed")->each([&](const std::string&) {
        o.seed_set = true;
    });
    cmd->add_option("--tol", o.tol, "inner solver tolerance")->each([&](const std::string&) {
        o.tol_set = true;
    });
    cmd->add_option("--max-iter", o.max_iter, "outer iteration cap")
        ->each([&](const std::string&) { o.max_iter_set = true; });
}

int build_config(const CommonOpts& o, ConfigHandle& cfg, const char* stage, bool outer_caps) {
    mfg_status st;
    if (!o.config_file.empty()) st = mfg_config_from_file(o.config_file.c_str(), &cfg.ptr);
    else if (!o.preset.empty()) st = mfg_config_from_preset(o.preset.c_str(), &cfg.ptr);
    else {
        std::fprintf(stderr, "error [%s]: give a preset id or --config FILE\n", stage);
        return 1;
    }
    if (st != MFG_OK) return fail(stage);
    auto set = [&](const char* key, const std::string& value) {
        return mfg_config_set(cfg.ptr, key, value.c_str()) == MFG_OK;
    };
    if (o.seed_set && !set("seed", std::to_string(o.seed))) return fail(stage);
    if (o.tol_set && !set("inner_tol", std::to_string(o.tol))) return fail(stage);
    if (o.max_iter_set &&
        !set(outer_caps ? "outer_max_iter" : "inner_max_iter", std::to_string(o.max_iter)))
        return fail(stage);
    if (!o.solver.empty() && !set("inner", o.solver)) return fail(stage);
    if (!o.method.empty() && !set("method", o.method)) return fail(stage);
    if (!o.out_dir.empty() && !set("dir", o.out_dir)) return fail(stage);
    return 0;
}

void print_scalar(const mfg_result* r, const char* name) {
    double v = 0.0;
    if (mfg_result_scalar(r, name, &v) == MFG_OK) std::printf("  %-16s %.12g\n", name, v);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mfgflow: forward and inverse mean-field-game experiments"};
    app.require_subcommand(1);

    CommonOpts fwd_opts, inv_opts, syn_opts;
    auto* fwd = app.add_subcommand("forward", "solve a forward problem (stationary or timedep)");
    add_common(fwd, fwd_opts, false);
    auto* inv = app.add_subcommand("invert", "synthesize data and run the inverse problem");
    add_common(inv, inv_opts, true);
    auto* syn = app.add_subcommand("synthesize", "synthesize observations only");
    add_common(syn, syn_opts, false);
    auto* cat = app.add_subcommand("catalog", "list the built-in presets");
    auto* chk = app.add_subcommand("check", "run the property suite");

    CLI11_PARSE(app, argc, argv);

    if (cat->parsed()) {
        char* s = nullptr;
        if (mfg_catalog_json(&s) != MFG_OK) return fail("catalog");
        std::printf("%s\n", s);
        mfg_string_free(s);
        return 0;
    }
    if (chk->parsed()) {
        ResultHandle res;
        int failures = 0;
        if (mfg_run_check(&res.ptr, &failures) != MFG_OK) return fail("check");
        std::printf("%s", mfg_result_report(res.ptr));
        std::printf("%d check(s) failed\n", failures);
        return failures == 0 ? 0 : 1;
    }
    if (fwd->parsed()) {
        ConfigHandle cfg;
        if (int rc = build_config(fwd_opts, cfg, "forward", false)) return rc;
        ResultHandle res;
        if (mfg_run_forward(cfg.ptr, &res.ptr) != MFG_OK) return fail("forward");
        if (log_level() >= 2) {
            std::printf("forward solve ok\n");
            print_scalar(res.ptr, "lambda_ref");
        }
        if (!fwd_opts.out_dir.empty() &&
            mfg_result_write(res.ptr, fwd_opts.out_dir.c_str()) != MFG_OK)
            return fail("forward/write");
        return 0;
    }
    if (inv->parsed()) {
        ConfigHandle cfg;
        if (int rc = build_config(inv_opts, cfg, "invert", true)) return rc;
        ResultHandle res;
        if (mfg_run_inverse(cfg.ptr, &res.ptr) != MFG_OK) return fail("invert");
        if (log_level() >= 2) {
            std::printf("inverse solve ok\n");
            for (const char* name : {"lambda_ref", "lambda_rec", "err_m", "err_u", "err_v",
                                     "err_lambda", "outer_iterations", "converged"})
                print_scalar(res.ptr, name);
        }
        if (!inv_opts.out_dir.empty() &&
            mfg_result_write(res.ptr, inv_opts.out_dir.c_str()) != MFG_OK)
            return fail("invert/write");
        return 0;
    }
    if (syn->parsed()) {
        ConfigHandle cfg;
        if (int rc = build_config(syn_opts, cfg, "synthesize", false)) return rc;
        const std::string dir = syn_opts.out_dir.empty() ? "." : syn_opts.out_dir;
        if (mfg_run_synthesize(cfg.ptr, dir.c_str()) != MFG_OK) return fail("synthesize");
        if (log_level() >= 2) std::printf("observations written to %s\n", dir.c_str());
        return 0;
    }
    return 0;
}
