#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "mlmcfem/cli.hpp"

using namespace mlmcfem;

int main(int argc, char** argv) {
    CLI::App app{"Monte-Carlo and multilevel Monte-Carlo finite elements for the "
                 "stochastic drift-diffusion-Poisson system, with cost-optimal "
                 "hierarchy planning"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    RunConfig run;
    run.out_dir = "out";
    std::string eps_list;
    app.add_option("--config", run.config_path, "device config file (key-value sections)");
    app.add_option("--seed", run.seed, "global random seed");
    app.add_option("--eps", eps_list, "tolerance list, comma separated, descending");
    app.add_option("--variant", run.variant, "mc | geo | free | all")->default_str("all");
    app.add_option("--lmax", run.l_max, "maximum MLMC level count")->default_val(8);
    app.add_option("--out", run.out_dir, "output directory")->default_str("out");
    app.add_option("--threads", run.threads, "worker threads (0 = hardware)");
    app.add_flag("--dry-run", run.dry_run, "validate inputs, build the coarsest mesh, exit");

    auto* calibrate = app.add_subcommand("calibrate", "fit the error and cost models");

    auto* optimize = app.add_subcommand("optimize", "solve the work-minimization problems");
    std::string report_path;
    optimize->add_option("--report", report_path, "calibration report JSON");
    ErrorModel inline_error;
    CostModel inline_cost;
    bool has_inline = false;
    double mu = 0.0, gamma = 0.0;
    optimize->add_option("--alpha", inline_error.alpha);
    optimize->add_option("--c1", inline_error.c1);
    optimize->add_option("--beta", inline_error.beta);
    optimize->add_option("--c0", inline_error.c0);
    optimize->add_option("--c00", inline_error.c00);
    auto* mu_opt = optimize->add_option("--mu", mu, "single cost term coefficient");
    optimize->add_option("--gamma", gamma, "single cost term exponent");

    auto* estimate = app.add_subcommand("estimate", "run a plan on the device sampler");
    std::string plan_path;
    estimate->add_option("plan", plan_path, "plan JSON file")->required();

    auto* compare = app.add_subcommand("compare", "join optimizer summaries");
    std::vector<std::string> summaries;
    compare->add_option("summaries", summaries, "summary CSV files")->expected(-1);

    auto* inspect = app.add_subcommand("inspect", "dump mesh, sample and solution files");
    int inspect_level = 0;
    inspect->add_option("--level", inspect_level, "refinement level (h0 / 2^level)");

    CLI11_PARSE(app, argc, argv);

    if (!eps_list.empty()) {
        std::size_t pos = 0;
        while (pos < eps_list.size()) {
            const std::size_t comma = eps_list.find(',', pos);
            const std::string tok = eps_list.substr(
                pos, comma == std::string::npos ? std::string::npos : comma - pos);
            if (!tok.empty()) run.epsilons.push_back(std::stod(tok));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    if (mu_opt->count() > 0) {
        inline_cost.terms = {{"work", mu, gamma}};
        has_inline = true;
    }

    try {
        if (calibrate->parsed()) return cmd_calibrate(run);
        if (optimize->parsed())
            return cmd_optimize(run, report_path, has_inline ? &inline_error : nullptr,
                                has_inline ? &inline_cost : nullptr);
        if (estimate->parsed()) return cmd_estimate(run, plan_path);
        if (compare->parsed()) return cmd_compare(run, summaries);
        if (inspect->parsed()) return cmd_inspect(run, inspect_level);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const GeometryError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitConfig;
    } catch (const InfeasibleError& e) {
        std::fprintf(stderr, "infeasible: %s\n", e.what());
        return kExitInfeasible;
    } catch (const Error& e) {
        std::fprintf(stderr, "solver failure: %s\n", e.what());
        return kExitSolver;
    }
    return kExitOk;
}
