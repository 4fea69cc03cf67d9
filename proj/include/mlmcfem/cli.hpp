#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mlmcfem/calibration.hpp"
#include "mlmcfem/optimizer.hpp"

namespace mlmcfem {

// exit codes shared by all subcommands
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInfeasible = 3;
inline constexpr int kExitSolver = 4;

struct RunConfig {
    std::string config_path;        // empty: built-in defaults
    std::uint64_t seed = 1;
    std::vector<double> epsilons;   // strictly positive, sorted descending
    std::string variant = "all";    // mc | geo | free | all
    int l_max = 8;
    std::string out_dir = ".";
    unsigned threads = 0;           // 0: hardware concurrency
    bool dry_run = false;

    // calibration study shape (overridable from the [calibration] config section)
    int calib_levels = 4;
    double calib_ratio = 2.0;
    int calib_seeds = 16;
    double reference_factor = 2.83;  // reference mesh this much finer than the
                                     // smallest calibrated level
    int variance_levels = 3;
    int variance_seeds = 32;
    int timing_samples = 2;

    void validate() const;
    unsigned effective_threads() const;
};

DeviceConfig device_config_for(const RunConfig& run);

// Runs the discretization, variance and timing studies; writes the
// calibration report JSON and the raw CSV tables.
int cmd_calibrate(const RunConfig& run);

// Solves the work-minimization problems for every tolerance and variant;
// writes per-plan JSON files, the work-vs-L curves and a summary CSV.
int cmd_optimize(const RunConfig& run, const std::string& report_path,
                 const ErrorModel* inline_error = nullptr,
                 const CostModel* inline_cost = nullptr);

// Executes a plan file on the device sampler and writes the estimate JSON.
int cmd_estimate(const RunConfig& run, const std::string& plan_path);

// Joins summary CSVs into a comparison table (epsilon, work per variant,
// work ratios).
int cmd_compare(const RunConfig& run, const std::vector<std::string>& summary_paths);

// Debug exports for one sample: mesh.txt (vertices, triangles, tags),
// sample.csv (dopant positions) and fields.csv (converged solution).
int cmd_inspect(const RunConfig& run, int level);

}  // namespace mlmcfem
