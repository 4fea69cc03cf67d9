#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mlmcfem/errors.hpp"

namespace mlmcfem {

// Calibrated constants of the error bounds:
//   discretization  |E[u - u_h]|        <= c1 * h^alpha
//   level variance  sigma[u_l - u_l-1]  <= c0 * h_{l-1}^beta
//   level-0 spread  sigma[u_h0]         <= c00
struct ErrorModel {
    double alpha = 1.0;
    double c1 = 1.0;
    double beta = 1.0;
    double c0 = 1.0;
    double c00 = 1.0;

    void validate() const {
        if (!(alpha > 0.0) || !(beta > 0.0))
            throw DataError("error-model exponents must be positive");
        if (c1 < 0.0 || c0 < 0.0 || c00 < 0.0)
            throw DataError("error-model constants must be non-negative");
    }
};

struct McPlan {
    double h = 1.0;
    long samples = 1;
};

// MLMC hierarchy (L, {M_l}, h0, r or {r_l}). `levels` counts correction
// levels, so a plan has levels+1 sample counts.
struct MlmcPlan {
    int levels = 0;
    double h0 = 1.0;
    bool geometric = true;
    double ratio = 2.0;                 // geometric progression factor
    std::vector<double> ratios;         // free variant: per-level factors r_1..r_L
    std::vector<long> samples;          // M_0..M_L

    std::vector<double> mesh_sizes() const;
    std::vector<double> level_ratios() const;  // per-level factors, both variants
    void validate() const;
};

// RMSE bounds of the error model at a given plan.
double rmse_bound_mc(const ErrorModel& model, const McPlan& plan);
double rmse_bound_mlmc(const ErrorModel& model, const MlmcPlan& plan);

// Unbiased sample standard deviation; needs at least two values.
double fit_sigma(const std::vector<double>& values);

// Deterministic map (mesh level, omega seed) -> scalar quantity of interest.
using QoiEvaluator = std::function<double(int level, std::uint64_t omega_seed)>;

struct McEstimate {
    double mean = 0.0;
    double sigma = 0.0;   // unbiased sample standard deviation (0 for M = 1)
    long samples = 0;
    long retried = 0;
    double seconds = 0.0;
};

// Sample mean over M evaluations at one mesh level. Evaluations may run
// concurrently; accumulation is by sample index with compensated summation,
// so the result is independent of the thread count. With retry_failed, a
// failing sample is re-drawn once from a reserved seed stream before the
// failure is reported.
McEstimate mc_estimate(const QoiEvaluator& qoi, int level, long samples,
                       std::uint64_t global_seed, unsigned threads = 1,
                       bool retry_failed = false);

struct LevelStats {
    int level = 0;
    double mean = 0.0;   // mean of u_0 (level 0) or u_l - u_{l-1}
    double sd = 0.0;
    long samples = 0;
    double seconds = 0.0;
};

struct MlmcEstimate {
    double mean = 0.0;
    long retried = 0;
    std::vector<LevelStats> per_level;
};

// Telescoping estimator: level-0 sample mean plus coupled level differences,
// the same omega evaluated on both meshes of a pair. Per-level seed streams
// are disjoint unless shared_seeds is set (test fixture for the telescoping
// identity). Retries re-draw the whole coupled pair.
MlmcEstimate mlmc_estimate(const QoiEvaluator& qoi, const MlmcPlan& plan,
                           std::uint64_t global_seed, unsigned threads = 1,
                           bool shared_seeds = false, bool retry_failed = false);

std::string to_json(const MlmcPlan& plan);
MlmcPlan mlmc_plan_from_json(const std::string& text);
std::string to_json(const MlmcEstimate& estimate, const MlmcPlan& plan);

}  // namespace mlmcfem
