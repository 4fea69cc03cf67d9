#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mlmcfem/estimators.hpp"
#include "mlmcfem/stochastic.hpp"

namespace mlmcfem {

struct CostTerm {
    std::string label;  // poisson_assembly | poisson_solve | dd_assembly | dd_solve
    double mu = 1.0;    // seconds per sample at h = 1
    double gamma = 1.0; // mesh-size exponent
};

// Work model W(M, h) = sum_k mu_k M h^-gamma_k. The two dd terms cover both
// continuity equations, so the Poisson + 2x drift-diffusion split of the
// total work is preserved with W_D = (dd_assembly + dd_solve) / 2.
struct CostModel {
    std::vector<CostTerm> terms;

    double work(double samples, double h) const;
    double work(const MlmcPlan& plan) const;
    void validate() const;
};

struct FitDiagnostics {
    std::string label;
    double r_squared = 0.0;
    int points = 0;
    double h_min = 0.0;
    double h_max = 0.0;
};

struct CalibrationReport {
    ErrorModel error_model;
    CostModel cost_model;
    FitDiagnostics discretization;
    FitDiagnostics variance;
    std::vector<FitDiagnostics> cost_fits;
};

std::string to_json(const CalibrationReport& report);
CalibrationReport calibration_report_from_json(const std::string& text);

// log-log least squares of error = C1 h^alpha; needs >= 3 sizes spanning a
// factor of 4.
std::pair<double, double> fit_discretization(
    const std::vector<std::pair<double, double>>& h_error_pairs,
    FitDiagnostics* diagnostics = nullptr);

// c00 is the measured level-0 deviation; (beta, c0) fitted from the decay of
// the coupled-difference deviations against the coarse mesh size.
struct LevelVarianceFit {
    double beta = 0.0;
    double c0 = 0.0;
    double c00 = 0.0;
};

LevelVarianceFit fit_level_variance(
    double sigma_level0, const std::vector<std::pair<double, double>>& h_sigma_pairs,
    FitDiagnostics* diagnostics = nullptr);

struct ComponentTiming {
    std::string label;
    std::vector<double> h;
    std::vector<long> samples;
    std::vector<double> seconds;
};

CostModel fit_cost_model(const std::vector<ComponentTiming>& timings,
                         std::vector<FitDiagnostics>* diagnostics = nullptr);

// --- device studies -------------------------------------------------------

struct DiscretizationStudy {
    std::vector<double> h;        // realized sizes, coarse to fine
    std::vector<double> error;    // |mean_s(qoi_h - qoi_ref)|
    double h_reference = 0.0;
    std::vector<std::vector<double>> per_seed_qoi;  // [level][seed], ref last
};

// Same fixed seeds solved on every level and on the finer reference mesh.
DiscretizationStudy run_discretization_study(const DeviceConfig& config,
                                             const std::vector<double>& level_h,
                                             double reference_h, int seeds,
                                             std::uint64_t global_seed,
                                             unsigned threads);

struct VarianceStudy {
    double sigma0 = 0.0;               // QoI deviation at level 0
    std::vector<double> h_coarse;      // h_{l-1} per difference level
    std::vector<double> sigma_diff;    // sd of coupled differences
};

VarianceStudy run_variance_study(const DeviceConfig& config, double h0, double ratio,
                                 int levels, int seeds, std::uint64_t global_seed,
                                 unsigned threads);

// Warm, single-threaded timing of the four work components; three
// repetitions, median per component.
std::vector<ComponentTiming> run_timing_study(const DeviceConfig& config,
                                              const std::vector<double>& level_h,
                                              int samples_per_level,
                                              std::uint64_t global_seed);

}  // namespace mlmcfem
