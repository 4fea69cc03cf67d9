#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mlmcfem/calibration.hpp"
#include "mlmcfem/estimators.hpp"
#include "mlmcfem/nlp.hpp"

namespace mlmcfem {

enum class HierarchyVariant : int { Mc = 0, MlmcGeometric = 1, MlmcFree = 2 };

inline const char* variant_name(HierarchyVariant v) {
    switch (v) {
        case HierarchyVariant::Mc: return "mc";
        case HierarchyVariant::MlmcGeometric: return "mlmc-geometric";
        case HierarchyVariant::MlmcFree: return "mlmc-free";
    }
    return "?";
}

struct OptimizerOptions {
    double xi = 2.220446049250313e-16;  // 2^-52, smallest admissible mesh size
    double h_max = 1.0e6;               // upper box bound on mesh sizes
    int multistarts = 8;
    std::uint64_t seed = 20240915;      // multistart perturbations
    unsigned threads = 1;
    IpOptions ip;
};

// Solution of one work-minimization problem: the integer-feasible plan plus
// the continuous optimum and solver diagnostics.
struct McPlanSolution {
    McPlan plan;                  // M rounded up
    double h_continuous = 0.0;
    double samples_continuous = 0.0;
    double work = 0.0;            // at the integer plan
    double work_continuous = 0.0;
    IpDiagnostics diagnostics;
};

struct MlmcPlanSolution {
    MlmcPlan plan;                          // samples floored then repaired
    std::vector<double> samples_continuous; // M_0..M_L before flooring
    double work = 0.0;                      // at the floored plan
    double work_continuous = 0.0;
    int repair_increments = 0;              // feasibility restorations
    IpDiagnostics diagnostics;
};

McPlanSolution optimize_mc(const CostModel& cost, const ErrorModel& error, double epsilon,
                           const OptimizerOptions& options = {});

MlmcPlanSolution optimize_mlmc_geometric(const CostModel& cost, const ErrorModel& error,
                                         double epsilon, int levels,
                                         const OptimizerOptions& options = {});

MlmcPlanSolution optimize_mlmc_free(const CostModel& cost, const ErrorModel& error,
                                    double epsilon, int levels,
                                    const OptimizerOptions& options = {});

// max(1, floor(M_l)) with greedy feasibility repair: while the accuracy
// constraint is violated, increment the sample count with the best constraint
// improvement per unit work.
MlmcPlan floor_samples(const MlmcPlan& plan, const std::vector<double>& samples_continuous,
                       const CostModel& cost, const ErrorModel& error, double epsilon,
                       int* increments = nullptr);

// g1 of the work-minimization problems, evaluated at an integer plan.
double accuracy_margin(const ErrorModel& error, double epsilon, const MlmcPlan& plan);

struct LevelSweepEntry {
    int levels = 0;
    bool feasible = false;
    double work = 0.0;
    std::string failure;
};

struct LevelSelection {
    MlmcPlanSolution best;
    int best_levels = 0;
    std::vector<LevelSweepEntry> curve;
};

// Solves the chosen problem for every L in 0..max_levels and returns the plan
// with the smallest floored-feasible work together with the full curve.
LevelSelection select_levels(const CostModel& cost, const ErrorModel& error, double epsilon,
                             HierarchyVariant variant, int max_levels,
                             const OptimizerOptions& options = {});

std::string to_json(const MlmcPlanSolution& solution, double epsilon,
                    HierarchyVariant variant);
std::string to_json(const McPlanSolution& solution, double epsilon);

}  // namespace mlmcfem
