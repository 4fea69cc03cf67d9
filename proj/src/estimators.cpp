#include "mlmcfem/estimators.hpp"

#include <atomic>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "mlmcfem/numerics.hpp"
#include "mlmcfem/parallel.hpp"
#include "mlmcfem/rng.hpp"

namespace mlmcfem {

std::vector<double> MlmcPlan::level_ratios() const {
    std::vector<double> r;
    if (geometric) {
        r.assign(levels, ratio);
    } else {
        r = ratios;
    }
    return r;
}

std::vector<double> MlmcPlan::mesh_sizes() const {
    std::vector<double> h{h0};
    for (double r : level_ratios()) h.push_back(h.back() / r);
    return h;
}

void MlmcPlan::validate() const {
    if (levels < 0) throw DataError("level count must be >= 0");
    if (!(h0 > 0.0)) throw DataError("h0 must be positive");
    if (static_cast<int>(samples.size()) != levels + 1)
        throw DataError("plan needs one sample count per level");
    for (long m : samples)
        if (m < 1) throw DataError("all sample counts must be >= 1");
    const std::vector<double> r = level_ratios();
    if (static_cast<int>(r.size()) != levels)
        throw DataError("plan needs one ratio per correction level");
    for (double ri : r)
        if (!(ri >= 1.0)) throw DataError("mesh sizes must be non-increasing (r >= 1)");
}

double rmse_bound_mc(const ErrorModel& model, const McPlan& plan) {
    model.validate();
    return model.c1 * std::pow(plan.h, model.alpha) +
           model.c00 / std::sqrt(static_cast<double>(plan.samples));
}

double rmse_bound_mlmc(const ErrorModel& model, const MlmcPlan& plan) {
    model.validate();
    plan.validate();
    const std::vector<double> h = plan.mesh_sizes();
    double bound = model.c1 * std::pow(h[plan.levels], model.alpha) +
                   model.c00 / std::sqrt(static_cast<double>(plan.samples[0]));
    for (int l = 1; l <= plan.levels; ++l)
        bound += model.c0 * std::pow(h[l - 1], model.beta) /
                 std::sqrt(static_cast<double>(plan.samples[l]));
    return bound;
}

double fit_sigma(const std::vector<double>& values) {
    if (values.size() < 2)
        throw StatisticsError("standard deviation needs at least two values");
    return sample_stddev(values);
}

namespace {

using Clock = std::chrono::steady_clock;

// Evaluates body(i, omega_seed(i)) for all i, optionally re-drawing a failed
// sample once from the reserved retry stream.
std::vector<double> evaluate_block(const std::function<double(std::uint64_t)>& body,
                                   const std::function<std::uint64_t(long)>& seed_of,
                                   std::uint64_t global_seed, long m, unsigned threads,
                                   int level, bool retry_failed,
                                   std::atomic<long>* retried) {
    std::vector<double> values(m);
    parallel_for_indexed(static_cast<std::size_t>(m), threads, [&](std::size_t idx) {
        const long i = static_cast<long>(idx);
        try {
            values[idx] = body(seed_of(i));
            return;
        } catch (const std::exception& e) {
            if (!retry_failed)
                throw EstimationError("sampler failed at level " + std::to_string(level) +
                                          ", sample " + std::to_string(i) + ": " + e.what(),
                                      level, i);
        }
        retried->fetch_add(1);
        try {
            values[idx] = body(retry_seed(global_seed, level, i));
        } catch (const std::exception& e) {
            throw EstimationError("sampler failed twice at level " + std::to_string(level) +
                                      ", sample " + std::to_string(i) + ": " + e.what(),
                                  level, i);
        }
    });
    return values;
}

}  // namespace

McEstimate mc_estimate(const QoiEvaluator& qoi, int level, long samples,
                       std::uint64_t global_seed, unsigned threads, bool retry_failed) {
    if (samples < 1) throw StatisticsError("sample count must be >= 1");
    const auto t0 = Clock::now();
    std::atomic<long> retried{0};
    const std::vector<double> values = evaluate_block(
        [&](std::uint64_t s) { return qoi(level, s); },
        [&](long i) { return sample_seed(global_seed, level, i); }, global_seed, samples,
        threads, level, retry_failed, &retried);
    McEstimate e;
    e.samples = samples;
    e.retried = retried.load();
    e.mean = mean(values);
    e.sigma = samples > 1 ? sample_stddev(values) : 0.0;
    e.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return e;
}

MlmcEstimate mlmc_estimate(const QoiEvaluator& qoi, const MlmcPlan& plan,
                           std::uint64_t global_seed, unsigned threads,
                           bool shared_seeds, bool retry_failed) {
    plan.validate();
    MlmcEstimate est;
    NeumaierSum total;
    std::atomic<long> retried{0};
    for (int l = 0; l <= plan.levels; ++l) {
        const auto t0 = Clock::now();
        const long m = plan.samples[l];
        const std::vector<double> values = evaluate_block(
            [&](std::uint64_t s) {
                if (l == 0) return qoi(0, s);
                return qoi(l, s) - qoi(l - 1, s);  // same omega on both levels
            },
            [&](long i) { return sample_seed(global_seed, l, i, shared_seeds); },
            global_seed, m, threads, l, retry_failed, &retried);
        LevelStats stats;
        stats.level = l;
        stats.samples = m;
        stats.mean = mean(values);
        stats.sd = m > 1 ? sample_stddev(values) : 0.0;
        stats.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        est.per_level.push_back(stats);
        total.add(stats.mean);
    }
    est.mean = total.value();
    est.retried = retried.load();
    return est;
}

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json plan_to_json_object(const MlmcPlan& plan) {
    ordered_json j;
    j["levels"] = plan.levels;
    j["h0"] = plan.h0;
    j["variant"] = plan.geometric ? "geometric" : "free";
    if (plan.geometric)
        j["ratio"] = plan.ratio;
    else
        j["ratios"] = plan.ratios;
    j["samples"] = plan.samples;
    j["mesh_sizes"] = plan.mesh_sizes();
    return j;
}

}  // namespace

std::string to_json(const MlmcPlan& plan) { return plan_to_json_object(plan).dump(2); }

MlmcPlan mlmc_plan_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw DataError(std::string("invalid plan JSON: ") + e.what());
    }
    MlmcPlan plan;
    plan.levels = j.at("levels").get<int>();
    plan.h0 = j.at("h0").get<double>();
    plan.geometric = j.at("variant").get<std::string>() == "geometric";
    if (plan.geometric)
        plan.ratio = j.value("ratio", 2.0);
    else
        plan.ratios = j.at("ratios").get<std::vector<double>>();
    plan.samples = j.at("samples").get<std::vector<long>>();
    plan.validate();
    return plan;
}

std::string to_json(const MlmcEstimate& estimate, const MlmcPlan& plan) {
    ordered_json j;
    j["plan"] = plan_to_json_object(plan);
    j["mean"] = estimate.mean;
    j["retried"] = estimate.retried;
    ordered_json levels = ordered_json::array();
    for (const auto& s : estimate.per_level) {
        ordered_json l;
        l["level"] = s.level;
        l["mean"] = s.mean;
        l["sd"] = s.sd;
        l["samples"] = s.samples;
        l["seconds"] = s.seconds;
        levels.push_back(l);
    }
    j["per_level"] = levels;
    return j.dump(2);
}

}  // namespace mlmcfem
