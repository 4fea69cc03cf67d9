#include "mlmcfem/calibration.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "mlmcfem/numerics.hpp"
#include "mlmcfem/parallel.hpp"

namespace mlmcfem {

double CostModel::work(double samples, double h) const {
    double w = 0.0;
    for (const auto& t : terms) w += t.mu * samples * std::pow(h, -t.gamma);
    return w;
}

double CostModel::work(const MlmcPlan& plan) const {
    const std::vector<double> h = plan.mesh_sizes();
    double w = 0.0;
    for (int l = 0; l <= plan.levels; ++l)
        w += work(static_cast<double>(plan.samples[l]), h[l]);
    return w;
}

void CostModel::validate() const {
    if (terms.empty()) throw DataError("cost model has no terms");
    for (const auto& t : terms)
        if (!(t.mu > 0.0) || !(t.gamma > 0.0))
            throw DataError("cost term " + t.label + " needs mu > 0 and gamma > 0");
}

std::pair<double, double> fit_discretization(
    const std::vector<std::pair<double, double>>& pairs, FitDiagnostics* diagnostics) {
    if (pairs.size() < 3) throw DataError("discretization fit needs >= 3 mesh sizes");
    std::vector<double> h, err;
    for (const auto& [hi, ei] : pairs) {
        if (!(hi > 0.0)) throw DataError("non-positive mesh size in discretization fit");
        if (!(ei > 0.0)) throw DataError("non-positive error in discretization fit");
        h.push_back(hi);
        err.push_back(ei);
    }
    const auto [h_lo, h_hi] = std::minmax_element(h.begin(), h.end());
    if (*h_hi / *h_lo < 4.0 - 1e-9)
        throw DataError("discretization fit needs sizes spanning a factor of 4");
    const PowerFit f = fit_power_law(h, err);
    if (!(f.exponent > 0.0))
        throw DataError("discretization errors do not decay with h");
    if (diagnostics)
        *diagnostics = {"discretization", f.r_squared, static_cast<int>(h.size()), *h_lo,
                        *h_hi};
    return {f.exponent, f.prefactor};
}

LevelVarianceFit fit_level_variance(double sigma_level0,
                                    const std::vector<std::pair<double, double>>& pairs,
                                    FitDiagnostics* diagnostics) {
    if (pairs.size() < 3) throw DataError("level-variance fit needs >= 3 difference levels");
    if (!(sigma_level0 >= 0.0)) throw DataError("negative level-0 deviation");
    std::vector<double> h, sd;
    for (const auto& [hi, si] : pairs) {
        if (!(hi > 0.0) || !(si > 0.0))
            throw DataError("level-variance fit requires positive data");
        h.push_back(hi);
        sd.push_back(si);
    }
    const PowerFit f = fit_power_law(h, sd);
    if (diagnostics) {
        const auto [lo, hi] = std::minmax_element(h.begin(), h.end());
        *diagnostics = {"level_variance", f.r_squared, static_cast<int>(h.size()), *lo, *hi};
    }
    return {f.exponent, f.prefactor, sigma_level0};
}

CostModel fit_cost_model(const std::vector<ComponentTiming>& timings,
                         std::vector<FitDiagnostics>* diagnostics) {
    if (diagnostics) diagnostics->clear();
    CostModel model;
    for (const auto& c : timings) {
        if (c.h.size() < 3 || c.h.size() != c.seconds.size() ||
            c.h.size() != c.samples.size())
            throw DataError("cost fit for " + c.label + " needs >= 3 matched sizes");
        double total = 0.0;
        std::vector<double> per_sample(c.h.size());
        for (std::size_t i = 0; i < c.h.size(); ++i) {
            total += c.seconds[i];
            if (c.samples[i] < 1) throw DataError("cost fit sample counts must be >= 1");
            per_sample[i] = c.seconds[i] / static_cast<double>(c.samples[i]);
        }
        if (total < 1e-3)
            throw MeasurementError("component " + c.label +
                                   " ran under 1 ms total; increase the sample count");
        for (double s : per_sample)
            if (!(s > 0.0))
                throw MeasurementError("component " + c.label +
                                       " has a zero timing; increase the sample count");
        const PowerFit f = fit_power_law(c.h, per_sample);
        const double gamma = -f.exponent;
        if (!(gamma > 0.0))
            throw MeasurementError("component " + c.label +
                                   " does not get cheaper with h; timings too noisy");
        model.terms.push_back({c.label, f.prefactor, gamma});
        if (diagnostics) {
            const auto [lo, hi] = std::minmax_element(c.h.begin(), c.h.end());
            diagnostics->push_back(
                {c.label, f.r_squared, static_cast<int>(c.h.size()), *lo, *hi});
        }
    }
    model.validate();
    return model;
}

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json diag_to_json(const FitDiagnostics& d) {
    ordered_json j;
    j["label"] = d.label;
    j["r_squared"] = d.r_squared;
    j["points"] = d.points;
    j["h_min"] = d.h_min;
    j["h_max"] = d.h_max;
    return j;
}

FitDiagnostics diag_from_json(const ordered_json& j) {
    FitDiagnostics d;
    d.label = j.value("label", "");
    d.r_squared = j.value("r_squared", 0.0);
    d.points = j.value("points", 0);
    d.h_min = j.value("h_min", 0.0);
    d.h_max = j.value("h_max", 0.0);
    return d;
}

}  // namespace

std::string to_json(const CalibrationReport& r) {
    ordered_json j;
    j["error_model"] = {{"alpha", r.error_model.alpha}, {"c1", r.error_model.c1},
                        {"beta", r.error_model.beta},   {"c0", r.error_model.c0},
                        {"c00", r.error_model.c00}};
    ordered_json terms = ordered_json::array();
    for (const auto& t : r.cost_model.terms)
        terms.push_back({{"label", t.label}, {"mu", t.mu}, {"gamma", t.gamma}});
    j["cost_model"] = {{"terms", terms}};
    j["diagnostics"] = {{"discretization", diag_to_json(r.discretization)},
                        {"variance", diag_to_json(r.variance)}};
    ordered_json costs = ordered_json::array();
    for (const auto& d : r.cost_fits) costs.push_back(diag_to_json(d));
    j["diagnostics"]["cost"] = costs;
    return j.dump(2);
}

CalibrationReport calibration_report_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw DataError(std::string("invalid calibration report JSON: ") + e.what());
    }
    CalibrationReport r;
    const auto& em = j.at("error_model");
    r.error_model = {em.at("alpha"), em.at("c1"), em.at("beta"), em.at("c0"),
                     em.at("c00")};
    for (const auto& t : j.at("cost_model").at("terms"))
        r.cost_model.terms.push_back(
            {t.at("label").get<std::string>(), t.at("mu"), t.at("gamma")});
    if (j.contains("diagnostics")) {
        const auto& d = j["diagnostics"];
        if (d.contains("discretization")) r.discretization = diag_from_json(d["discretization"]);
        if (d.contains("variance")) r.variance = diag_from_json(d["variance"]);
        if (d.contains("cost"))
            for (const auto& c : d["cost"]) r.cost_fits.push_back(diag_from_json(c));
    }
    r.error_model.validate();
    r.cost_model.validate();
    return r;
}

DiscretizationStudy run_discretization_study(const DeviceConfig& config,
                                             const std::vector<double>& level_h,
                                             double reference_h, int seeds,
                                             std::uint64_t global_seed,
                                             unsigned threads) {
    if (level_h.size() < 3) throw DataError("discretization study needs >= 3 levels");
    std::vector<double> targets = level_h;
    targets.push_back(reference_h);
    const DeviceSampler sampler = DeviceSampler::from_targets(config, targets);

    const int n_levels = static_cast<int>(level_h.size());
    const int ref = n_levels;
    DiscretizationStudy study;
    study.h_reference = sampler.mesh(ref).h;
    study.per_seed_qoi.assign(n_levels + 1, std::vector<double>(seeds, 0.0));

    // one work item per (level, seed); identical omega across all levels
    const std::size_t jobs = static_cast<std::size_t>(n_levels + 1) * seeds;
    parallel_for_indexed(jobs, threads, [&](std::size_t j) {
        const int level = static_cast<int>(j) / seeds;
        const int s = static_cast<int>(j) % seeds;
        const std::uint64_t omega = sample_seed(global_seed, 0, s, /*share=*/true);
        study.per_seed_qoi[level][s] = sampler(level, omega);
    });

    for (int l = 0; l < n_levels; ++l) {
        NeumaierSum diff;
        for (int s = 0; s < seeds; ++s)
            diff.add(study.per_seed_qoi[l][s] - study.per_seed_qoi[ref][s]);
        study.h.push_back(sampler.mesh(l).h);
        study.error.push_back(std::abs(diff.value() / seeds));
    }
    return study;
}

VarianceStudy run_variance_study(const DeviceConfig& config, double h0, double ratio,
                                 int levels, int seeds, std::uint64_t global_seed,
                                 unsigned threads) {
    if (levels < 1) throw DataError("variance study needs >= 1 difference level");
    const DeviceSampler sampler =
        DeviceSampler::from_plan(config, h0, std::vector<double>(levels, ratio));

    VarianceStudy study;
    {
        std::vector<double> q0(seeds);
        parallel_for_indexed(seeds, threads, [&](std::size_t s) {
            q0[s] = sampler(0, sample_seed(global_seed, 0, s));
        });
        study.sigma0 = sample_stddev(q0);
    }
    for (int l = 1; l <= levels; ++l) {
        std::vector<double> diff(seeds);
        parallel_for_indexed(seeds, threads, [&](std::size_t s) {
            const std::uint64_t omega = sample_seed(global_seed, l, s);
            diff[s] = sampler(l, omega) - sampler(l - 1, omega);
        });
        study.h_coarse.push_back(sampler.mesh(l - 1).h);
        study.sigma_diff.push_back(sample_stddev(diff));
    }
    return study;
}

std::vector<ComponentTiming> run_timing_study(const DeviceConfig& config,
                                              const std::vector<double>& level_h,
                                              int samples_per_level,
                                              std::uint64_t global_seed) {
    const DeviceSampler sampler = DeviceSampler::from_targets(config, level_h);
    std::vector<ComponentTiming> out(4);
    out[0].label = "poisson_assembly";
    out[1].label = "poisson_solve";
    out[2].label = "dd_assembly";
    out[3].label = "dd_solve";

    for (int l = 0; l < static_cast<int>(level_h.size()); ++l) {
        // warm-up solve, then three repetitions; medians per component
        GummelStats warm;
        sampler.evaluate_with_stats(l, sample_seed(global_seed, l, 0), &warm);

        std::vector<std::array<double, 4>> reps;
        for (int rep = 0; rep < 3; ++rep) {
            CostBreakdown acc;
            for (int s = 0; s < samples_per_level; ++s) {
                GummelStats stats;
                sampler.evaluate_with_stats(l, sample_seed(global_seed, l, s), &stats);
                acc += stats.cost;
            }
            reps.push_back({acc.poisson_assembly_s, acc.poisson_solve_s, acc.dd_assembly_s,
                            acc.dd_solve_s});
        }
        std::array<double, 4> median;
        for (int k = 0; k < 4; ++k) {
            std::array<double, 3> v{reps[0][k], reps[1][k], reps[2][k]};
            std::sort(v.begin(), v.end());
            median[k] = v[1];
        }
        for (int k = 0; k < 4; ++k) {
            out[k].h.push_back(sampler.mesh(l).h);
            out[k].samples.push_back(samples_per_level);
            out[k].seconds.push_back(median[k]);
        }
    }
    return out;
}

}  // namespace mlmcfem
