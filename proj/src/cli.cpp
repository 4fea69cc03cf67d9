#include "mlmcfem/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mlmcfem/numerics.hpp"
#include "mlmcfem/parallel.hpp"
#include "mlmcfem/stochastic.hpp"

namespace mlmcfem {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void RunConfig::validate() const {
    for (double e : epsilons)
        if (!(e > 0.0)) throw ConfigError("tolerances must be strictly positive");
    for (std::size_t i = 1; i < epsilons.size(); ++i)
        if (!(epsilons[i] < epsilons[i - 1]))
            throw ConfigError("tolerances must be sorted strictly descending");
    if (variant != "mc" && variant != "geo" && variant != "free" && variant != "all")
        throw ConfigError("variant must be one of mc, geo, free, all");
    if (l_max < 0) throw ConfigError("lmax must be >= 0");
    if (calib_levels < 3) throw ConfigError("calibration needs >= 3 levels");
}

unsigned RunConfig::effective_threads() const {
    return threads == 0 ? default_thread_count() : threads;
}

DeviceConfig device_config_for(const RunConfig& run) {
    DeviceConfig device =
        run.config_path.empty() ? default_device_config() : load_device_config(run.config_path);
    return device;
}

namespace {

void ensure_writable_out_dir(const RunConfig& run) {
    fs::create_directories(run.out_dir);
    const fs::path probe = fs::path(run.out_dir) / ".write_probe";
    std::ofstream f(probe);
    if (!f) throw ConfigError("output directory is not writable: " + run.out_dir);
    f.close();
    fs::remove(probe);
}

RunConfig with_config_overrides(const RunConfig& run) {
    RunConfig r = run;
    if (!run.config_path.empty()) {
        const ConfigFile f = parse_config_file(run.config_path);
        r.calib_levels = static_cast<int>(f.number("calibration", "levels", r.calib_levels));
        r.calib_ratio = f.number("calibration", "ratio", r.calib_ratio);
        r.calib_seeds = static_cast<int>(f.number("calibration", "seeds", r.calib_seeds));
        r.reference_factor =
            f.number("calibration", "reference_factor", r.reference_factor);
        r.variance_levels =
            static_cast<int>(f.number("calibration", "variance_levels", r.variance_levels));
        r.variance_seeds =
            static_cast<int>(f.number("calibration", "variance_seeds", r.variance_seeds));
        r.timing_samples =
            static_cast<int>(f.number("calibration", "timing_samples", r.timing_samples));
    }
    return r;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path.string());
    f << content;
}

std::string read_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string format_number(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

std::string eps_tag(double eps) {
    std::ostringstream ss;
    ss << eps;
    std::string s = ss.str();
    for (char& c : s)
        if (c == '.') c = 'p';
    return s;
}

}  // namespace

int cmd_calibrate(const RunConfig& run_in) {
    const RunConfig run = with_config_overrides(run_in);
    run.validate();
    const DeviceConfig device = device_config_for(run);
    ensure_writable_out_dir(run);

    if (run.dry_run) {
        const TriMesh m = build_device_mesh(device.geometry, device.h0);
        validate_mesh(m);
        return kExitOk;
    }

    const unsigned threads = run.effective_threads();
    std::vector<double> level_h;
    for (int l = 0; l < run.calib_levels; ++l)
        level_h.push_back(device.h0 / std::pow(run.calib_ratio, l));
    if (!(run.reference_factor > 1.0))
        throw ConfigError("reference_factor must exceed 1");
    const double reference_h = level_h.back() / run.reference_factor;

    const DiscretizationStudy disc = run_discretization_study(
        device, level_h, reference_h, run.calib_seeds, run.seed, threads);

    const VarianceStudy var =
        run_variance_study(device, device.h0, run.calib_ratio, run.variance_levels,
                           run.variance_seeds, run.seed, threads);

    // cost-model timing is single-threaded to avoid interference
    const std::vector<ComponentTiming> timings =
        run_timing_study(device, level_h, run.timing_samples, run.seed);

    CalibrationReport report;
    {
        std::vector<std::pair<double, double>> pairs;
        for (std::size_t i = 0; i < disc.h.size(); ++i)
            pairs.push_back({disc.h[i], disc.error[i]});
        const auto [alpha, c1] = fit_discretization(pairs, &report.discretization);
        report.error_model.alpha = alpha;
        report.error_model.c1 = c1;
    }
    {
        std::vector<std::pair<double, double>> pairs;
        for (std::size_t i = 0; i < var.h_coarse.size(); ++i)
            pairs.push_back({var.h_coarse[i], var.sigma_diff[i]});
        const LevelVarianceFit f = fit_level_variance(var.sigma0, pairs, &report.variance);
        report.error_model.beta = f.beta;
        report.error_model.c0 = f.c0;
        report.error_model.c00 = f.c00;
    }
    report.cost_model = fit_cost_model(timings, &report.cost_fits);

    const fs::path out(run.out_dir);
    write_file(out / "calibration_report.json", to_json(report));

    {
        std::ostringstream csv;
        csv << "# discretization error vs fine reference (h_ref = "
            << format_number(disc.h_reference) << ")\n";
        csv << "h,error\n";
        for (std::size_t i = 0; i < disc.h.size(); ++i)
            csv << format_number(disc.h[i]) << "," << format_number(disc.error[i]) << "\n";
        write_file(out / "discretization.csv", csv.str());
    }
    {
        std::ostringstream csv;
        csv << "# level-0 qoi deviation sigma0 = " << format_number(var.sigma0) << "\n";
        csv << "h_coarse,sigma_diff\n";
        for (std::size_t i = 0; i < var.h_coarse.size(); ++i)
            csv << format_number(var.h_coarse[i]) << ","
                << format_number(var.sigma_diff[i]) << "\n";
        write_file(out / "variance.csv", csv.str());
    }
    {
        std::ostringstream csv;
        csv << "component,h,samples,seconds\n";
        for (const auto& c : timings)
            for (std::size_t i = 0; i < c.h.size(); ++i)
                csv << c.label << "," << format_number(c.h[i]) << "," << c.samples[i]
                    << "," << format_number(c.seconds[i]) << "\n";
        write_file(out / "timings.csv", csv.str());
    }
    return kExitOk;
}

namespace {

std::string join_doubles(const std::vector<double>& v) {
    std::ostringstream ss;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) ss << "|";
        ss << v[i];
    }
    return ss.str();
}

std::string join_longs(const std::vector<long>& v) {
    std::ostringstream ss;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) ss << "|";
        ss << v[i];
    }
    return ss.str();
}

constexpr const char* kSummaryHeader =
    "epsilon,variant,levels,work,h0,ratios,samples,status";

}  // namespace

int cmd_optimize(const RunConfig& run_in, const std::string& report_path,
                 const ErrorModel* inline_error, const CostModel* inline_cost) {
    const RunConfig run = with_config_overrides(run_in);
    run.validate();
    if (run.epsilons.empty()) throw ConfigError("optimize needs at least one tolerance");
    ensure_writable_out_dir(run);

    ErrorModel error;
    CostModel cost;
    if (inline_error && inline_cost) {
        error = *inline_error;
        cost = *inline_cost;
    } else if (!report_path.empty()) {
        const CalibrationReport report = calibration_report_from_json(read_file(report_path));
        error = report.error_model;
        cost = report.cost_model;
    } else {
        throw ConfigError("optimize needs a calibration report or inline constants");
    }
    error.validate();
    cost.validate();
    if (run.dry_run) return kExitOk;

    OptimizerOptions opt;
    opt.threads = run.effective_threads();
    opt.seed = run.seed;
    // plans must be buildable: the mesh cannot be coarser than the smallest
    // geometric feature of the configured device
    opt.h_max = 0.9 * device_config_for(run).geometry.min_feature();

    const fs::path out(run.out_dir);
    std::ostringstream summary;
    summary << kSummaryHeader << "\n";

    const bool do_mc = run.variant == "mc" || run.variant == "all";
    const bool do_geo = run.variant == "geo" || run.variant == "all";
    const bool do_free = run.variant == "free" || run.variant == "all";
    bool any_feasible = false;

    for (double eps : run.epsilons) {
        if (do_mc) {
            try {
                const McPlanSolution sol = optimize_mc(cost, error, eps, opt);
                write_file(out / ("plan_mc_eps" + eps_tag(eps) + ".json"),
                           to_json(sol, eps));
                summary << eps << ",mc,0," << format_number(sol.work) << ","
                        << sol.plan.h << ",-," << sol.plan.samples << ",ok\n";
                any_feasible = true;
            } catch (const Error& e) {
                summary << eps << ",mc,,,,,,infeasible: " << e.what() << "\n";
            }
        }
        for (int variant = 0; variant < 2; ++variant) {
            if (variant == 0 && !do_geo) continue;
            if (variant == 1 && !do_free) continue;
            const HierarchyVariant hv = variant == 0 ? HierarchyVariant::MlmcGeometric
                                                     : HierarchyVariant::MlmcFree;
            const std::string name = variant == 0 ? "geo" : "free";
            try {
                const LevelSelection sel =
                    select_levels(cost, error, eps, hv, run.l_max, opt);
                write_file(out / ("plan_" + name + "_eps" + eps_tag(eps) + ".json"),
                           to_json(sel.best, eps, hv));
                {
                    std::ostringstream curve;
                    curve << "epsilon,levels,work,feasible\n";
                    for (const auto& c : sel.curve)
                        curve << eps << "," << c.levels << ","
                              << (c.feasible ? format_number(c.work) : "inf") << ","
                              << (c.feasible ? 1 : 0) << "\n";
                    write_file(out / ("levels_" + name + "_eps" + eps_tag(eps) + ".csv"),
                               curve.str());
                }
                summary << eps << "," << name << "," << sel.best.plan.levels << ","
                        << format_number(sel.best.work) << "," << sel.best.plan.h0 << ","
                        << join_doubles(sel.best.plan.level_ratios()) << ","
                        << join_longs(sel.best.plan.samples) << ",ok\n";
                any_feasible = true;
            } catch (const Error& e) {
                summary << eps << "," << name << ",,,,,,infeasible: " << e.what() << "\n";
            }
        }
    }
    write_file(out / "summary.csv", summary.str());
    return any_feasible ? kExitOk : kExitInfeasible;
}

int cmd_estimate(const RunConfig& run_in, const std::string& plan_path) {
    const RunConfig run = with_config_overrides(run_in);
    run.validate();
    const DeviceConfig device = device_config_for(run);
    ensure_writable_out_dir(run);

    const ordered_json j = [&] {
        try {
            return ordered_json::parse(read_file(plan_path));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw DataError("invalid plan file: " + std::string(e.what()));
        }
    }();

    MlmcPlan plan;
    double epsilon = 0.0;
    if (j.contains("epsilon")) epsilon = j["epsilon"].get<double>();
    if (j.contains("plan") && j["plan"].contains("levels")) {
        plan = mlmc_plan_from_json(j["plan"].dump());
    } else if (j.contains("plan") && j["plan"].contains("h")) {
        plan.levels = 0;
        plan.h0 = j["plan"]["h"].get<double>();
        plan.samples = {j["plan"]["samples"].get<long>()};
    } else {
        throw DataError("plan file carries no recognizable plan object");
    }
    plan.validate();
    if (run.dry_run) return kExitOk;

    const DeviceSampler sampler =
        DeviceSampler::from_plan(device, plan.h0, plan.level_ratios());
    const QoiEvaluator qoi = [&](int level, std::uint64_t seed) {
        return sampler(level, seed);
    };

    const MlmcEstimate est = mlmc_estimate(qoi, plan, run.seed, run.effective_threads(),
                                           /*shared_seeds=*/false, /*retry_failed=*/true);

    double stat_error = est.per_level[0].sd / std::sqrt(double(est.per_level[0].samples));
    for (std::size_t l = 1; l < est.per_level.size(); ++l)
        stat_error += est.per_level[l].sd / std::sqrt(double(est.per_level[l].samples));

    ordered_json outj = ordered_json::parse(to_json(est, plan));
    outj["epsilon"] = epsilon;
    outj["statistical_error_estimate"] = stat_error;
    outj["realized_mesh_sizes"] = [&] {
        std::vector<double> h;
        for (int l = 0; l < sampler.n_levels(); ++l) h.push_back(sampler.mesh(l).h);
        return h;
    }();
    // assembly+solve seconds per mesh level, comparable to the cost model
    outj["phase_seconds_per_mesh_level"] = sampler.phase_seconds();
    write_file(fs::path(run.out_dir) / "estimate.json", outj.dump(2));
    return kExitOk;
}

int cmd_inspect(const RunConfig& run, int level) {
    run.validate();
    if (level < 0) throw ConfigError("inspect level must be >= 0");
    const DeviceConfig device = device_config_for(run);
    ensure_writable_out_dir(run);

    const double h = device.h0 / std::pow(2.0, level);
    const TriMesh mesh = build_device_mesh(device.geometry, h);
    validate_mesh(mesh);
    {
        std::ofstream out(fs::path(run.out_dir) / "mesh.txt");
        export_mesh_text(mesh, out);
    }
    if (run.dry_run) return kExitOk;

    const DopantSample sample = draw_dopants(sample_seed(run.seed, level, 0),
                                             device.geometry, device.physics.doping,
                                             device.dopants);
    {
        std::ofstream out(fs::path(run.out_dir) / "sample.csv");
        dump_sample_csv(sample, out);
    }
    const SampleFields fields =
        realize_fields(sample, mesh, device.physics, device.dopants);
    const BoundaryData bc = make_boundary_data(device.geometry, device.physics);
    const GummelResult res =
        gummel_iterate(mesh, fields, device.physics, bc, device.solver);
    {
        std::ofstream out(fs::path(run.out_dir) / "fields.csv");
        export_fields_csv(res.fields, mesh, out);
    }
    const double qoi =
        evaluate_qoi(res.fields, mesh, device.physics, device.dopants, device.qoi);
    std::printf("level %d h %.6g dopants %d sweeps %d qoi %.10g\n", level, mesh.h,
                sample.count, res.stats.iterations, qoi);
    return kExitOk;
}

int cmd_compare(const RunConfig& run, const std::vector<std::string>& summary_paths) {
    run.validate();
    if (summary_paths.size() < 2)
        throw ConfigError("compare needs at least two summary files");
    ensure_writable_out_dir(run);

    struct Row {
        double work = std::nan("");
    };
    std::map<double, std::map<std::string, Row>> table;
    std::vector<std::vector<double>> grids;

    for (const auto& path : summary_paths) {
        std::istringstream in(read_file(path));
        std::string line;
        if (!std::getline(in, line) || line != kSummaryHeader)
            throw DataError("summary file " + path + " has an unexpected header");
        std::vector<double> grid;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string eps_s, variant, levels, work_s;
            std::getline(ls, eps_s, ',');
            std::getline(ls, variant, ',');
            std::getline(ls, levels, ',');
            std::getline(ls, work_s, ',');
            const double eps = std::stod(eps_s);
            if (std::find(grid.begin(), grid.end(), eps) == grid.end())
                grid.push_back(eps);
            if (work_s.empty()) continue;  // infeasible row
            const double work = std::stod(work_s);
            auto& cell = table[eps][variant];
            if (!std::isnan(cell.work) && std::abs(cell.work - work) > 1e-9 * work)
                throw DataError("conflicting work values for eps " + eps_s + " variant " +
                                variant);
            cell.work = work;
        }
        grids.push_back(grid);
    }
    for (std::size_t i = 1; i < grids.size(); ++i)
        if (grids[i] != grids[0])
            throw DataError("epsilon grids differ between summaries; cannot join");

    std::ostringstream csv;
    csv << "epsilon,work_mc,work_mlmc_geo,work_mlmc_free,ratio_mc_geo,ratio_mc_free,"
           "ratio_geo_free\n";
    for (auto it = table.rbegin(); it != table.rend(); ++it) {  // descending epsilon
        const auto& cells = it->second;
        auto get = [&](const char* v) {
            auto c = cells.find(v);
            return c == cells.end() ? std::nan("") : c->second.work;
        };
        const double mc = get("mc"), geo = get("geo"), fr = get("free");
        auto put = [&](double v) {
            if (std::isnan(v))
                csv << ",";
            else
                csv << format_number(v) << ",";
        };
        csv << it->first << ",";
        put(mc);
        put(geo);
        put(fr);
        put(mc / geo);
        put(mc / fr);
        csv << (std::isnan(geo / fr) ? "" : format_number(geo / fr)) << "\n";
    }
    write_file(fs::path(run.out_dir) / "comparison.csv", csv.str());
    return kExitOk;
}

}  // namespace mlmcfem
