#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mlmcfem/calibration.hpp"
#include "mlmcfem/rng.hpp"
#include "test_support.hpp"

using namespace mlmcfem;
using mlmcfem::testing::fast_device;

TEST_CASE("discretization fit") {
    SUBCASE("exact power law 2h") {
        const auto [alpha, c1] =
            fit_discretization({{1.0, 2.0}, {0.5, 1.0}, {0.25, 0.5}, {0.125, 0.25}});
        CHECK(alpha == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(c1 == doctest::Approx(2.0).epsilon(1e-12));
    }
    SUBCASE("reproduces a 0.96 order on synthetic data") {
        std::vector<std::pair<double, double>> pairs;
        for (double h : {4.0, 2.0, 1.0, 0.5, 0.25})
            pairs.push_back({h, 3.0 * std::pow(h, 0.96)});
        FitDiagnostics diag;
        const auto [alpha, c1] = fit_discretization(pairs, &diag);
        CHECK(alpha == doctest::Approx(0.96).epsilon(1e-10));
        CHECK(c1 == doctest::Approx(3.0).epsilon(1e-10));
        CHECK(diag.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("input validation") {
        CHECK_THROWS_AS(fit_discretization({{1.0, 1.0}, {0.5, 0.5}}), DataError);
        CHECK_THROWS_AS(fit_discretization({{1.0, 1.0}, {0.8, 0.9}, {0.5, 0.5}}),
                        DataError);  // span below 4
        CHECK_THROWS_AS(fit_discretization({{1.0, -1.0}, {0.5, 0.5}, {0.25, 0.2}}),
                        DataError);
        // errors growing with refinement: negative order rejected
        CHECK_THROWS_AS(fit_discretization({{1.0, 0.1}, {0.5, 0.2}, {0.2, 0.5}}),
                        DataError);
    }
    SUBCASE("rescaling all errors scales c1 and keeps alpha") {
        std::vector<std::pair<double, double>> pairs{{2.0, 1.4}, {1.0, 0.6}, {0.4, 0.33}};
        const auto [a0, c0] = fit_discretization(pairs);
        for (auto& p : pairs) p.second *= 7.5;
        const auto [a1, c1] = fit_discretization(pairs);
        CHECK(a1 == doctest::Approx(a0).epsilon(1e-12));
        CHECK(c1 == doctest::Approx(7.5 * c0).epsilon(1e-12));
    }
}

TEST_CASE("level variance fit") {
    SUBCASE("exact decay") {
        const LevelVarianceFit f = fit_level_variance(
            0.197, {{1.0, 0.5}, {0.5, 0.25}, {0.25, 0.125}});
        CHECK(f.beta == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(f.c0 == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(f.c00 == 0.197);
    }
    SUBCASE("needs three difference levels") {
        CHECK_THROWS_AS(fit_level_variance(0.1, {{1.0, 0.5}, {0.5, 0.25}}), DataError);
    }
    SUBCASE("rescaling the deviations scales c0 and keeps beta") {
        std::vector<std::pair<double, double>> pairs{{2.0, 0.9}, {1.0, 0.4}, {0.5, 0.21}};
        const LevelVarianceFit base = fit_level_variance(0.3, pairs);
        for (auto& p : pairs) p.second *= 5.0;
        const LevelVarianceFit scaled = fit_level_variance(0.3, pairs);
        CHECK(scaled.beta == doctest::Approx(base.beta).epsilon(1e-12));
        CHECK(scaled.c0 == doctest::Approx(5.0 * base.c0).epsilon(1e-12));
    }
}

TEST_CASE("cost model fit") {
    SUBCASE("exact synthetic timings") {
        ComponentTiming t;
        t.label = "poisson_solve";
        for (double h : {1.0, 0.5, 0.25, 0.125}) {
            t.h.push_back(h);
            t.samples.push_back(10);
            t.seconds.push_back(4.0 * 10 * std::pow(h, -2.0));
        }
        const CostModel m = fit_cost_model({t});
        CHECK(m.terms[0].mu == doctest::Approx(4.0).epsilon(1e-10));
        CHECK(m.terms[0].gamma == doctest::Approx(2.0).epsilon(1e-10));
    }
    SUBCASE("round trip within 1e-8") {
        CounterRng rng(14);
        for (int trial = 0; trial < 20; ++trial) {
            CostModel model;
            model.terms = {{"a", 0.1 + rng.next_unit(), 0.5 + 2.5 * rng.next_unit()},
                           {"b", 0.1 + rng.next_unit(), 0.5 + 2.5 * rng.next_unit()}};
            std::vector<ComponentTiming> timings;
            for (const auto& term : model.terms) {
                ComponentTiming t;
                t.label = term.label;
                for (double h : {2.0, 1.0, 0.5, 0.25}) {
                    t.h.push_back(h);
                    t.samples.push_back(7);
                    t.seconds.push_back(term.mu * 7 * std::pow(h, -term.gamma));
                }
                timings.push_back(t);
            }
            const CostModel back = fit_cost_model(timings);
            for (std::size_t k = 0; k < model.terms.size(); ++k) {
                CHECK(back.terms[k].mu ==
                      doctest::Approx(model.terms[k].mu).epsilon(1e-8));
                CHECK(back.terms[k].gamma ==
                      doctest::Approx(model.terms[k].gamma).epsilon(1e-8));
            }
        }
    }
    SUBCASE("held-out prediction within 30 percent under noise") {
        CounterRng rng(3);
        CostModel truth;
        truth.terms = {{"w", 2.0, 2.2}};
        ComponentTiming t;
        t.label = "w";
        for (double h : {4.0, 2.0, 1.0, 0.5}) {
            t.h.push_back(h);
            t.samples.push_back(5);
            t.seconds.push_back(truth.work(5, h) * (1.0 + 0.05 * (rng.next_unit() - 0.5)));
        }
        const CostModel fitted = fit_cost_model({t});
        for (double h_new : {0.35, 0.25}) {  // one octave below the fit range
            const double predicted = fitted.work(5, h_new);
            const double actual = truth.work(5, h_new);
            CHECK(std::abs(predicted - actual) / actual < 0.30);
        }
    }
    SUBCASE("sub-millisecond components are measurement errors") {
        ComponentTiming t;
        t.label = "dd_assembly";
        for (double h : {1.0, 0.5, 0.25}) {
            t.h.push_back(h);
            t.samples.push_back(1);
            t.seconds.push_back(1e-5);
        }
        CHECK_THROWS_AS(fit_cost_model({t}), MeasurementError);
    }
}

TEST_CASE("calibration report json round trip") {
    CalibrationReport r;
    r.error_model = {0.96, 0.9, 1.7, 0.3, 0.197};
    r.cost_model.terms = {{"poisson_assembly", 1e-6, 2.0},
                          {"poisson_solve", 2e-7, 2.6},
                          {"dd_assembly", 3e-6, 2.1},
                          {"dd_solve", 4e-7, 2.4}};
    r.discretization = {"discretization", 0.99, 4, 0.6, 5.0};
    r.variance = {"level_variance", 0.95, 3, 1.2, 5.0};
    r.cost_fits = {{"poisson_assembly", 0.98, 4, 0.6, 5.0}};
    const std::string text = to_json(r);
    const CalibrationReport back = calibration_report_from_json(text);
    CHECK(back.error_model.alpha == r.error_model.alpha);
    CHECK(back.error_model.c00 == r.error_model.c00);
    CHECK(back.cost_model.terms.size() == 4);
    CHECK(back.cost_model.terms[2].label == "dd_assembly");
    CHECK(back.cost_model.terms[2].mu == 3e-6);
    CHECK(to_json(back) == text);
}

TEST_CASE("device studies on the coarse device") {
    const DeviceConfig cfg = fast_device();
    const unsigned threads = 2;

    SUBCASE("discretization study errors decay and fit") {
        // realized sizes must span a factor of 4 for the fit contract
        const std::vector<double> ladder{7.0, 3.2, 1.45};
        const DiscretizationStudy study =
            run_discretization_study(cfg, ladder, 0.7, 6, 2024, threads);
        REQUIRE(study.h.size() == 3);
        for (double e : study.error) CHECK(e > 0.0);
        std::vector<std::pair<double, double>> pairs;
        for (std::size_t i = 0; i < study.h.size(); ++i)
            pairs.push_back({study.h[i], study.error[i]});
        const auto [alpha, c1] = fit_discretization(pairs);
        CHECK(alpha > 0.3);   // sane order on the coarse ladder
        CHECK(alpha < 2.5);
        CHECK(c1 > 0.0);
        // identical seed reruns are bit-identical
        const DiscretizationStudy again =
            run_discretization_study(cfg, ladder, 0.7, 6, 2024, 1);
        CHECK(again.error == study.error);
    }

    SUBCASE("variance study decays with level") {
        const VarianceStudy study = run_variance_study(cfg, 7.0, 2.0, 3, 16, 99, threads);
        CHECK(study.sigma0 > 0.0);
        REQUIRE(study.sigma_diff.size() == 3);
        for (std::size_t l = 1; l < study.sigma_diff.size(); ++l)
            CHECK(study.sigma_diff[l] <= study.sigma_diff[l - 1] * 1.05);
        const LevelVarianceFit f = fit_level_variance(
            study.sigma0, {{study.h_coarse[0], study.sigma_diff[0]},
                           {study.h_coarse[1], study.sigma_diff[1]},
                           {study.h_coarse[2], study.sigma_diff[2]}});
        CHECK(f.beta > 0.0);
    }

    SUBCASE("timing study produces a positive cost model") {
        const std::vector<ComponentTiming> timings =
            run_timing_study(cfg, {5.0, 2.5, 1.25}, 3, 7);
        REQUIRE(timings.size() == 4);
        const CostModel model = fit_cost_model(timings);
        for (const auto& term : model.terms) {
            CHECK(term.mu > 0.0);
            CHECK(term.gamma > 0.3);
            CHECK(term.gamma < 4.5);
        }
    }
}
