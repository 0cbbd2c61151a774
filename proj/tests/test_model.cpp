#include <doctest.h>

#include <cmath>

#include "mvfilter/model.hpp"
#include "mvfilter/paths.hpp"
#include "test_helpers.hpp"

using namespace mvf;

TEST_CASE("ou/tanh model validates cleanly") {
    const ModelSpec model = model_from_json(mvft::ou_tanh_json());
    const ValidationReport report = validate_model(model, 2000, 7);
    CHECK(report.passed);
    CHECK(report.checked_points == 2000);
    CHECK(report.violations.empty());

    const ValidationReport again = validate_model(model, 2000, 7);
    CHECK(again.violations.size() == report.violations.size());
    CHECK(again.checked_points == report.checked_points);
}

TEST_CASE("undeclared linear sensor growth is flagged") {
    // beta(x) = x with a declared bound of 1 and no waiver: |x| > 1 happens
    // inside the probe box
    ModelSpec model = model_from_json(mvft::linear_gaussian_json());
    model.sensor_bound_waiver = false;
    model.bounds.beta = 1.0;
    const ValidationReport report = validate_model(model, 500, 7);
    CHECK_FALSE(report.passed);
    CHECK(!report.violations.empty());
    CHECK(report.violations.front().condition == "beta_bound");
}

TEST_CASE("waived linear sensor passes with warnings") {
    ModelSpec model = model_from_json(mvft::linear_gaussian_json());
    model.bounds.beta = 1.0;  // deliberately too small; waiver demotes it
    const ValidationReport report = validate_model(model, 500, 7);
    CHECK(report.passed);
    CHECK(!report.warnings.empty());
}

TEST_CASE("degenerate diffusion fails ellipticity") {
    std::string cfg = mvft::ou_tanh_json();
    const auto pos = cfg.find("\"sigma\": 1.0");
    REQUIRE(pos != std::string::npos);
    cfg.replace(pos, 12, "\"sigma\": 0.0");
    const ModelSpec model = model_from_json(cfg);
    const ValidationReport report = validate_model(model, 100, 7);
    CHECK_FALSE(report.passed);
    bool found = false;
    for (const auto& v : report.violations) {
        found = found || v.condition == "ellipticity_positive" || v.condition == "ellipticity";
    }
    CHECK(found);
}

TEST_CASE("mollified potential reduces to alpha without sensors") {
    const ModelSpec model = model_from_json(mvft::const_alpha_json(0.75));
    const BrownianRecord w = sample_brownian(1, 1.0, 0.01, 3);
    const MollifiedPath path = mollify(w, 0.1);
    for (double s : {0.0, 0.31, 0.99}) {
        for (double x : {-2.0, 0.0, 1.5}) {
            CHECK(alpha_delta(model, path, s, {&x, 1}) == 0.75);
        }
    }
}

TEST_CASE("constant sensor worked value") {
    // alpha = 0, beta = c: the potential is -c^2/2 + c * slope
    const double c = 1.3;
    const ModelSpec model = mvft::const_sensor_model(c);
    const BrownianRecord w = sample_brownian(1, 1.0, 0.01, 11);
    const MollifiedPath path = mollify(w, 0.1);
    for (double s : {0.05, 0.55}) {
        const double slope = path.slope(s, 0);
        const double x = 0.4;
        CHECK(alpha_delta(model, path, s, {&x, 1}) ==
              doctest::Approx(-0.5 * c * c + c * slope).epsilon(1e-14));
    }
}

TEST_CASE("linear sensor vanishes at the origin") {
    const ModelSpec model = model_from_json(mvft::linear_gaussian_json());
    const BrownianRecord w = sample_brownian(1, 1.0, 0.01, 11);
    const MollifiedPath path = mollify(w, 0.1);
    const double x = 0.0;
    CHECK(alpha_delta(model, path, 0.5, {&x, 1}) == 0.0);
}

TEST_CASE("potential is affine in the slope") {
    const ModelSpec model = model_from_json(mvft::ou_tanh_json());
    const BrownianRecord w = sample_brownian(1, 1.0, 0.01, 19);

    // same model, three mollification steps: the value at fixed (s, x) as a
    // function of the local slope must be affine with coefficient beta(x)
    const double x = 0.8;
    const double s = 0.42;
    std::vector<std::pair<double, double>> samples;  // (slope, value)
    for (double delta : {0.05, 0.1, 0.25}) {
        const MollifiedPath path = mollify(w, delta);
        samples.emplace_back(path.slope(s, 0), alpha_delta(model, path, s, {&x, 1}));
    }
    const double beta = std::tanh(x);
    for (std::size_t i = 1; i < samples.size(); ++i) {
        const double predicted = samples[0].second + beta * (samples[i].first - samples[0].first);
        CHECK(samples[i].second == doctest::Approx(predicted).epsilon(1e-12));
    }
}

TEST_CASE("potential is piecewise constant in time") {
    const ModelSpec model = model_from_json(mvft::ou_tanh_json());
    const BrownianRecord w = sample_brownian(1, 1.0, 0.01, 23);
    const MollifiedPath path = mollify(w, 0.1);
    const double x = -0.3;
    const double inside_a = alpha_delta(model, path, 0.21, {&x, 1});
    const double inside_b = alpha_delta(model, path, 0.29, {&x, 1});
    CHECK(inside_a == inside_b);
    CHECK_THROWS(alpha_delta(model, path, 1.5, {&x, 1}));
}

TEST_CASE("malformed model configs are configuration errors") {
    CHECK_THROWS_AS(model_from_json("{"), ConfigError);
    CHECK_THROWS_AS(model_from_json(R"({"d": 0})"), ConfigError);
    CHECK_THROWS_AS(model_from_json(R"({"drift": {"family": "nope"}})"), ConfigError);
    CHECK_THROWS_AS(model_from_json(R"({"initial_law": {"family": "gaussian", "cov": -1.0}})"), ConfigError);
}

TEST_CASE("double well drift family") {
    const ModelSpec model = model_from_json(R"({
      "d": 1, "m": 1,
      "drift": {"family": "double_well", "theta": 1.0},
      "diffusion": {"family": "constant", "sigma": 0.7},
      "alpha": {"family": "gaussian_bump", "height": 0.5, "width": 1.0},
      "sensor": {"family": "bounded_sensor_tanh", "gain": 0.8, "scale": 2.0},
      "initial_law": {"family": "gaussian", "mean": 0.0, "cov": 1.0},
      "probe_box": {"halfwidth": 3.0}
    })");
    const ValidationReport report = validate_model(model, 1000, 3);
    CHECK(report.passed);

    double b = 0.0;
    const double x = 0.5;
    model.drift(0.0, {&x, 1}, {&b, 1});
    CHECK(b == doctest::Approx(0.5 - 0.125).epsilon(1e-15));
    CHECK(model.alpha(0.0, {&x, 1}) == doctest::Approx(0.5 * std::exp(-0.125)).epsilon(1e-12));
}
