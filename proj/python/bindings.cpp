#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mvfilter/baselines.hpp"
#include "mvfilter/experiments.hpp"
#include "mvfilter/lambda_op.hpp"
#include "mvfilter/measures.hpp"
#include "mvfilter/mkv.hpp"
#include "mvfilter/model.hpp"
#include "mvfilter/oracles.hpp"
#include "mvfilter/paths.hpp"

namespace py = pybind11;
using namespace mvf;

namespace {

DiscreteMeasure make_measure(std::vector<double> points, std::vector<double> weights, int dim) {
    DiscreteMeasure mu;
    mu.dim = dim;
    mu.points = std::move(points);
    if (weights.empty()) {
        const long n = static_cast<long>(mu.points.size()) / dim;
        mu.weights.assign(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n));
    } else {
        mu.weights = std::move(weights);
    }
    return mu;
}

TestFn wrap_fn(const py::function& f, int dim) {
    return [f, dim](std::span<const double> x) {
        if (dim == 1) return f(x[0]).cast<double>();
        return f(std::vector<double>(x.begin(), x.end())).cast<double>();
    };
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Equal-weight particle approximation of filtering SPDEs";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<NumericError>(m, "NumericError");

    m.def("sample_brownian",
          [](int dim, double horizon, double dt_fine, std::uint64_t seed) {
              const BrownianRecord w = sample_brownian(dim, horizon, dt_fine, seed);
              py::dict out;
              out["m"] = w.m;
              out["dt_fine"] = w.dt_fine;
              out["values"] = w.values;
              return out;
          },
          py::arg("m"), py::arg("horizon"), py::arg("dt_fine"), py::arg("seed"),
          "Brownian record on a uniform fine grid; values has (steps+1)*m entries, row-major.");

    m.def("modulus",
          [](int dim, double dt_fine, std::vector<double> values, double delta, double t) {
              BrownianRecord w;
              w.m = dim;
              w.dt_fine = dt_fine;
              w.values = std::move(values);
              return modulus(w, delta, t);
          },
          py::arg("m"), py::arg("dt_fine"), py::arg("values"), py::arg("delta"), py::arg("t"));

    m.def("choose_delta",
          [](int dim, double horizon, double dt_fine, std::uint64_t seed, long n, double delta0) {
              const BrownianRecord w = sample_brownian(dim, horizon, dt_fine, seed);
              const DeltaChoice c = choose_delta(w, n, horizon, delta0);
              py::dict out;
              out["delta"] = c.delta;
              out["target_met"] = c.target_met;
              out["modulus"] = c.achieved_modulus;
              out["target"] = c.target;
              return out;
          },
          py::arg("m"), py::arg("horizon"), py::arg("dt_fine"), py::arg("seed"), py::arg("n"),
          py::arg("delta0") = 0.25);

    m.def("validate_model",
          [](const std::string& model_json, long probes, std::uint64_t seed) {
              const ModelSpec model = model_from_json(model_json);
              const ValidationReport report = validate_model(model, probes, seed);
              py::dict out;
              out["passed"] = report.passed;
              out["checked_points"] = report.checked_points;
              py::list violations, warnings;
              for (const auto& v : report.violations) violations.append(v.condition);
              for (const auto& v : report.warnings) warnings.append(v.condition);
              out["violations"] = violations;
              out["warnings"] = warnings;
              return out;
          },
          py::arg("model_json"), py::arg("probes") = 2000, py::arg("seed") = 1);

    m.def("lambda_1d",
          [](std::vector<double> points, std::vector<double> weights, std::vector<double> f_at_atoms,
             double x) {
              const DiscreteMeasure mu = make_measure(std::move(points), std::move(weights), 1);
              return lambda_1d(mu, std::span<const double>(f_at_atoms), x);
          },
          py::arg("points"), py::arg("weights"), py::arg("f_at_atoms"), py::arg("x"),
          "One-dimensional interaction operator of a discrete probability measure.");

    m.def("m_norm",
          [](std::vector<double> a_points, std::vector<double> a_weights, std::vector<double> b_points,
             std::vector<double> b_weights, int dim, double box_halfwidth) {
              const DiscreteMeasure a = make_measure(std::move(a_points), std::move(a_weights), dim);
              const DiscreteMeasure b = make_measure(std::move(b_points), std::move(b_weights), dim);
              const TestFunctionFamily fam = TestFunctionFamily::default_family(dim, box_halfwidth);
              return m_norm(a, b, fam);
          },
          py::arg("a_points"), py::arg("a_weights"), py::arg("b_points"), py::arg("b_weights"),
          py::arg("dim") = 1, py::arg("box_halfwidth") = 6.0);

    m.def("run_mkv",
          [](const std::string& model_json, long n, double dt, double horizon, std::uint64_t seed,
             std::uint64_t path_seed, double delta, double dt_fine) {
              const ModelSpec model = model_from_json(model_json);
              const BrownianRecord w =
                  sample_brownian(model.m, horizon, dt_fine > 0 ? dt_fine : dt, path_seed);
              MkvRunConfig cfg;
              cfg.n = n;
              cfg.dt = dt;
              cfg.horizon = horizon;
              cfg.seed = seed;
              cfg.delta = delta;
              cfg.snapshot_times = {horizon};
              const MkvRun run = run_mkv(model, w, cfg);
              py::dict out;
              out["positions"] = run.snapshots.back().positions;
              out["weight"] = run.snapshots.back().weight;
              out["delta"] = run.delta.delta;
              out["delta_target_met"] = run.delta.target_met;
              out["floor_activations"] = run.diagnostics.floor_activations;
              out["max_drift"] = run.diagnostics.max_drift;
              out["max_norm"] = run.diagnostics.max_norm;
              return out;
          },
          py::arg("model_json"), py::arg("n"), py::arg("dt"), py::arg("horizon"), py::arg("seed") = 1,
          py::arg("path_seed") = 42, py::arg("delta") = 0.0, py::arg("dt_fine") = 0.0,
          "Equal-weight interacting run; returns the final ensemble and diagnostics.");

    m.def("run_weighted",
          [](const std::string& model_json, long n, double dt, double horizon, std::uint64_t seed,
             std::uint64_t path_seed, double dt_fine) {
              const ModelSpec model = model_from_json(model_json);
              const BrownianRecord w =
                  sample_brownian(model.m, horizon, dt_fine > 0 ? dt_fine : dt, path_seed);
              const WeightedRun run = run_weighted(model, w, n, dt, horizon, seed, {{horizon}});
              py::dict out;
              out["positions"] = run.snapshots.back().positions;
              out["logweights"] = run.snapshots.back().logweights;
              out["ess"] = ess(run.snapshots.back());
              out["mass"] = mass_estimate(run.snapshots.back());
              return out;
          },
          py::arg("model_json"), py::arg("n"), py::arg("dt"), py::arg("horizon"), py::arg("seed") = 1,
          py::arg("path_seed") = 42, py::arg("dt_fine") = 0.0);

    m.def("fkac_mollified",
          [](const std::string& model_json, const py::function& phi, long n_mc, double dt, double horizon,
             double delta, std::uint64_t seed, std::uint64_t path_seed) {
              const ModelSpec model = model_from_json(model_json);
              const BrownianRecord w = sample_brownian(model.m, horizon, dt, path_seed);
              const MollifiedPath path = mollify(w, delta);
              std::vector<TestFn> phis = {wrap_fn(phi, model.d)};
              const auto est = fkac_mollified(model, path, phis, n_mc, dt, seed);
              return py::make_tuple(est[0].value, est[0].std_error);
          },
          py::arg("model_json"), py::arg("phi"), py::arg("n_mc"), py::arg("dt"), py::arg("horizon"),
          py::arg("delta"), py::arg("seed") = 1, py::arg("path_seed") = 42);

    m.def("fd_solve",
          [](const std::string& model_json, double horizon, double delta, double dt_fine, double fd_dt,
             double x_lo, double x_hi, double h, bool normalize, std::uint64_t path_seed) {
              const ModelSpec model = model_from_json(model_json);
              const BrownianRecord w = sample_brownian(model.m, horizon, dt_fine, path_seed);
              const MollifiedPath path = mollify(w, delta);
              const FdResult result = fd_solve(model, path, {x_lo, x_hi, h}, fd_dt, normalize, {{horizon}});
              py::dict out;
              const GridDensity& u = result.densities.back();
              out["x_lo"] = u.x_lo;
              out["h"] = u.h;
              out["values"] = u.values;
              out["mass"] = u.mass();
              out["mean"] = u.mean();
              out["variance"] = u.variance();
              return out;
          },
          py::arg("model_json"), py::arg("horizon"), py::arg("delta"), py::arg("dt_fine") = 1e-3,
          py::arg("fd_dt") = 1e-4, py::arg("x_lo") = -7.5, py::arg("x_hi") = 7.5, py::arg("h") = 0.02,
          py::arg("normalize") = true, py::arg("path_seed") = 42);

    m.def("kalman_bucy",
          [](double a, double h_sens, double q_sqrt, double m0, double p0, double horizon, double dt,
             std::uint64_t path_seed) {
              const BrownianRecord w = sample_brownian(1, horizon, dt, path_seed);
              const double A[1] = {a}, H[1] = {h_sens}, Q[1] = {q_sqrt};
              const double M0[1] = {m0}, P0[1] = {p0};
              const auto states = kalman_bucy(A, H, Q, 1, 1, M0, P0, w, dt, {{horizon}});
              return py::make_tuple(states.back().second.mean[0], states.back().second.cov[0]);
          },
          py::arg("a"), py::arg("h"), py::arg("q_sqrt"), py::arg("m0"), py::arg("p0"), py::arg("horizon"),
          py::arg("dt") = 1e-3, py::arg("path_seed") = 42);

    m.def("lambda_check",
          [](std::uint64_t seed) {
              LambdaSuiteOptions opt;
              opt.seed = seed;
              return lambda_identity_suite(opt);
          },
          py::arg("seed") = 2024, "Randomized identity suite; returns the list of failures (empty = pass).");
}
