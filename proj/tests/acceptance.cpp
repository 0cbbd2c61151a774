// Acceptance suite: one criterion per function, each printing a PASS/FAIL
// line with the measured numbers. Run a single criterion by name (A1..A10)
// or everything with "all".

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mvfilter/baselines.hpp"
#include "mvfilter/experiments.hpp"
#include "mvfilter/lambda_op.hpp"
#include "mvfilter/mkv.hpp"
#include "mvfilter/model.hpp"
#include "mvfilter/oracles.hpp"
#include "mvfilter/rng.hpp"
#include "test_helpers.hpp"

using namespace mvf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : v) var += sq(x - mean);
    return {mean, v.size() > 1 ? std::sqrt(var / (n * (n - 1.0))) : 0.0};
}

// ---------------------------------------------------------------- criteria

Outcome a1_interaction_identities() {
    LambdaSuiteOptions opt;
    opt.measure_count = 100;
    opt.atom_count = 50;
    opt.query_count = 100;
    opt.tolerance = 1e-12;
    opt.include_parts = false;
    const auto failures = lambda_identity_suite(opt);
    return {failures.empty(),
            fmt("100 measures x 100 queries, four forms + shift + linearity at 1e-12; %zu failures",
                failures.size())};
}

Outcome a2_integration_by_parts() {
    const auto dens1 = [](std::span<const double> x) { return mvft::normal_pdf(x[0]); };
    const auto f1 = [](std::span<const double> x) { return x[0]; };
    const SmoothBump bump1 = radial_bump(3.0, {0.6});
    const double r1 = parts_residual(dens1, f1, bump1, Box::cube(1, 8.0), 1e-3);
    const double r1_coarse = parts_residual(dens1, f1, bump1, Box::cube(1, 8.0), 2e-3);

    const auto dens2 = [](std::span<const double> x) {
        return std::exp(-0.5 * (x[0] * x[0] + x[1] * x[1])) / (2.0 * std::numbers::pi);
    };
    const auto f2 = [](std::span<const double> x) { return std::tanh(x[0]); };
    const SmoothBump bump2 = radial_bump(2.0, {0.7, -0.4});
    const double r2 = parts_residual(dens2, f2, bump2, Box::cube(2, 5.0), 2e-2);
    const double r2_coarse = parts_residual(dens2, f2, bump2, Box::cube(2, 5.0), 4e-2);

    const bool pass = r1 <= 1e-6 && r2 <= 1e-4 && r1 < r1_coarse && r2 < r2_coarse;
    return {pass, fmt("1d: %.3g (<=1e-6, coarse %.3g) | 2d: %.3g (<=1e-4, coarse %.3g)", r1, r1_coarse,
                      r2, r2_coarse)};
}

Outcome a3_mass_identity() {
    const ModelSpec model = model_from_json(mvft::ou_tanh_json());
    const BrownianRecord w = sample_brownian(1, 1.0, 1e-3, 42);
    const MollifiedPath path = mollify(w, 0.05);
    const std::vector<double> snaps = {0.25, 0.5, 0.75, 1.0};

    const FdResult u1 = fd_solve(model, path, {-7.5, 7.5, 0.02}, 1e-4, false, snaps);
    const FdResult n1 = fd_solve(model, path, {-7.5, 7.5, 0.02}, 1e-4, true, snaps);
    const double residual = mass_identity_residual(u1, n1);

    const FdResult u2 = fd_solve(model, path, {-7.5, 7.5, 0.01}, 2.5e-5, false, snaps);
    const FdResult n2 = fd_solve(model, path, {-7.5, 7.5, 0.01}, 2.5e-5, true, snaps);
    const double refined = mass_identity_residual(u2, n2);
    const double ratio = residual / refined;

    const bool pass = residual <= 5e-3 && ratio >= 2.5 && ratio <= 6.0;
    return {pass, fmt("residual %.3g (<=5e-3) at h=0.02,dt=1e-4; refined %.3g, ratio %.2f in [2.5,6]",
                      residual, refined, ratio)};
}

Outcome a4_potential_consistency() {
    const ModelSpec model = model_from_json(mvft::ou_tanh_json());
    std::vector<TestFn> phis = {
        [](std::span<const double>) { return 1.0; },
        [](std::span<const double> x) { return std::tanh(x[0]); },
        [](std::span<const double> x) { return std::exp(-0.5 * x[0] * x[0]) * std::cos(2.0 * x[0]); }};

    bool pass = true;
    double worst_margin = 1e300;
    for (std::uint64_t p = 1; p <= 5; ++p) {
        const BrownianRecord w = sample_brownian(1, 1.0, 1e-3, 1000 + p);
        const MollifiedPath path = mollify(w, 0.05);
        const auto mc = fkac_mollified(model, path, phis, 50000, 2.5e-4, 5 + p);
        const FdResult fd = fd_solve(model, path, {-7.5, 7.5, 0.02}, 1e-4, false, {{1.0}});
        for (std::size_t k = 0; k < phis.size(); ++k) {
            const double reference = fd.densities.back().integrate(phis[k]);
            const double tol = 3.0 * mc[k].std_error + 0.02 * (1.0 + std::abs(reference));
            const double gap = std::abs(mc[k].value - reference);
            pass = pass && gap <= tol;
            worst_margin = std::min(worst_margin, tol - gap);
        }
    }
    return {pass, fmt("5 paths x 3 functions, 3 MC SEs + grid slack; worst margin %.4f", worst_margin)};
}

struct SweepResult {
    std::vector<long> n;
    std::vector<double> mean_err;
    std::vector<double> se_err;
    double slope = 0.0;
    DeltaChoice delta;
    long fourth_moment_failures = 0;
    long fourth_moment_rows = 0;
};

SweepResult mkv_sweep(const std::vector<long>& n_values, long reps) {
    const ModelSpec model = model_from_json(mvft::ou_tanh_json());
    const BrownianRecord w = sample_brownian(1, 1.0, 1e-3, 42);
    const TestFunctionFamily fam = TestFunctionFamily::default_family(1, 6.0);

    SweepResult out;
    out.n = n_values;
    for (long n : n_values) {
        MkvRunConfig cfg;
        cfg.n = n;
        cfg.dt = 1e-3;
        cfg.horizon = 1.0;
        cfg.snapshot_times = {1.0};
        out.delta = choose_run_delta(w, cfg);
        cfg.delta = out.delta.delta;

        const MollifiedPath path = mollify(w, cfg.delta);
        const FdResult ref = fd_solve(model, path, {-7.5, 7.5, 0.02}, 1e-4, true, {{1.0}});
        const std::vector<double> ref_int = family_integrals(ref.densities.back(), fam);

        std::vector<double> errs;
        std::vector<std::vector<double>> diffs;
        for (long r = 0; r < reps; ++r) {
            cfg.seed = rng::replicate_seed(7, static_cast<std::uint64_t>(r));
            const MkvRun run = run_mkv(model, w, cfg);
            const std::vector<double> est = family_integrals(run.snapshots.back().measure(), fam);
            errs.push_back(m_norm(est, ref_int, fam));
            std::vector<double> d(est.size());
            for (std::size_t k = 0; k < est.size(); ++k) d[k] = ref_int[k] - est[k];
            diffs.push_back(std::move(d));
        }
        const MeanSe ms = mean_se(errs);
        out.mean_err.push_back(ms.mean);
        out.se_err.push_back(ms.se);

        // fourth-moment bound per test function
        for (std::size_t k = 1; k < fam.fns.size(); ++k) {
            std::vector<double> fourth;
            for (const auto& d : diffs) fourth.push_back(sq(sq(d[k])));
            double mean4 = 0.0;
            for (double v : fourth) mean4 += v;
            mean4 /= static_cast<double>(fourth.size());
            // seeded bootstrap for the SE of the fourth-moment estimate
            const std::uint64_t key = rng::substream(99, rng::kTagProbe, k);
            double bsum = 0.0, bsum2 = 0.0;
            const int boots = 400;
            for (int b = 0; b < boots; ++b) {
                double acc = 0.0;
                for (std::size_t r = 0; r < fourth.size(); ++r) {
                    const std::uint64_t u =
                        rng::mix(key ^ rng::mix(static_cast<std::uint64_t>(b) * 2654435761ULL + r));
                    acc += fourth[u % fourth.size()];
                }
                acc /= static_cast<double>(fourth.size());
                bsum += acc;
                bsum2 += acc * acc;
            }
            const double bmean = bsum / boots;
            const double bse = std::sqrt(std::max(0.0, bsum2 / boots - bmean * bmean));
            const double bound = sq(sq(fam.fns[k].sup_norm)) / (static_cast<double>(n) * static_cast<double>(n));
            ++out.fourth_moment_rows;
            if (mean4 > bound + 3.0 * bse) ++out.fourth_moment_failures;
        }
    }

    if (n_values.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < n_values.size(); ++i) {
            const double lx = std::log(static_cast<double>(n_values[i]));
            const double ly = std::log(out.mean_err[i]);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        const double m = static_cast<double>(n_values.size());
        out.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    }
    return out;
}

Outcome a5_mkv_vs_oracle() {
    const ModelSpec model = model_from_json(mvft::ou_tanh_json());
    const BrownianRecord w = sample_brownian(1, 1.0, 1e-3, 42);
    const TestFunctionFamily fam = TestFunctionFamily::default_family(1, 6.0);
    const long reps = 20;

    const SweepResult mkv = mkv_sweep({2000}, reps);

    const MollifiedPath path = mollify(w, mkv.delta.delta);
    const FdResult ref = fd_solve(model, path, {-7.5, 7.5, 0.02}, 1e-4, true, {{1.0}});
    const std::vector<double> ref_int = family_integrals(ref.densities.back(), fam);
    std::vector<double> werrs;
    for (long r = 0; r < reps; ++r) {
        const WeightedRun wr =
            run_weighted(model, w, 2000, 1e-3, 1.0, rng::replicate_seed(77, static_cast<std::uint64_t>(r)), {{1.0}});
        werrs.push_back(m_norm(family_integrals(normalized_measure(wr.snapshots.back()), fam), ref_int, fam));
    }
    const MeanSe weighted = mean_se(werrs);

    const bool pass = mkv.mean_err[0] <= 3.0 * weighted.mean;
    return {pass, fmt("mkv %.5f vs weighted %.5f (ratio %.2f <= 3) at n=2000, delta=%.3g%s", mkv.mean_err[0],
                      weighted.mean, mkv.mean_err[0] / weighted.mean, mkv.delta.delta,
                      mkv.delta.target_met ? "" : " [modulus target unreachable, floored]")};
}

Outcome a6_convergence_rate() {
    const SweepResult sweep = mkv_sweep({250, 500, 1000, 2000, 4000}, 20);
    const bool slope_ok = sweep.slope >= -0.75 && sweep.slope <= -0.25;
    const bool fourth_ok = sweep.fourth_moment_failures == 0;
    // the error at n=4000 must sit significantly below the n=250 error
    const double gap = sweep.mean_err.front() - sweep.mean_err.back();
    const double gap_se = std::hypot(sweep.se_err.front(), sweep.se_err.back());
    const bool shrink_ok = gap > 3.0 * gap_se;
    return {slope_ok && fourth_ok && shrink_ok,
            fmt("slope %.3f in [-0.75,-0.25]; fourth moment %ld/%ld within bound; err %0.5f -> %.5f",
                sweep.slope, sweep.fourth_moment_rows - sweep.fourth_moment_failures,
                sweep.fourth_moment_rows, sweep.mean_err.front(), sweep.mean_err.back())};
}

Outcome a7_linear_gaussian() {
    const ModelSpec model = model_from_json(mvft::linear_gaussian_json());
    const BrownianRecord w = sample_brownian(1, 1.0, 1e-3, 42);
    const double A[1] = {-1.0}, H[1] = {1.0}, Q[1] = {1.0};
    const double m0[1] = {0.2}, P0[1] = {0.5};
    const auto kb = kalman_bucy(A, H, Q, 1, 1, m0, P0, w, 1e-3, {{1.0}});

    MkvRunConfig cfg;
    cfg.n = 5000;
    cfg.dt = 1e-3;
    cfg.horizon = 1.0;
    cfg.delta = 0.01;
    cfg.snapshot_times = {1.0};

    std::vector<double> means, vars;
    for (long r = 0; r < 20; ++r) {
        cfg.seed = rng::replicate_seed(11, static_cast<std::uint64_t>(r));
        const MkvRun run = run_mkv(model, w, cfg);
        const DiscreteMeasure mu = run.snapshots.back().measure();
        const double mean = integrate(mu, [](std::span<const double> x) { return x[0]; });
        means.push_back(mean);
        vars.push_back(integrate(mu, [mean](std::span<const double> x) { return sq(x[0] - mean); }));
    }
    const MeanSe m = mean_se(means);
    const MeanSe v = mean_se(vars);

    const double mean_gap = std::abs(m.mean - kb[0].second.mean[0]);
    const double var_rel = std::abs(v.mean - kb[0].second.cov[0]) / kb[0].second.cov[0];
    const bool pass = mean_gap <= 3.0 * m.se && mean_gap <= 0.05 && var_rel <= 0.10;
    return {pass, fmt("mean gap %.4f (3se %.4f, cap 0.05); var rel gap %.3f (<=0.10); kalman (%.4f, %.4f)",
                      mean_gap, 3.0 * m.se, var_rel, kb[0].second.mean[0], kb[0].second.cov[0])};
}

Outcome a8_unnormalization() {
    const ModelSpec model = model_from_json(mvft::ou_tanh_json());
    const BrownianRecord w = sample_brownian(1, 1.0, 2e-4, 42);
    const double delta = 2e-3, dt = 2e-4;
    const long reps = 8;

    const MollifiedPath path = mollify(w, delta);
    const FdResult u = fd_solve(model, path, {-7.5, 7.5, 0.02}, 1e-4, false, {{1.0}});
    const double fd_mass = u.densities.back().mass();
    const double fd_slack = 0.003 * fd_mass;  // spatial truncation of the oracle

    std::vector<double> a_vals, w_vals;
    for (long r = 0; r < reps; ++r) {
        MkvRunConfig cfg;
        cfg.n = 5000;
        cfg.dt = dt;
        cfg.horizon = 1.0;
        cfg.delta = delta;
        cfg.snapshot_times = {1.0};
        cfg.seed = rng::replicate_seed(13, static_cast<std::uint64_t>(r));
        a_vals.push_back(run_mkv(model, w, cfg).snapshots.back().weight);

        const WeightedRun wr =
            run_weighted(model, w, 5000, dt, 1.0, rng::replicate_seed(17, static_cast<std::uint64_t>(r)), {{1.0}});
        w_vals.push_back(mass_estimate(wr.snapshots.back()));
    }
    const MeanSe a = mean_se(a_vals);
    const MeanSe wm = mean_se(w_vals);

    const double gap_aw = std::abs(a.mean - wm.mean);
    const double gap_af = std::abs(a.mean - fd_mass);
    const double gap_wf = std::abs(wm.mean - fd_mass);
    const bool pass = gap_aw <= 3.0 * std::hypot(a.se, wm.se) && gap_af <= 3.0 * a.se + fd_slack &&
                      gap_wf <= 3.0 * wm.se + fd_slack;
    return {pass, fmt("a^n %.4f, weighted %.4f, fd %.4f; gaps %.4f/%.4f/%.4f vs 3se %.4f/%.4f/%.4f", a.mean,
                      wm.mean, fd_mass, gap_aw, gap_af, gap_wf, 3.0 * std::hypot(a.se, wm.se),
                      3.0 * a.se + fd_slack, 3.0 * wm.se + fd_slack)};
}

Outcome a9_structure_and_determinism() {
    const fs::path dir = fs::temp_directory_path() / "mvfilter_acceptance_a9";
    fs::remove_all(dir);

    const std::string config = std::string("{\"model\": ") + mvft::ou_tanh_json() +
                               R"(, "method": "mkv", "n": 500, "dt": 1e-3, "horizon": 0.2,
                                  "snapshot_times": [0.1, 0.2], "out": ")" +
                               (dir / "a").string() + "\"}";
    ExperimentConfig cfg_a = load_experiment_json(config);
    ExperimentConfig cfg_b = cfg_a;
    cfg_b.out_dir = (dir / "b").string();
    if (cmd_simulate(cfg_a) != 0 || cmd_simulate(cfg_b) != 0) return {false, "simulate failed"};

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p);
        std::stringstream buf;
        buf << in.rdbuf();
        return buf.str();
    };
    const std::string csv_a = slurp(dir / "a" / "snapshots.csv");
    const std::string csv_b = slurp(dir / "b" / "snapshots.csv");
    const bool bytes_ok = !csv_a.empty() && csv_a == csv_b;

    // exactly one weight scalar per snapshot time
    std::map<std::string, std::set<std::string>> weights;
    std::istringstream lines(csv_a);
    std::string line;
    std::getline(lines, line);
    const bool header_ok = line == "t,i,x_1,weight";
    while (std::getline(lines, line)) {
        const auto first = line.find(',');
        const auto last = line.rfind(',');
        weights[line.substr(0, first)].insert(line.substr(last + 1));
    }
    bool single_weight = weights.size() == 2;
    for (const auto& [t, ws] : weights) single_weight = single_weight && ws.size() == 1;

    // and structurally: the ensemble carries one scalar, not a per-particle array
    static_assert(std::is_same_v<decltype(ParticleEnsemble::weight), double>);

    return {bytes_ok && header_ok && single_weight,
            fmt("byte-identical reruns: %s; single weight scalar per snapshot: %s", bytes_ok ? "yes" : "NO",
                single_weight ? "yes" : "NO")};
}

Outcome a10_reflecting_ball() {
    // with the sensor on: all norms inside the ball at every snapshot
    ModelSpec model = model_from_json(R"({
      "d": 2, "m": 1,
      "drift": {"family": "ou", "theta": 0.5},
      "diffusion": {"family": "constant", "sigma": 1.0},
      "alpha": {"family": "zero"},
      "sensor": {"family": "bounded_sensor_tanh", "gain": 1.0, "scale": 1.0},
      "initial_law": {"family": "gaussian", "mean": [0.0, 0.0], "cov": [[2.25, 0.0], [0.0, 2.25]]},
      "domain": {"type": "ball", "radius": 3.0}
    })");
    const BrownianRecord w = sample_brownian(1, 0.5, 2e-3, 5);

    MkvRunConfig cfg;
    cfg.n = 400;
    cfg.dt = 2e-3;
    cfg.horizon = 0.5;
    cfg.seed = 23;
    cfg.delta = 0.02;
    cfg.snapshot_times = {0.1, 0.2, 0.3, 0.4, 0.5};
    const MkvRun run = run_mkv(model, w, cfg);
    bool inside = true;
    for (const auto& snap : run.snapshots) {
        for (long i = 0; i < snap.size(); ++i) inside = inside && norm2(snap.position(i)) <= 3.0 + 1e-12;
    }

    // with a vanishing potential: bit-exact match against projected euler
    ModelSpec plain = model;
    plain.sensor = [](double, std::span<const double>, std::span<double> out) { out[0] = 0.0; };
    plain.bounds.beta = 0.0;

    const MollifiedPath path = mollify(w, cfg.delta);
    ParticleEnsemble ens = init_ensemble(plain, cfg.n, cfg.seed);
    std::vector<double> reference = ens.positions;
    long ref_hits = 0;
    MkvDiagnostics diag;
    const long steps = 250;
    for (long k = 0; k < steps; ++k) {
        mkv_step(ens, plain, path, cfg, &diag);
        for (long i = 0; i < cfg.n; ++i) {
            double* x = reference.data() + static_cast<std::size_t>(i) * 2;
            const std::uint64_t key = rng::substream(cfg.seed, rng::kTagParticleNoise, static_cast<std::uint64_t>(i));
            const double t = static_cast<double>(k) * cfg.dt;
            double b[2];
            plain.drift(t, {x, 2}, {b, 2});
            for (int j = 0; j < 2; ++j) {
                x[j] = x[j] + b[j] * cfg.dt +
                       rng::normal(key, static_cast<std::uint64_t>(k) * 2 + j) * std::sqrt(cfg.dt);
            }
            const double r = std::sqrt(x[0] * x[0] + x[1] * x[1]);
            if (r > 3.0) {
                x[0] *= 3.0 / r;
                x[1] *= 3.0 / r;
                ++ref_hits;
            }
        }
    }
    const bool bit_exact = ens.positions == reference;
    const bool hits_match = diag.boundary_hits == ref_hits && ref_hits > 0;
    return {inside && bit_exact && hits_match,
            fmt("norms inside ball: %s; projected-euler match: %s; boundary hits %ld == %ld",
                inside ? "yes" : "NO", bit_exact ? "yes" : "NO", diag.boundary_hits, ref_hits)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<std::string, std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"A1", {"interaction operator identities", a1_interaction_identities}},
        {"A2", {"integration by parts", a2_integration_by_parts}},
        {"A3", {"mass identity", a3_mass_identity}},
        {"A4", {"mollified potential consistency", a4_potential_consistency}},
        {"A5", {"interacting system vs fd oracle", a5_mkv_vs_oracle}},
        {"A6", {"convergence rate and fourth moment", a6_convergence_rate}},
        {"A7", {"linear-gaussian end to end", a7_linear_gaussian}},
        {"A8", {"unnormalization weight", a8_unnormalization}},
        {"A9", {"equal-weight structure and determinism", a9_structure_and_determinism}},
        {"A10", {"reflecting ball variant", a10_reflecting_ball}},
    };

    std::vector<std::string> selected;
    if (argc < 2 || std::string(argv[1]) == "all") {
        for (const auto& [name, _] : criteria) selected.push_back(name);
    } else {
        for (int i = 1; i < argc; ++i) selected.emplace_back(argv[i]);
    }

    int failures = 0;
    for (const auto& name : selected) {
        const auto it = criteria.find(name);
        if (it == criteria.end()) {
            std::printf("[%s] UNKNOWN criterion\n", name.c_str());
            ++failures;
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = it->second.second();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] %s: %s (%.1fs) %s\n", name.c_str(), it->second.first,
                    outcome.pass ? "PASS" : "FAIL", secs, outcome.detail.c_str());
        std::fflush(stdout);
        if (!outcome.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
