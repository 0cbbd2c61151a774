#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mvfilter/mkv.hpp"
#include "mvfilter/rng.hpp"
#include "test_helpers.hpp"

using namespace mvf;

TEST_CASE("initial ensemble: unit weight, reproducible, centered") {
    const ModelSpec model = model_from_json(mvft::ou_plain_json());
    const ParticleEnsemble ens = init_ensemble(model, 100000, 9);
    CHECK(ens.weight == 1.0);
    CHECK(ens.time == 0.0);

    const ParticleEnsemble again = init_ensemble(model, 100000, 9);
    CHECK(ens.positions == again.positions);

    double mean = 0.0;
    for (double x : ens.positions) mean += x;
    mean /= static_cast<double>(ens.size());
    CHECK(std::abs(mean) <= 3.0 / std::sqrt(100000.0));

    CHECK_THROWS_AS(init_ensemble(model, 1, 9), ConfigError);
}

TEST_CASE("with zero potential the step is plain euler-maruyama, bitwise") {
    const ModelSpec model = model_from_json(mvft::ou_plain_json());
    const BrownianRecord w = sample_brownian(1, 0.25, 1e-2, 12);
    const MollifiedPath path = mollify(w, 0.05);

    MkvRunConfig cfg;
    cfg.n = 64;
    cfg.dt = 1e-2;
    cfg.horizon = 0.25;
    cfg.seed = 31;

    ParticleEnsemble ens = init_ensemble(model, cfg.n, cfg.seed);
    std::vector<double> reference = ens.positions;

    const long steps = 25;
    for (long k = 0; k < steps; ++k) {
        mkv_step(ens, model, path, cfg);
        // reference: independent EM with the same noise formula
        const double t = static_cast<double>(k) * cfg.dt;
        for (long i = 0; i < cfg.n; ++i) {
            const std::uint64_t key = rng::substream(cfg.seed, rng::kTagParticleNoise, static_cast<std::uint64_t>(i));
            const double xi = rng::normal(key, static_cast<std::uint64_t>(k));
            double& x = reference[static_cast<std::size_t>(i)];
            double b = 0.0, sigma = 0.0;
            model.drift(t, {&x, 1}, {&b, 1});
            model.diffusion(t, {&x, 1}, {&sigma, 1});
            x = x + b * cfg.dt + sigma * xi * std::sqrt(cfg.dt);
        }
    }
    CHECK(ens.positions == reference);
}

TEST_CASE("fully degenerate dynamics freeze the particles") {
    const ModelSpec model = mvft::frozen_model();
    const BrownianRecord w = sample_brownian(1, 0.1, 1e-2, 12);
    const MollifiedPath path = mollify(w, 0.05);
    MkvRunConfig cfg;
    cfg.n = 32;
    cfg.dt = 1e-2;
    cfg.horizon = 0.1;
    ParticleEnsemble ens = init_ensemble(model, cfg.n, 3);
    const std::vector<double> before = ens.positions;
    for (int k = 0; k < 10; ++k) mkv_step(ens, model, path, cfg);
    CHECK(ens.positions == before);
    CHECK(ens.weight == 1.0);
}

TEST_CASE("worked gaussian case: every particle drifts with b plus one") {
    ModelSpec model = model_from_json(mvft::ou_plain_json());
    model.alpha = [](double, std::span<const double> x) { return x[0]; };  // potential = identity
    const BrownianRecord w = sample_brownian(1, 0.1, 1e-3, 12);
    const MollifiedPath path = mollify(w, 0.01);

    ParticleEnsemble ens;
    ens.dim = 1;
    ens.positions = mvft::normal_quantiles(20000);

    MkvRunConfig cfg;
    cfg.n = ens.size();
    cfg.dt = 1e-3;
    cfg.horizon = 0.1;
    cfg.density_override = [](double, std::span<const double> x) { return mvft::normal_pdf(x[0]); };

    const auto drifts = mkv_drifts(ens, model, path, cfg);
    double worst = 0.0;
    for (long i = 0; i < ens.size(); ++i) {
        const double x = ens.positions[static_cast<std::size_t>(i)];
        if (std::abs(x) > 3.0) continue;  // tail cells are granularity-limited
        worst = std::max(worst, std::abs(drifts[static_cast<std::size_t>(i)] - (-x + 1.0)));
    }
    CHECK(worst < 0.02);
}

TEST_CASE("weight stays at one without potential and compounds exactly with one") {
    const BrownianRecord w = sample_brownian(1, 1.0, 1e-2, 5);
    const MollifiedPath path = mollify(w, 0.1);
    {
        const ModelSpec model = model_from_json(mvft::ou_tanh_json());
        ModelSpec plain = model_from_json(mvft::ou_plain_json());
        ParticleEnsemble ens = init_ensemble(plain, 50, 3);
        for (int k = 0; k < 100; ++k) {
            update_weight(ens, plain, path, 1e-2);
            ens.time += 1e-2;
        }
        CHECK(ens.weight == 1.0);  // exp(0) accumulates exactly
        (void)model;
    }
    {
        const double c = 0.6;
        const ModelSpec model = model_from_json(mvft::const_alpha_json(c));
        ParticleEnsemble ens = init_ensemble(model, 50, 3);
        for (int k = 0; k < 100; ++k) {
            update_weight(ens, model, path, 1e-2);
            ens.time += 1e-2;
        }
        CHECK(ens.weight == doctest::Approx(std::exp(c * 1.0)).epsilon(1e-12));
    }
}

TEST_CASE("runs replay bit-identically from the seed") {
    const ModelSpec model = model_from_json(mvft::ou_tanh_json());
    const BrownianRecord w = sample_brownian(1, 0.25, 1e-3, 77);
    MkvRunConfig cfg;
    cfg.n = 200;
    cfg.dt = 1e-3;
    cfg.horizon = 0.25;
    cfg.seed = 1234;
    cfg.snapshot_times = {0.1, 0.25};

    const MkvRun a = run_mkv(model, w, cfg);
    const MkvRun b = run_mkv(model, w, cfg);
    REQUIRE(a.snapshots.size() == b.snapshots.size());
    for (std::size_t s = 0; s < a.snapshots.size(); ++s) {
        CHECK(a.snapshots[s].positions == b.snapshots[s].positions);
        CHECK(a.snapshots[s].weight == b.snapshots[s].weight);
    }
}

TEST_CASE("relabeling particles and their noise streams permutes the run") {
    const ModelSpec model = model_from_json(mvft::ou_tanh_json());
    const BrownianRecord w = sample_brownian(1, 0.05, 1e-2, 21);
    const MollifiedPath path = mollify(w, 0.01);

    const long n = 8;
    MkvRunConfig cfg;
    cfg.n = n;
    cfg.dt = 1e-2;
    cfg.horizon = 0.05;
    cfg.seed = 5;

    auto base_noise = [&](long i, long k, int) {
        return rng::normal(rng::substream(cfg.seed, rng::kTagParticleNoise, static_cast<std::uint64_t>(i)),
                           static_cast<std::uint64_t>(k));
    };

    ParticleEnsemble a = init_ensemble(model, n, cfg.seed);
    const std::vector<long> perm = {5, 2, 7, 0, 3, 6, 1, 4};
    ParticleEnsemble b;
    b.dim = 1;
    b.positions.resize(static_cast<std::size_t>(n));
    for (long j = 0; j < n; ++j) {
        b.positions[static_cast<std::size_t>(j)] = a.positions[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])];
    }

    MkvRunConfig cfg_a = cfg;
    cfg_a.noise_override = [&](long i, long k, int c) { return base_noise(i, k, c); };
    MkvRunConfig cfg_b = cfg;
    cfg_b.noise_override = [&](long j, long k, int c) {
        return base_noise(perm[static_cast<std::size_t>(j)], k, c);
    };

    for (int k = 0; k < 5; ++k) {
        update_weight(a, model, path, cfg.dt);
        update_weight(b, model, path, cfg.dt);
        mkv_step(a, model, path, cfg_a);
        mkv_step(b, model, path, cfg_b);
    }
    CHECK(a.weight == b.weight);
    for (long j = 0; j < n; ++j) {
        CHECK(b.positions[static_cast<std::size_t>(j)] ==
              a.positions[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])]);
    }
}

TEST_CASE("ou/tanh pilot run stays in the bulk") {
    const ModelSpec model = model_from_json(mvft::ou_tanh_json());
    const BrownianRecord w = sample_brownian(1, 1.0, 1e-3, 99);
    MkvRunConfig cfg;
    cfg.n = 500;
    cfg.dt = 1e-3;
    cfg.horizon = 1.0;
    cfg.seed = 7;
    const MkvRun run = run_mkv(model, w, cfg);
    CHECK(run.diagnostics.floor_activations == 0);
    CHECK(run.diagnostics.max_norm < 10.0);
    CHECK(std::isfinite(run.diagnostics.max_drift));
    CHECK(run.delta.delta >= cfg.dt);
}

TEST_CASE("reflected ensemble stays in the ball and matches projected euler") {
    // 2d, no potential: the interaction term is exactly zero, so the run must
    // coincide bitwise with plain projected euler driven by the same noise
    ModelSpec model = model_from_json(R"({
      "d": 2, "m": 1,
      "drift": {"family": "ou", "theta": 0.3},
      "diffusion": {"family": "constant", "sigma": 1.0},
      "alpha": {"family": "zero"},
      "sensor": {"family": "zero"},
      "initial_law": {"family": "gaussian", "mean": [0.0, 0.0], "cov": [[1.0, 0.0], [0.0, 1.0]]},
      "domain": {"type": "ball", "radius": 1.5}
    })");
    const BrownianRecord w = sample_brownian(1, 0.2, 1e-2, 3);
    const MollifiedPath path = mollify(w, 0.02);

    MkvRunConfig cfg;
    cfg.n = 100;
    cfg.dt = 1e-2;
    cfg.horizon = 0.2;
    cfg.seed = 17;

    ParticleEnsemble ens = init_ensemble(model, cfg.n, cfg.seed);
    std::vector<double> reference = ens.positions;
    long reference_hits = 0;

    MkvDiagnostics diag;
    for (long k = 0; k < 20; ++k) {
        mkv_step(ens, model, path, cfg, &diag);
        for (long i = 0; i < cfg.n; ++i) {
            double* x = reference.data() + static_cast<std::size_t>(i) * 2;
            const std::uint64_t key = rng::substream(cfg.seed, rng::kTagParticleNoise, static_cast<std::uint64_t>(i));
            const double t = static_cast<double>(k) * cfg.dt;
            double b[2], xi[2];
            model.drift(t, {x, 2}, {b, 2});
            for (int c = 0; c < 2; ++c) xi[c] = rng::normal(key, static_cast<std::uint64_t>(k) * 2 + c);
            for (int j = 0; j < 2; ++j) x[j] = x[j] + b[j] * cfg.dt + xi[j] * std::sqrt(cfg.dt);
            const double r = std::sqrt(x[0] * x[0] + x[1] * x[1]);
            if (r > 1.5) {
                x[0] *= 1.5 / r;
                x[1] *= 1.5 / r;
                ++reference_hits;
            }
        }
        for (long i = 0; i < cfg.n; ++i) {
            CHECK(norm2(ens.position(i)) <= 1.5 + 1e-12);
        }
    }
    CHECK(ens.positions == reference);
    CHECK(diag.boundary_hits == reference_hits);
    CHECK(diag.boundary_hits > 0);  // the ball is small enough to be hit
}
