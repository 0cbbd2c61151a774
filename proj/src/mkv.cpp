#include "mvfilter/mkv.hpp"

#include <algorithm>
#include <cmath>

#include "mvfilter/rng.hpp"

namespace mvf {

namespace {

/// Sorted-position particle order: canonical reduction order shared by the
/// density, interaction and mean computations (lexicographic for d >= 2).
std::vector<long> canonical_order(const ParticleEnsemble& ens) {
    std::vector<long> order(static_cast<std::size_t>(ens.size()));
    for (long i = 0; i < ens.size(); ++i) order[static_cast<std::size_t>(i)] = i;
    const int d = ens.dim;
    std::sort(order.begin(), order.end(), [&](long a, long b) {
        const auto pa = ens.position(a), pb = ens.position(b);
        for (int j = 0; j < d; ++j) {
            if (pa[static_cast<std::size_t>(j)] != pb[static_cast<std::size_t>(j)]) {
                return pa[static_cast<std::size_t>(j)] < pb[static_cast<std::size_t>(j)];
            }
        }
        return false;
    });
    return order;
}

DiscreteMeasure sorted_measure(const ParticleEnsemble& ens, std::span<const long> order) {
    const int d = ens.dim;
    DiscreteMeasure mu;
    mu.dim = d;
    mu.points.resize(ens.positions.size());
    mu.weights.assign(static_cast<std::size_t>(ens.size()), 1.0 / static_cast<double>(ens.size()));
    for (long r = 0; r < ens.size(); ++r) {
        const auto p = ens.position(order[static_cast<std::size_t>(r)]);
        std::copy(p.begin(), p.end(), mu.points.begin() + static_cast<std::size_t>(r) * d);
    }
    return mu;
}

long step_index_of(const ParticleEnsemble& ens, double dt) {
    return std::llround(ens.time / dt);
}

}  // namespace

DeltaChoice choose_run_delta(const BrownianRecord& w, const MkvRunConfig& cfg) {
    if (cfg.delta > 0.0) {
        const long q = std::llround(cfg.delta / cfg.dt);
        if (q < 1 || std::abs(static_cast<double>(q) * cfg.dt - cfg.delta) > 1e-9) {
            throw ConfigError("run_mkv: dt must divide delta");
        }
        return {cfg.delta, true, 0.0, 0.0};
    }
    DeltaOptions opts = cfg.delta_opts;
    opts.quantum = cfg.dt;
    const long total_steps = std::llround(cfg.horizon / cfg.dt);
    const long substeps = std::clamp(cfg.delta_min_substeps, 1L, std::max(1L, total_steps));
    opts.floor = std::max(opts.floor, cfg.dt * static_cast<double>(substeps));
    return choose_delta(w, cfg.n, cfg.horizon, cfg.delta0, opts);
}

ParticleEnsemble init_ensemble(const ModelSpec& model, long n, std::uint64_t seed) {
    if (n < 2) throw ConfigError("init_ensemble: need at least two particles");
    ParticleEnsemble ens;
    ens.dim = model.d;
    ens.positions.resize(static_cast<std::size_t>(n) * model.d);
    for (long i = 0; i < n; ++i) {
        model.initial_law.sample(seed, static_cast<std::uint64_t>(i),
                                 {ens.positions.data() + static_cast<std::size_t>(i) * model.d,
                                  static_cast<std::size_t>(model.d)});
    }
    return ens;
}

double update_weight(ParticleEnsemble& ens, const ModelSpec& model, const MollifiedPath& path,
                     double dt) {
    const auto order = canonical_order(ens);
    std::vector<double> beta_buf(static_cast<std::size_t>(model.m));
    KahanSum mean;
    for (long r = 0; r < ens.size(); ++r) {
        mean.add(alpha_delta_buf(model, path, ens.time, ens.position(order[static_cast<std::size_t>(r)]), beta_buf));
    }
    const double factor = std::exp(mean.value() / static_cast<double>(ens.size()) * dt);
    if (!std::isfinite(factor) || !(factor > 0.0)) {
        throw NumericError("update_weight: weight factor overflowed at t=" + format_full(ens.time));
    }
    ens.weight *= factor;
    if (!std::isfinite(ens.weight)) {
        throw NumericError("update_weight: weight overflowed at t=" + format_full(ens.time));
    }
    return factor;
}

namespace {

struct DriftWork {
    std::vector<double> drifts;      // n*d, original order
    std::vector<double> density;     // at atoms, original order
    double eta = 0.0;
};

DriftWork compute_drift_work(const ParticleEnsemble& ens, const ModelSpec& model,
                             const MollifiedPath& path, const MkvRunConfig& cfg,
                             MkvDiagnostics* diag) {
    const int d = ens.dim;
    const long n = ens.size();
    const double s = ens.time;
    const auto order = canonical_order(ens);
    const DiscreteMeasure mu = sorted_measure(ens, order);

    // mollified potential at the atoms (sorted order)
    std::vector<double> beta_buf(static_cast<std::size_t>(model.m));
    std::vector<double> f_sorted(static_cast<std::size_t>(n));
    for (long r = 0; r < n; ++r) {
        f_sorted[static_cast<std::size_t>(r)] = alpha_delta_buf(model, path, s, mu.point(r), beta_buf);
    }

    // density at the atoms
    std::vector<double> dens_sorted;
    std::vector<double> bandwidth;
    if (cfg.density_override) {
        dens_sorted.resize(static_cast<std::size_t>(n));
        for (long r = 0; r < n; ++r) dens_sorted[static_cast<std::size_t>(r)] = cfg.density_override(s, mu.point(r));
    } else {
        const DensityEstimate kde = kde_density(mu, cfg.kde);
        dens_sorted = kde.values_at(mu.points);
        bandwidth = kde.bandwidth();
    }
    double dens_max = 0.0;
    for (double v : dens_sorted) dens_max = std::max(dens_max, v);
    const double eta = cfg.lambda.eta_rel * dens_max;

    // interaction field at the atoms
    std::vector<double> lam_sorted;
    if (d == 1) {
        lam_sorted = lambda_1d_at_atoms(mu, f_sorted);
    } else {
        lam_sorted.resize(static_cast<std::size_t>(n) * d);
        LambdaConfig lcfg = cfg.lambda;
        if (lcfg.epsilon <= 0.0 && !bandwidth.empty()) {
            double geo = 1.0;
            for (double h : bandwidth) geo *= h;
            lcfg.epsilon = 0.5 * std::pow(geo, 1.0 / d);
        } else if (lcfg.epsilon <= 0.0) {
            lcfg.epsilon = 1e-6;
        }
        // direct O(n^2) kernel sum; desk scale only
        const double inv_area = 1.0 / sphere_surface_area(d);
        KahanSum mean_acc;
        for (long r = 0; r < n; ++r) mean_acc.add(mu.weights[static_cast<std::size_t>(r)] * f_sorted[static_cast<std::size_t>(r)]);
        const double mean_f = mean_acc.value();
        for (long q = 0; q < n; ++q) {
            const auto x = mu.point(q);
            std::vector<KahanSum> acc(static_cast<std::size_t>(d));
            for (long r = 0; r < n; ++r) {
                const auto p = mu.point(r);
                double dist2 = 0.0;
                for (int j = 0; j < d; ++j) dist2 += sq(p[static_cast<std::size_t>(j)] - x[static_cast<std::size_t>(j)]);
                const double dist = std::max(std::sqrt(dist2), lcfg.epsilon);
                const double scale = mu.weights[static_cast<std::size_t>(r)] *
                                     (f_sorted[static_cast<std::size_t>(r)] - mean_f) / std::pow(dist, d);
                for (int j = 0; j < d; ++j) {
                    acc[static_cast<std::size_t>(j)].add(scale * (p[static_cast<std::size_t>(j)] - x[static_cast<std::size_t>(j)]));
                }
            }
            for (int j = 0; j < d; ++j) {
                lam_sorted[static_cast<std::size_t>(q) * d + j] = inv_area * acc[static_cast<std::size_t>(j)].value();
            }
        }
    }

    DriftWork work;
    work.eta = eta;
    work.density.resize(static_cast<std::size_t>(n));
    work.drifts.resize(static_cast<std::size_t>(n) * d);
    std::vector<double> b(static_cast<std::size_t>(d));
    for (long r = 0; r < n; ++r) {
        const long i = order[static_cast<std::size_t>(r)];
        const double dens = dens_sorted[static_cast<std::size_t>(r)];
        work.density[static_cast<std::size_t>(i)] = dens;
        const double floored = std::max(dens, eta);
        if (diag && dens < eta) ++diag->floor_activations;

        model.drift(s, mu.point(r), b);
        double norm_sq = 0.0;
        for (int j = 0; j < d; ++j) {
            const double corr = lam_sorted[static_cast<std::size_t>(r) * d + j] / floored;
            const double v = b[static_cast<std::size_t>(j)] + corr;
            work.drifts[static_cast<std::size_t>(i) * d + j] = v;
            norm_sq += v * v;
        }
        if (diag) diag->max_drift = std::max(diag->max_drift, std::sqrt(norm_sq));
    }
    return work;
}

}  // namespace

std::vector<double> mkv_drifts(const ParticleEnsemble& ens, const ModelSpec& model,
                               const MollifiedPath& path, const MkvRunConfig& cfg,
                               MkvDiagnostics* diag) {
    return compute_drift_work(ens, model, path, cfg, diag).drifts;
}

void mkv_step(ParticleEnsemble& ens, const ModelSpec& model, const MollifiedPath& path,
              const MkvRunConfig& cfg, MkvDiagnostics* diag) {
    const int d = ens.dim;
    const long n = ens.size();
    const double s = ens.time;
    const long step_idx = step_index_of(ens, cfg.dt);
    const double sqrt_dt = std::sqrt(cfg.dt);

    const DriftWork work = compute_drift_work(ens, model, path, cfg, diag);

    std::optional<double> radius = cfg.reflect_radius;
    if (!radius && model.domain.type == Domain::Type::Ball) radius = model.domain.radius;

    std::vector<double> sigma(static_cast<std::size_t>(d) * d);
    std::vector<double> xi(static_cast<std::size_t>(d));
    for (long i = 0; i < n; ++i) {
        const std::uint64_t key = rng::substream(cfg.seed, rng::kTagParticleNoise, static_cast<std::uint64_t>(i));
        for (int c = 0; c < d; ++c) {
            xi[static_cast<std::size_t>(c)] =
                cfg.noise_override ? cfg.noise_override(i, step_idx, c)
                                   : rng::normal(key, static_cast<std::uint64_t>(step_idx) * d + c);
        }
        model.diffusion(s, ens.position(i), sigma);

        double* x = ens.positions.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            double diff = 0.0;
            for (int c = 0; c < d; ++c) diff += sigma[static_cast<std::size_t>(j) * d + c] * xi[static_cast<std::size_t>(c)];
            x[j] = x[j] + work.drifts[static_cast<std::size_t>(i) * d + j] * cfg.dt + diff * sqrt_dt;
            if (!std::isfinite(x[j])) {
                throw NumericError("mkv_step: non-finite position for particle " + std::to_string(i) +
                                   " at t=" + format_full(s + cfg.dt));
            }
        }
        if (radius) {
            const double r = norm2({x, static_cast<std::size_t>(d)});
            if (r > *radius) {
                const double scale = *radius / r;
                for (int j = 0; j < d; ++j) x[j] *= scale;
                if (diag) ++diag->boundary_hits;
            }
        }
        if (diag) diag->max_norm = std::max(diag->max_norm, norm2({x, static_cast<std::size_t>(d)}));
    }

    ens.time = static_cast<double>(step_idx + 1) * cfg.dt;
}

MkvRun run_mkv(const ModelSpec& model, const BrownianRecord& w, const MkvRunConfig& cfg) {
    if (!(cfg.dt > 0.0) || !(cfg.horizon > 0.0)) throw ConfigError("run_mkv: dt and horizon must be positive");
    const long steps = std::llround(cfg.horizon / cfg.dt);
    if (std::abs(static_cast<double>(steps) * cfg.dt - cfg.horizon) > 1e-9) {
        throw ConfigError("run_mkv: dt must divide the horizon");
    }

    MkvRun result;
    result.delta = choose_run_delta(w, cfg);
    const MollifiedPath path = mollify(w, result.delta.delta);

    ParticleEnsemble ens = init_ensemble(model, cfg.n, cfg.seed);

    std::size_t next_snap = 0;
    auto emit = [&](double t) {
        while (next_snap < cfg.snapshot_times.size() &&
               std::abs(cfg.snapshot_times[next_snap] - t) <= cfg.dt / 2) {
            result.times.push_back(t);
            result.snapshots.push_back(ens);
            ++next_snap;
        }
    };
    emit(0.0);

    for (long k = 0; k < steps; ++k) {
        update_weight(ens, model, path, cfg.dt);
        mkv_step(ens, model, path, cfg, &result.diagnostics);
        emit(ens.time);
    }
    if (cfg.snapshot_times.empty()) {
        result.times.push_back(ens.time);
        result.snapshots.push_back(ens);
    }
    return result;
}

}  // namespace mvf
