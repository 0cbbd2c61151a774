#include "mvfilter/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "mvfilter/rng.hpp"

namespace mvf {

double ess(const WeightedEnsemble& ens) {
    const double top = *std::max_element(ens.logweights.begin(), ens.logweights.end());
    KahanSum s1, s2;
    for (double lw : ens.logweights) {
        const double w = std::exp(lw - top);
        s1.add(w);
        s2.add(w * w);
    }
    return sq(s1.value()) / s2.value();
}

DiscreteMeasure normalized_measure(const WeightedEnsemble& ens) {
    const double top = *std::max_element(ens.logweights.begin(), ens.logweights.end());
    DiscreteMeasure mu;
    mu.dim = ens.dim;
    mu.points = ens.positions;
    mu.weights.resize(static_cast<std::size_t>(ens.size()));
    KahanSum total;
    for (long i = 0; i < ens.size(); ++i) {
        const double w = std::exp(ens.logweights[static_cast<std::size_t>(i)] - top);
        mu.weights[static_cast<std::size_t>(i)] = w;
        total.add(w);
    }
    const double norm = total.value();
    for (double& w : mu.weights) w /= norm;
    return mu;
}

double mass_estimate(const WeightedEnsemble& ens) {
    const double top = *std::max_element(ens.logweights.begin(), ens.logweights.end());
    KahanSum s;
    for (double lw : ens.logweights) s.add(std::exp(lw - top));
    return std::exp(top) * s.value() / static_cast<double>(ens.size());
}

WeightedRun run_weighted(const ModelSpec& model, const BrownianRecord& w, long n, double dt,
                         double horizon, std::uint64_t seed, std::span<const double> snapshot_times) {
    if (n < 1) throw ConfigError("run_weighted: need at least one particle");
    const long stride = std::llround(dt / w.dt_fine);
    if (stride < 1 || std::abs(static_cast<double>(stride) * w.dt_fine - dt) > 1e-9) {
        throw ConfigError("run_weighted: dt must be a multiple of the record fine step");
    }
    const long steps = std::llround(horizon / dt);
    if (std::abs(static_cast<double>(steps) * dt - horizon) > 1e-9) {
        throw ConfigError("run_weighted: dt must divide the horizon");
    }
    if (static_cast<double>(steps) * dt > w.horizon() + 1e-9) {
        throw ConfigError("run_weighted: horizon exceeds the record");
    }

    const int d = model.d;
    const int m = model.m;
    WeightedEnsemble ens;
    ens.dim = d;
    ens.positions.resize(static_cast<std::size_t>(n) * d);
    ens.logweights.assign(static_cast<std::size_t>(n), 0.0);
    const std::uint64_t law_seed = rng::substream(seed, rng::kTagWeightedNoise, 0);
    for (long i = 0; i < n; ++i) {
        model.initial_law.sample(law_seed, static_cast<std::uint64_t>(i),
                                 {ens.positions.data() + static_cast<std::size_t>(i) * d,
                                  static_cast<std::size_t>(d)});
    }

    WeightedRun run;
    std::size_t next_snap = 0;
    auto emit = [&](double t) {
        while (next_snap < snapshot_times.size() && std::abs(snapshot_times[next_snap] - t) <= dt / 2) {
            run.times.push_back(t);
            run.snapshots.push_back(ens);
            ++next_snap;
        }
    };
    emit(0.0);

    const double sqrt_dt = std::sqrt(dt);
    std::vector<double> beta(static_cast<std::size_t>(m));
    std::vector<double> b(static_cast<std::size_t>(d));
    std::vector<double> sigma(static_cast<std::size_t>(d) * d);
    std::vector<double> dw(static_cast<std::size_t>(m));

    for (long k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        for (int j = 0; j < m; ++j) {
            dw[static_cast<std::size_t>(j)] = w.value((k + 1) * stride, j) - w.value(k * stride, j);
        }
        for (long i = 0; i < n; ++i) {
            double* x = ens.positions.data() + static_cast<std::size_t>(i) * d;
            const std::span<const double> xs{x, static_cast<std::size_t>(d)};

            // weight first (left-endpoint evaluation), then the move
            const double a_val = model.alpha(t, xs);
            model.sensor(t, xs, beta);
            double dlog = a_val * dt;
            for (int j = 0; j < m; ++j) {
                const double bv = beta[static_cast<std::size_t>(j)];
                dlog += bv * dw[static_cast<std::size_t>(j)] - 0.5 * bv * bv * dt;
            }
            ens.logweights[static_cast<std::size_t>(i)] += dlog;

            model.drift(t, xs, b);
            model.diffusion(t, xs, sigma);
            const std::uint64_t key = rng::substream(seed, rng::kTagWeightedNoise, static_cast<std::uint64_t>(i) + 1);
            for (int j = 0; j < d; ++j) {
                double diff = 0.0;
                for (int c = 0; c < d; ++c) {
                    diff += sigma[static_cast<std::size_t>(j) * d + c] *
                            rng::normal(key, static_cast<std::uint64_t>(k) * d + c);
                }
                x[j] += b[static_cast<std::size_t>(j)] * dt + diff * sqrt_dt;
                if (!std::isfinite(x[j])) {
                    throw NumericError("run_weighted: non-finite position for particle " + std::to_string(i) +
                                       " at t=" + format_full(t + dt));
                }
            }
        }
        ens.time = static_cast<double>(k + 1) * dt;
        emit(ens.time);
    }
    if (snapshot_times.empty()) {
        run.times.push_back(ens.time);
        run.snapshots.push_back(ens);
    }
    return run;
}

std::vector<McEstimate> fkac_mollified(const ModelSpec& model, const MollifiedPath& path,
                                       std::span<const TestFn> phis, long n_mc, double dt,
                                       std::uint64_t seed) {
    if (n_mc < 2) throw ConfigError("fkac_mollified: need at least two sample paths");
    const long steps = std::llround(path.horizon / dt);
    if (std::abs(static_cast<double>(steps) * dt - path.horizon) > 1e-9) {
        throw ConfigError("fkac_mollified: dt must divide the path horizon");
    }

    const int d = model.d;
    const std::uint64_t law_seed = rng::substream(seed, rng::kTagFeynmanKac, 0);
    const double sqrt_dt = std::sqrt(dt);

    std::vector<double> x(static_cast<std::size_t>(d));
    std::vector<double> b(static_cast<std::size_t>(d));
    std::vector<double> sigma(static_cast<std::size_t>(d) * d);
    std::vector<double> beta(static_cast<std::size_t>(model.m));

    std::vector<KahanSum> acc(phis.size()), acc2(phis.size());
    for (long p = 0; p < n_mc; ++p) {
        model.initial_law.sample(law_seed, static_cast<std::uint64_t>(p), x);
        const std::uint64_t key = rng::substream(seed, rng::kTagFeynmanKac, static_cast<std::uint64_t>(p) + 1);

        double exponent = 0.0;
        for (long k = 0; k < steps; ++k) {
            const double t = static_cast<double>(k) * dt;
            exponent += alpha_delta_buf(model, path, t, x, beta) * dt;
            model.drift(t, x, b);
            model.diffusion(t, x, sigma);
            for (int j = 0; j < d; ++j) {
                double diff = 0.0;
                for (int c = 0; c < d; ++c) {
                    diff += sigma[static_cast<std::size_t>(j) * d + c] *
                            rng::normal(key, static_cast<std::uint64_t>(k) * d + c);
                }
                x[static_cast<std::size_t>(j)] += b[static_cast<std::size_t>(j)] * dt + diff * sqrt_dt;
            }
        }
        const double weight = std::exp(exponent);
        for (std::size_t f = 0; f < phis.size(); ++f) {
            const double v = phis[f](x) * weight;
            acc[f].add(v);
            acc2[f].add(v * v);
        }
    }

    std::vector<McEstimate> out(phis.size());
    for (std::size_t f = 0; f < phis.size(); ++f) {
        const double mean = acc[f].value() / static_cast<double>(n_mc);
        const double var = std::max(0.0, acc2[f].value() / static_cast<double>(n_mc) - mean * mean);
        out[f] = {mean, std::sqrt(var / static_cast<double>(n_mc - 1))};
    }
    return out;
}

}  // namespace mvf
