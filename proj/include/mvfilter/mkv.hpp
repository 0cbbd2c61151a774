#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mvfilter/common.hpp"
#include "mvfilter/lambda_op.hpp"
#include "mvfilter/measures.hpp"
#include "mvfilter/model.hpp"
#include "mvfilter/paths.hpp"

namespace mvf {

/// Equal-weight interacting ensemble. The single scalar `weight` is the only
/// weight in the representation - particles are never weighted individually,
/// which is the defining property of the method.
struct ParticleEnsemble {
    int dim = 1;
    double time = 0.0;
    double weight = 1.0;
    std::vector<double> positions;  // n x dim

    long size() const { return static_cast<long>(positions.size()) / dim; }
    std::span<const double> position(long i) const {
        return {positions.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
    }
    DiscreteMeasure measure() const { return DiscreteMeasure::empirical(dim, positions); }
};

struct MkvDiagnostics {
    long floor_activations = 0;
    double max_drift = 0.0;
    double max_norm = 0.0;  // sup over the run of the particle norms
    long boundary_hits = 0;
};

struct MkvRunConfig {
    long n = 1000;
    double dt = 1e-3;
    double horizon = 1.0;
    std::uint64_t seed = 1;

    /// Mollification step: fixed when > 0, otherwise chosen by the halving
    /// search starting from delta0 (floored and quantized at dt so the step
    /// always divides it). The auto search keeps delta >= delta_min_substeps
    /// * dt: with a single Euler step per interval the slope term is
    /// integrated at the left endpoint and the run acquires an O(1) gap to
    /// the mollified flow, which several substeps per interval remove.
    double delta = 0.0;
    double delta0 = 0.25;
    long delta_min_substeps = 8;
    DeltaOptions delta_opts;

    KdeRule kde;
    LambdaConfig lambda;
    /// Overrides the model domain; particles leaving the ball are projected
    /// radially back to the boundary.
    std::optional<double> reflect_radius;

    std::vector<double> snapshot_times;

    /// Test hooks. density_override(s, x) replaces the kernel estimate with
    /// an exact density; noise_override(i, step, coord) replaces the counter
    /// RNG draw (the default is normal(substream(seed, kTagParticleNoise, i),
    /// step * dim + coord)).
    std::function<double(double, std::span<const double>)> density_override;
    std::function<double(long, long, int)> noise_override;
};

/// n independent draws from the initial law, weight 1.
ParticleEnsemble init_ensemble(const ModelSpec& model, long n, std::uint64_t seed);

/// The run-level mollification policy: cfg.delta when fixed, otherwise the
/// halving search with the floor raised to delta_min_substeps * dt and
/// candidates quantized to multiples of dt.
DeltaChoice choose_run_delta(const BrownianRecord& w, const MkvRunConfig& cfg);

/// Drift of every particle against the frozen pre-step empirical measure:
/// b(s, x_i) + Lambda(potential)(x_i) / max(density(x_i), eta). Exposed so the
/// worked cases can probe the correction directly. Sub-quadratic in one
/// dimension (shared sort, suffix sums, binned density).
std::vector<double> mkv_drifts(const ParticleEnsemble& ens, const ModelSpec& model,
                               const MollifiedPath& path, const MkvRunConfig& cfg,
                               MkvDiagnostics* diag = nullptr);

/// Multiplies the shared weight by exp(mean of the mollified potential under
/// the pre-step empirical measure times dt) and returns the factor. Together
/// with the stepped flow this reproduces the unnormalized mass.
double update_weight(ParticleEnsemble& ens, const ModelSpec& model, const MollifiedPath& path,
                     double dt);

/// One Euler-Maruyama step of the interacting system; all drifts use the
/// same frozen pre-step measure. Reductions run in sorted-position order, so
/// relabeling particles (together with their noise streams) permutes the
/// trajectory bit-exactly.
void mkv_step(ParticleEnsemble& ens, const ModelSpec& model, const MollifiedPath& path,
              const MkvRunConfig& cfg, MkvDiagnostics* diag = nullptr);

struct MkvRun {
    std::vector<double> times;
    std::vector<ParticleEnsemble> snapshots;
    DeltaChoice delta;
    MkvDiagnostics diagnostics;
};

/// Full run: delta selection, init, per-step weight update + move, snapshot
/// emission. The estimate of the unnormalized measure applied to a test
/// function is weight * mean of the function over particles.
MkvRun run_mkv(const ModelSpec& model, const BrownianRecord& w, const MkvRunConfig& cfg);

}  // namespace mvf
