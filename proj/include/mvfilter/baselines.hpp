#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mvfilter/common.hpp"
#include "mvfilter/measures.hpp"
#include "mvfilter/model.hpp"
#include "mvfilter/paths.hpp"

namespace mvf {

/// Classical weighted-particle representation: independent signal paths with
/// per-particle log-weights driven by the observation record. Weights are
/// kept in log space (the variance of the raw weights grows exponentially
/// with time, which is exactly what this baseline is here to display).
struct WeightedEnsemble {
    int dim = 1;
    double time = 0.0;
    std::vector<double> positions;   // n x dim
    std::vector<double> logweights;  // n

    long size() const { return static_cast<long>(logweights.size()); }
    std::span<const double> position(long i) const {
        return {positions.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
    }
};

/// Effective sample size (sum w)^2 / sum w^2 on the normalized weights;
/// between 1 and n, scale-invariant.
double ess(const WeightedEnsemble& ens);

/// Probability measure with weights exp(logw) normalized (max-subtracted).
DiscreteMeasure normalized_measure(const WeightedEnsemble& ens);

/// Estimate of the unnormalized mass, (1/n) sum_i exp(logw_i), computed via
/// log-sum-exp.
double mass_estimate(const WeightedEnsemble& ens);

struct WeightedRun {
    std::vector<double> times;
    std::vector<WeightedEnsemble> snapshots;
};

/// Euler-Maruyama for the positions plus the pathwise exponential weight
///   dlog A = (alpha - 1/2 sum_j beta_j^2) dt + sum_j beta_j dW_j
/// using the record's true increments (dt must be a multiple of the fine
/// step). The estimate of the unnormalized measure applied to phi is
/// (1/n) sum_i exp(logw_i) phi(X_i).
WeightedRun run_weighted(const ModelSpec& model, const BrownianRecord& w, long n, double dt,
                         double horizon, std::uint64_t seed, std::span<const double> snapshot_times);

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Plain Monte Carlo for the mollified Feynman-Kac value
///   E[phi(X_T) exp(integral of the mollified potential along X)]
/// over non-interacting signal paths; the exponent is a dt-Riemann sum.
/// Returns mean and CLT standard error per test function (one set of paths
/// serves all of them).
std::vector<McEstimate> fkac_mollified(const ModelSpec& model, const MollifiedPath& path,
                                       std::span<const TestFn> phis, long n_mc, double dt,
                                       std::uint64_t seed);

}  // namespace mvf
