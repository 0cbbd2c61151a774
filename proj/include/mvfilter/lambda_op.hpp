#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mvfilter/common.hpp"
#include "mvfilter/measures.hpp"
#include "mvfilter/model.hpp"

namespace mvf {

/// Regularization knobs for the interaction operator. epsilon floors the
/// kernel distance in d >= 2 (0 means half the density bandwidth); eta_rel
/// floors the density in the drift division, relative to the density's
/// sample maximum. Atoms sitting exactly at the query point are included in
/// the [x, inf) indicator (and excluded from the (-inf, x) one).
struct LambdaConfig {
    double epsilon = 0.0;
    double eta_rel = 1e-8;
};

/// f - mu(f); mu must be a probability measure.
TestFn centered(const DiscreteMeasure& mu, const TestFn& f);

/// One-dimensional interaction operator
///   Lambda_mu f(x) = mu(f 1_[x,inf)) - mu(f) mu(1_[x,inf)),
/// the covariance of f with the right-tail indicator.
double lambda_1d(const DiscreteMeasure& mu, const TestFn& f, double x);
double lambda_1d(const DiscreteMeasure& mu, std::span<const double> f_at_atoms, double x);

/// Evaluates Lambda at every atom of mu in one pass: sort once, suffix-sum,
/// O(n log n) total instead of O(n^2). Output in the original atom order and
/// equal to the pointwise form evaluated at each atom.
std::vector<double> lambda_1d_at_atoms(const DiscreteMeasure& mu, std::span<const double> f_at_atoms);

/// d >= 2 form: (1/omega_d) sum_i w_i (y_i - x) f^mu(y_i) / max(|x-y_i|, eps)^d
/// with omega_d the surface area of the unit sphere. The density argument
/// carries the resolution that the epsilon floor defaults to.
void lambda_dd(const DiscreteMeasure& mu, const DensityEstimate& density, const TestFn& f,
               std::span<const double> x, const LambdaConfig& cfg, std::span<double> out);

double sphere_surface_area(int d);

struct DriftDiagnostics {
    long floor_activations = 0;
    double max_correction = 0.0;
};

/// McKean-Vlasov drift at a point:
///   b(s,x) + Lambda_mu(alpha_delta(s, .))(x) / max(d_mu(x), eta).
/// mu is the current particle law, density its kernel estimate.
std::vector<double> drift_correction(const ModelSpec& model, const MollifiedPath& path,
                                     const DiscreteMeasure& mu, const DensityEstimate& density,
                                     double s, std::span<const double> x, const LambdaConfig& cfg,
                                     DriftDiagnostics* diag = nullptr);

using DensityFn = std::function<double(std::span<const double>)>;

/// Smooth compactly supported test function with analytic gradient.
struct SmoothBump {
    TestFn value;
    std::function<void(std::span<const double>, std::span<double>)> gradient;
};

/// exp(1 - 1/(1 - |x - c|^2/R^2)) inside the radius-R ball around c, 0
/// outside. An off-center bump keeps the identity check away from symmetric
/// cancellations that would make both sides vanish identically.
SmoothBump radial_bump(double radius, std::vector<double> center = {});

/// Residual of the integration-by-parts identity
///   mu(phi f^mu) = integral of sum_j Lambda^j f d_j phi over R^d
/// for a measure given by an explicit density, both sides evaluated by
/// tensor-grid quadrature of the given step (the interaction field under the
/// integral is resolved by a polar rule in d = 2, exactly in d = 1). Goes to
/// zero under step refinement.
double parts_residual(const DensityFn& mu_density, const TestFn& f, const SmoothBump& phi,
                      const Box& box, double quad_step);

/// Sampled lower bound on the Lipschitz constant of a drift field: max over
/// seeded uniform pairs of |drift(x) - drift(y)| / |x - y|. Reported as the
/// existence-condition diagnostic.
double lipschitz_estimate(const std::function<void(std::span<const double>, std::span<double>)>& drift,
                          const Box& box, long sample_count, std::uint64_t seed);

}  // namespace mvf
