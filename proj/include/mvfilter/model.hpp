#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvfilter/common.hpp"
#include "mvfilter/paths.hpp"

namespace mvf {

using ScalarField = std::function<double(double s, std::span<const double> x)>;
using VectorField = std::function<void(double s, std::span<const double> x, std::span<double> out)>;

/// Initial distribution: a seeded sampler plus an explicit density. The
/// density must be strictly positive wherever the dynamics can live.
struct InitialLaw {
    int dim = 1;
    std::function<void(std::uint64_t seed, std::uint64_t index, std::span<double> out)> sample;
    std::function<double(std::span<const double> x)> density;
};

struct Domain {
    enum class Type { Full, Ball };
    Type type = Type::Full;
    double radius = 0.0;  // Ball only
};

/// Declared sup-norms over the probe box plus the uniform ellipticity
/// constant. Validation probes check the actual coefficients against these.
struct ModelBounds {
    double alpha = 0.0;
    double beta = 0.0;
    double drift = 0.0;
    double diffusion_sq = 0.0;  // bound on |a_ij| where a = sigma sigma^T
    double ellipticity = 0.0;   // lower bound on eigmin(a)
};

/// Coefficient bundle for the signal/sensor pair: signal generator
/// (1/2) a^ij d_i d_j + b^i d_i, potential alpha, sensor functions beta^j,
/// initial law and domain. Immutable after construction; every evaluation is
/// a pure function, safe to call concurrently.
struct ModelSpec {
    int d = 1;  // signal dimension
    int m = 1;  // sensor/noise dimension

    VectorField drift;      // b: out has d entries
    VectorField diffusion;  // sigma: out has d*d entries, row-major
    ScalarField alpha;      // potential
    VectorField sensor;     // beta: out has m entries

    InitialLaw initial_law;
    Domain domain;
    ModelBounds bounds;

    Box probe_box;               // where validation samples space points
    double probe_horizon = 1.0;  // and times
    /// Linear (unbounded) sensors are admitted for the Kalman test family;
    /// their bound violations are demoted to warnings.
    bool sensor_bound_waiver = false;

    /// Present when the model is of the linear-Gaussian family, enabling the
    /// closed-form filter oracle.
    struct LinearCoeffs {
        std::vector<double> A;       // d*d
        std::vector<double> H;       // m*d
        std::vector<double> Q_sqrt;  // d*d
    };
    std::optional<LinearCoeffs> linear;
};

struct ValidationEntry {
    std::string condition;
    double s = 0.0;
    std::vector<double> x;
    double value = 0.0;
};

struct ValidationReport {
    long checked_points = 0;
    std::vector<ValidationEntry> violations;
    std::vector<ValidationEntry> warnings;  // waived sensor bounds land here
    bool passed = false;                    // passed <=> violations.empty()
};

/// Samples `probe_count` space-time points (Halton sequence with a seeded
/// random shift over probe_box x [0, probe_horizon]) and checks: finiteness
/// of all coefficients, the declared sup-norm bounds, uniform ellipticity of
/// a = sigma sigma^T, and strict positivity of the initial density.
/// Deterministic given the seed.
ValidationReport validate_model(const ModelSpec& model, long probe_count, std::uint64_t seed);

/// Potential of the mollified flow:
///   alpha(s,x) - 1/2 sum_j beta_j(s,x)^2 + sum_j beta_j(s,x) * slope_j(s)
/// with slope_j the piecewise-constant derivative of the mollified path.
/// Affine in the slope with coefficient sum_j beta_j; reduces to alpha when
/// the sensors vanish.
double alpha_delta(const ModelSpec& model, const MollifiedPath& path, double s,
                   std::span<const double> x);

/// Allocation-free variant for hot loops; beta_buf must hold m entries.
double alpha_delta_buf(const ModelSpec& model, const MollifiedPath& path, double s,
                       std::span<const double> x, std::span<double> beta_buf);

/// Builds a model from its JSON description (see configs/ for the schema:
/// drift family ou|double_well|zero, constant diffusion, alpha family
/// zero|constant|gaussian_bump, sensor family bounded_sensor_tanh|
/// linear_sensor|none, gaussian initial law, full|ball domain).
ModelSpec model_from_json(const std::string& json_text);

}  // namespace mvf
