#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mvfilter/common.hpp"

namespace mvf {

/// An m-dimensional Brownian path sampled on a uniform fine grid. The fine
/// record is the single source of Brownian truth: the mollified path, the
/// weighted baseline and the Kalman oracle all consume the same record, so
/// method comparisons are paired.
struct BrownianRecord {
    int m = 1;
    double dt_fine = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> values;  // (steps+1) x m, row-major; values[k*m+j] = W_j(k*dt_fine)

    long steps() const { return static_cast<long>(values.size() / static_cast<std::size_t>(m)) - 1; }
    double horizon() const { return static_cast<double>(steps()) * dt_fine; }
    double value(long k, int j) const { return values[static_cast<std::size_t>(k) * m + j]; }
};

/// Piecewise-linear interpolation of a Brownian record over a uniform
/// partition of step `delta`. If the horizon is not a multiple of delta the
/// final interval is shorter (interpolation toward the last recorded value).
struct MollifiedPath {
    int m = 1;
    double delta = 0.0;
    double horizon = 0.0;
    std::vector<double> knot_times;  // I+1 entries, knot_times[i] = i*delta, last = horizon
    std::vector<double> knots;       // (I+1) x m
    std::vector<double> slopes;      // I x m, slopes[i*m+j] = (knot[i+1]-knot[i])_j / interval length

    long intervals() const { return static_cast<long>(slopes.size() / static_cast<std::size_t>(m)); }

    long interval_of(double t) const;
    double value(double t, int j) const;
    /// Slope of coordinate j on the interval containing t (piecewise constant).
    double slope(double t, int j) const {
        return slopes[static_cast<std::size_t>(interval_of(t)) * m + j];
    }
};

/// Samples W on the fine grid; increments are N(0, dt_fine I_m), addressed by
/// a counter RNG so the record is a pure function of the seed.
BrownianRecord sample_brownian(int m, double horizon, double dt_fine, std::uint64_t seed);

/// Builds the piecewise-linear path with knots at multiples of delta.
/// delta must be an integer multiple of the record's fine step.
MollifiedPath mollify(const BrownianRecord& w, double delta);

/// Maximal oscillation of the record inside the partition intervals covering
/// [0, t]: max over intervals, fine-grid points s in the interval and
/// coordinates of |W(s) - W(interval start)|. Controls the mollification
/// error, and therefore how delta must shrink with n.
double modulus(const BrownianRecord& w, double delta, double t);

struct DeltaOptions {
    enum class TargetRule { InvSqrtN, InvN };
    TargetRule rule = TargetRule::InvSqrtN;
    double target_override = 0.0;  // > 0 wins over the rule
    double floor = 0.0;            // smallest admissible delta; 0 means dt_fine
    double quantum = 0.0;          // candidates snap to multiples of this; 0 means dt_fine
};

struct DeltaChoice {
    double delta = 0.0;
    bool target_met = false;
    double achieved_modulus = 0.0;
    double target = 0.0;
};

/// Walks the halving chain delta0, delta0/2, ... (each candidate snapped to
/// the fine grid, chain clipped at the floor) and returns the largest delta
/// whose modulus meets the target. Default target 1/sqrt(n); 1/n available by
/// rule. When even the floor misses the target the floor is returned with
/// target_met = false so callers can record the warning.
DeltaChoice choose_delta(const BrownianRecord& w, long n, double t, double delta0,
                         const DeltaOptions& opt = {});

/// CSV persistence (columns t, W_1..W_m) for differential testing against
/// other implementations.
void save_path_csv(const BrownianRecord& w, std::ostream& out);
BrownianRecord load_path_csv(std::istream& in);

}  // namespace mvf
