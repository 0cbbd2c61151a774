#pragma once

#include <span>
#include <vector>

#include "mvfilter/common.hpp"
#include "mvfilter/measures.hpp"
#include "mvfilter/model.hpp"
#include "mvfilter/paths.hpp"

namespace mvf {

/// Gaussian filter state (mean, covariance). Covariance is kept symmetric
/// and checked for positive semidefiniteness every step.
struct GaussianState {
    int d = 1;
    std::vector<double> mean;  // d
    std::vector<double> cov;   // d*d row-major
};

/// Explicit-Euler Kalman-Bucy filter for the linear-Gaussian family:
///   dm = A m dt + P H^T (dY - H m dt),   dP/dt = A P + P A^T + Q - P H^T H P.
/// The Brownian record is read as the observation path Y on its fine grid
/// (dt must be a multiple of the record step). Returns states at the
/// requested times. Aborts with NumericError if P loses positive
/// semidefiniteness beyond tolerance.
std::vector<std::pair<double, GaussianState>> kalman_bucy(
    std::span<const double> A, std::span<const double> H, std::span<const double> Q_sqrt, int d, int m,
    std::span<const double> m0, std::span<const double> P0, const BrownianRecord& y, double dt,
    std::span<const double> snapshot_times);

/// Density on a uniform 1D grid.
struct GridDensity {
    double x_lo = 0.0;
    double h = 0.0;
    std::vector<double> values;

    long cells() const { return static_cast<long>(values.size()); }
    double node(long i) const { return x_lo + h * static_cast<double>(i); }
    /// Trapezoid mass.
    double mass() const;
    double mean() const;
    double variance() const;
    /// Trapezoid integral of f against the density.
    double integrate(const TestFn& f) const;
};

std::vector<double> family_integrals(const GridDensity& u, const TestFunctionFamily& fam);

struct FdGrid {
    double x_lo = -7.5;
    double x_hi = 7.5;
    double h = 0.02;
};

struct FdResult {
    std::vector<double> times;
    std::vector<GridDensity> densities;
    /// Running integral of the normalized potential mean,
    /// sum over steps of (mean of alpha_delta under the normalized density) dt,
    /// recorded at the snapshot times. Feeds the mass identity.
    std::vector<double> potential_mean_integral;
};

/// 1D finite-difference solve of the mollified forward equation
///   du/dt = L* u + alpha_delta u
/// in conservative flux form (zero-flux boundaries) with explicit Euler in
/// time. Coefficient columns are sampled at the start of each mollification
/// interval (the built-in families are time-homogeneous). The CFL guard requires dt <= h^2 / sup|a|. With normalize = true the
/// density is renormalized every step, which is the normalized-flow solution
/// since the evolution is linear. Boundary leakage beyond tolerance aborts
/// with a suggestion to widen the grid.
FdResult fd_solve(const ModelSpec& model, const MollifiedPath& path, const FdGrid& grid, double dt,
                  bool normalize, std::span<const double> snapshot_times);

/// Mass identity check: the unnormalized mass must equal
/// exp(integral of the normalized potential mean). Returns the largest
/// deviation over the common snapshot times.
double mass_identity_residual(const FdResult& unnormalized, const FdResult& normalized);

}  // namespace mvf
