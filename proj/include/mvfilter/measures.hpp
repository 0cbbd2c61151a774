#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mvfilter/common.hpp"

namespace mvf {

using TestFn = std::function<double(std::span<const double>)>;

/// Weighted point cloud in R^d. Weights are nonnegative; the empirical case
/// has all weights equal. Immutable by convention once built.
struct DiscreteMeasure {
    int dim = 1;
    std::vector<double> points;   // n x dim, row-major
    std::vector<double> weights;  // n

    long size() const { return static_cast<long>(weights.size()); }
    std::span<const double> point(long i) const {
        return {points.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
    }
    /// Compensated sum of the weights.
    double mass() const;

    /// Equal weights 1/n over the given points.
    static DiscreteMeasure empirical(int dim, std::vector<double> pts);
};

/// mu(f) by compensated summation; permutation-invariant to ~1e-12 relative.
/// A non-finite f value raises NumericError naming the offending point.
double integrate(const DiscreteMeasure& mu, const TestFn& f);

void require_probability(const DiscreteMeasure& mu, const char* what);

/// Bounded test functions phi_0 = 1, phi_1, ... with their sup-norms; the
/// blended-norm and weak-error metrics run over this family. The default
/// family is Gaussian-damped trigonometric: exp(-|x|^2 / 2L^2) cos<k,x> and
/// sin counterparts over a small frequency lattice, L tied to the
/// experiment box.
struct TestFunction {
    TestFn f;
    double sup_norm = 1.0;
    std::string name;
};

struct TestFunctionFamily {
    std::vector<TestFunction> fns;  // fns[0] must be the constant 1

    int size() const { return static_cast<int>(fns.size()); }
    static TestFunctionFamily default_family(int dim, double box_halfwidth, int count = 15);
};

std::vector<double> family_integrals(const DiscreteMeasure& mu, const TestFunctionFamily& fam);

/// sum_k |mu(phi_k) - nu(phi_k)| / (2^k |phi_k|): a truncation of the blended
/// metric that the convergence experiments report.
double m_norm(std::span<const double> mu_integrals, std::span<const double> nu_integrals,
              const TestFunctionFamily& fam);

/// max_{k>=1} |mu(phi_k) - nu(phi_k)| / |phi_k|: finite-family lower proxy of
/// the bounded-Lipschitz-style weak norm.
double weak_error(std::span<const double> mu_integrals, std::span<const double> nu_integrals,
                  const TestFunctionFamily& fam);

template <class M1, class M2>
    requires requires(const M1& a, const M2& b, const TestFunctionFamily& f) {
        family_integrals(a, f);
        family_integrals(b, f);
    }
double m_norm(const M1& mu, const M2& nu, const TestFunctionFamily& fam) {
    return m_norm(std::span<const double>(family_integrals(mu, fam)),
                  std::span<const double>(family_integrals(nu, fam)), fam);
}

template <class M1, class M2>
    requires requires(const M1& a, const M2& b, const TestFunctionFamily& f) {
        family_integrals(a, f);
        family_integrals(b, f);
    }
double weak_error(const M1& mu, const M2& nu, const TestFunctionFamily& fam) {
    return weak_error(std::span<const double>(family_integrals(mu, fam)),
                      std::span<const double>(family_integrals(nu, fam)), fam);
}

struct KdeRule {
    enum class Kind { Silverman, Fixed };
    Kind kind = Kind::Silverman;
    double h = 0.0;  // Fixed only
};

/// Gaussian-mixture density estimate of a discrete measure. operator() is the
/// exact mixture (strictly positive, integrates to the source mass);
/// values_at() is the batch evaluator used in per-step loops - in one
/// dimension it bins the sources on a grid of step bandwidth/8, convolves
/// with the kernel truncated at 8 bandwidths and interpolates linearly,
/// accurate to a few tenths of a percent relative.
class DensityEstimate {
  public:
    DensityEstimate(DiscreteMeasure source, std::vector<double> bandwidth, bool fallback);

    double operator()(std::span<const double> x) const;
    std::vector<double> values_at(std::span<const double> queries) const;

    const std::vector<double>& bandwidth() const { return bandwidth_; }
    const DiscreteMeasure& source() const { return source_; }
    /// True when a degenerate sample forced the floor bandwidth.
    bool used_fallback_bandwidth() const { return fallback_; }

  private:
    DiscreteMeasure source_;
    std::vector<double> bandwidth_;
    double kernel_norm_ = 1.0;
    bool fallback_ = false;
};

/// Bandwidths via Silverman's rule, h_j = s_j (4 / ((d+2) n))^(1/(d+4)), or a
/// fixed h on every coordinate. A zero-variance coordinate under Silverman
/// falls back to the floor bandwidth 1e-3 (reported on the estimate).
DensityEstimate kde_density(const DiscreteMeasure& mu, const KdeRule& rule);

/// CSV persistence (columns w, x_1..x_d).
void save_measure_csv(const DiscreteMeasure& mu, std::ostream& out);
DiscreteMeasure load_measure_csv(std::istream& in);

}  // namespace mvf
