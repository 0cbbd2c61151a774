#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvf {

/// Configuration or precondition problem (bad config file, misaligned grids,
/// malformed dimensions). Maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numeric breakdown during a run (non-finite state, overflow, lost
/// positive-definiteness). Maps to CLI exit code 1.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Compensated (Kahan) accumulator. Keeps reductions permutation-stable to
/// ~1e-12 relative over the ensemble sizes used here.
class KahanSum {
  public:
    void add(double x) {
        const double y = x - carry_;
        const double t = sum_ + y;
        carry_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

  private:
    double sum_ = 0.0;
    double carry_ = 0.0;
};

/// Axis-aligned box in R^d.
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    int dim() const { return static_cast<int>(lo.size()); }
    static Box cube(int d, double halfwidth) {
        Box b;
        b.lo.assign(static_cast<std::size_t>(d), -halfwidth);
        b.hi.assign(static_cast<std::size_t>(d), halfwidth);
        return b;
    }
};

inline double sq(double x) { return x * x; }

double norm2(std::span<const double> x);

/// Formats a double with full round-trip precision ("%.17g"); used by all CSV
/// writers so repeated runs are byte-identical.
std::string format_full(double x);

}  // namespace mvf
