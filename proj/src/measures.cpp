#include "mvfilter/measures.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace mvf {

namespace {
constexpr double kTwoPi = 6.283185307179586476925287;
constexpr double kKernelCutoff = 8.0;   // bandwidths; tail mass beyond is < 1e-15
constexpr double kFloorBandwidth = 1e-3;
}  // namespace

double DiscreteMeasure::mass() const {
    KahanSum s;
    for (double w : weights) s.add(w);
    return s.value();
}

DiscreteMeasure DiscreteMeasure::empirical(int dim, std::vector<double> pts) {
    DiscreteMeasure mu;
    mu.dim = dim;
    const long n = static_cast<long>(pts.size()) / dim;
    mu.points = std::move(pts);
    mu.weights.assign(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n));
    return mu;
}

double integrate(const DiscreteMeasure& mu, const TestFn& f) {
    KahanSum s;
    for (long i = 0; i < mu.size(); ++i) {
        const double v = f(mu.point(i));
        if (!std::isfinite(v)) {
            std::string where = "integrate: non-finite value at point " + std::to_string(i) + " (";
            for (int j = 0; j < mu.dim; ++j) {
                where += (j ? "," : "") + format_full(mu.point(i)[static_cast<std::size_t>(j)]);
            }
            throw NumericError(where + ")");
        }
        s.add(mu.weights[static_cast<std::size_t>(i)] * v);
    }
    return s.value();
}

void require_probability(const DiscreteMeasure& mu, const char* what) {
    if (std::abs(mu.mass() - 1.0) > 1e-9) {
        throw NumericError(std::string(what) + ": measure must be a probability (mass " +
                           format_full(mu.mass()) + ")");
    }
}

TestFunctionFamily TestFunctionFamily::default_family(int dim, double box_halfwidth, int count) {
    if (count < 1) throw ConfigError("test family: count must be >= 1");
    TestFunctionFamily fam;
    fam.fns.push_back({[](std::span<const double>) { return 1.0; }, 1.0, "one"});

    const double L = std::max(box_halfwidth, 1e-6) / 2.0;
    // frequency lattice: per wave index q use |k| = 0.5 * q along a rotating axis mix
    int q = 1;
    while (static_cast<int>(fam.fns.size()) < count) {
        std::vector<double> k(static_cast<std::size_t>(dim), 0.0);
        if (dim == 1) {
            k[0] = 0.5 * q;
        } else {
            // cycle directions: e_1, e_2, ..., diag, then rescale
            const int cycle = q % (dim + 1);
            const double mag = 0.5 * (1 + q / (dim + 1));
            if (cycle == dim) {
                for (int j = 0; j < dim; ++j) k[static_cast<std::size_t>(j)] = mag;
            } else {
                k[static_cast<std::size_t>(cycle)] = mag;
            }
        }
        for (int trig = 0; trig < 2 && static_cast<int>(fam.fns.size()) < count; ++trig) {
            auto f = [k, L, trig](std::span<const double> x) {
                double q2 = 0.0, phase = 0.0;
                for (std::size_t j = 0; j < k.size(); ++j) {
                    q2 += x[j] * x[j];
                    phase += k[j] * x[j];
                }
                const double damp = std::exp(-0.5 * q2 / (L * L));
                return damp * (trig == 0 ? std::cos(phase) : std::sin(phase));
            };
            // sup-norm by dense scan (the damping makes the sup interior)
            double sup = 0.0;
            const int scan = 4096;
            std::vector<double> x(static_cast<std::size_t>(dim), 0.0);
            for (int s = 0; s <= scan; ++s) {
                const double t = -8.0 * L + 16.0 * L * s / scan;
                for (int j = 0; j < dim; ++j) x[static_cast<std::size_t>(j)] = t;  // scan the diagonal
                sup = std::max(sup, std::abs(f(x)));
                if (dim > 1) {
                    std::fill(x.begin(), x.end(), 0.0);
                    x[0] = t;  // and the first axis
                    sup = std::max(sup, std::abs(f(x)));
                }
            }
            sup = std::max(sup, 1e-3);
            fam.fns.push_back({std::move(f), sup,
                               (trig == 0 ? "cos_q" : "sin_q") + std::to_string(q)});
        }
        ++q;
    }
    return fam;
}

std::vector<double> family_integrals(const DiscreteMeasure& mu, const TestFunctionFamily& fam) {
    std::vector<double> out;
    out.reserve(fam.fns.size());
    for (const auto& tf : fam.fns) out.push_back(integrate(mu, tf.f));
    return out;
}

double m_norm(std::span<const double> mu_integrals, std::span<const double> nu_integrals,
              const TestFunctionFamily& fam) {
    if (fam.fns.empty()) throw ConfigError("m_norm: empty test family");
    double sum = 0.0, scale = 1.0;
    for (std::size_t k = 0; k < fam.fns.size(); ++k, scale *= 0.5) {
        sum += scale * std::abs(mu_integrals[k] - nu_integrals[k]) / fam.fns[k].sup_norm;
    }
    return sum;
}

double weak_error(std::span<const double> mu_integrals, std::span<const double> nu_integrals,
                  const TestFunctionFamily& fam) {
    double worst = 0.0;
    for (std::size_t k = 1; k < fam.fns.size(); ++k) {
        worst = std::max(worst, std::abs(mu_integrals[k] - nu_integrals[k]) / fam.fns[k].sup_norm);
    }
    return worst;
}

DensityEstimate::DensityEstimate(DiscreteMeasure source, std::vector<double> bandwidth, bool fallback)
    : source_(std::move(source)), bandwidth_(std::move(bandwidth)), fallback_(fallback) {
    double norm = 1.0;
    for (double h : bandwidth_) norm *= h * std::sqrt(kTwoPi);
    kernel_norm_ = 1.0 / norm;
}

double DensityEstimate::operator()(std::span<const double> x) const {
    const int d = source_.dim;
    KahanSum s;
    for (long i = 0; i < source_.size(); ++i) {
        const auto p = source_.point(i);
        double q = 0.0;
        for (int j = 0; j < d; ++j) {
            q += sq((x[static_cast<std::size_t>(j)] - p[static_cast<std::size_t>(j)]) / bandwidth_[static_cast<std::size_t>(j)]);
        }
        s.add(source_.weights[static_cast<std::size_t>(i)] * std::exp(-0.5 * q));
    }
    return kernel_norm_ * s.value();
}

std::vector<double> DensityEstimate::values_at(std::span<const double> queries) const {
    const int d = source_.dim;
    const long nq = static_cast<long>(queries.size()) / d;
    std::vector<double> out(static_cast<std::size_t>(nq), 0.0);

    if (d != 1 || source_.size() < 16) {
        for (long q = 0; q < nq; ++q) {
            out[static_cast<std::size_t>(q)] =
                (*this)({queries.data() + static_cast<std::size_t>(q) * d, static_cast<std::size_t>(d)});
        }
        return out;
    }

    // 1D binned path: linear binning -> discrete convolution -> linear interp.
    const double h = bandwidth_[0];
    const double step = h / 8.0;
    auto [src_lo, src_hi] = std::minmax_element(source_.points.begin(), source_.points.end());
    double lo = *src_lo, hi = *src_hi;
    for (long q = 0; q < nq; ++q) {
        lo = std::min(lo, queries[static_cast<std::size_t>(q)]);
        hi = std::max(hi, queries[static_cast<std::size_t>(q)]);
    }
    lo -= 2.0 * step;
    hi += 2.0 * step;
    const long cells = static_cast<long>(std::ceil((hi - lo) / step)) + 1;

    std::vector<double> binned(static_cast<std::size_t>(cells), 0.0);
    // accumulate in position order so results do not depend on particle labels
    std::vector<long> order(static_cast<std::size_t>(source_.size()));
    for (long i = 0; i < source_.size(); ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](long a, long b) { return source_.points[static_cast<std::size_t>(a)] < source_.points[static_cast<std::size_t>(b)]; });
    for (long idx : order) {
        const double u = (source_.points[static_cast<std::size_t>(idx)] - lo) / step;
        const long cell = std::clamp(static_cast<long>(std::floor(u)), 0L, cells - 2);
        const double frac = u - static_cast<double>(cell);
        const double w = source_.weights[static_cast<std::size_t>(idx)];
        binned[static_cast<std::size_t>(cell)] += w * (1.0 - frac);
        binned[static_cast<std::size_t>(cell + 1)] += w * frac;
    }

    const long taps = static_cast<long>(std::ceil(kKernelCutoff * h / step));
    std::vector<double> kernel(static_cast<std::size_t>(taps) + 1);
    for (long k = 0; k <= taps; ++k) {
        kernel[static_cast<std::size_t>(k)] = kernel_norm_ * std::exp(-0.5 * sq(static_cast<double>(k) * step / h));
    }

    std::vector<double> field(static_cast<std::size_t>(cells), 0.0);
    for (long c = 0; c < cells; ++c) {
        const double w = binned[static_cast<std::size_t>(c)];
        if (w == 0.0) continue;
        const long k_lo = std::max(0L, c - taps), k_hi = std::min(cells - 1, c + taps);
        for (long k = k_lo; k <= k_hi; ++k) {
            field[static_cast<std::size_t>(k)] += w * kernel[static_cast<std::size_t>(std::abs(k - c))];
        }
    }

    for (long q = 0; q < nq; ++q) {
        const double u = (queries[static_cast<std::size_t>(q)] - lo) / step;
        const long cell = std::clamp(static_cast<long>(std::floor(u)), 0L, cells - 2);
        const double frac = u - static_cast<double>(cell);
        out[static_cast<std::size_t>(q)] = (1.0 - frac) * field[static_cast<std::size_t>(cell)] +
                                           frac * field[static_cast<std::size_t>(cell + 1)];
    }
    return out;
}

DensityEstimate kde_density(const DiscreteMeasure& mu, const KdeRule& rule) {
    const int d = mu.dim;
    std::vector<double> h(static_cast<std::size_t>(d));
    bool fallback = false;

    if (rule.kind == KdeRule::Kind::Fixed) {
        if (!(rule.h > 0.0)) throw ConfigError("kde: fixed bandwidth must be positive");
        std::fill(h.begin(), h.end(), rule.h);
    } else {
        const long n = mu.size();
        if (n < 2) throw ConfigError("kde: silverman rule needs at least two points");
        const double mass = mu.mass();
        const double factor = std::pow(4.0 / ((d + 2.0) * static_cast<double>(n)), 1.0 / (d + 4.0));
        for (int j = 0; j < d; ++j) {
            KahanSum mean_acc;
            for (long i = 0; i < n; ++i) {
                mean_acc.add(mu.weights[static_cast<std::size_t>(i)] * mu.point(i)[static_cast<std::size_t>(j)]);
            }
            const double mean = mean_acc.value() / mass;
            KahanSum var_acc;
            for (long i = 0; i < n; ++i) {
                var_acc.add(mu.weights[static_cast<std::size_t>(i)] * sq(mu.point(i)[static_cast<std::size_t>(j)] - mean));
            }
            const double sd = std::sqrt(std::max(0.0, var_acc.value() / mass));
            if (sd > 0.0) {
                h[static_cast<std::size_t>(j)] = sd * factor;
            } else {
                h[static_cast<std::size_t>(j)] = kFloorBandwidth;
                fallback = true;
            }
        }
    }
    return DensityEstimate(mu, std::move(h), fallback);
}

void save_measure_csv(const DiscreteMeasure& mu, std::ostream& out) {
    out << "w";
    for (int j = 1; j <= mu.dim; ++j) out << ",x_" << j;
    out << "\n";
    for (long i = 0; i < mu.size(); ++i) {
        out << format_full(mu.weights[static_cast<std::size_t>(i)]);
        for (int j = 0; j < mu.dim; ++j) out << "," << format_full(mu.point(i)[static_cast<std::size_t>(j)]);
        out << "\n";
    }
}

DiscreteMeasure load_measure_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("measure csv: empty input");
    int cols = 1;
    for (char c : line) cols += (c == ',');
    if (cols < 2) throw ConfigError("measure csv: expected columns w,x_1..x_d");

    DiscreteMeasure mu;
    mu.dim = cols - 1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        int col = 0;
        while (std::getline(row, cell, ',')) {
            const double v = std::stod(cell);
            if (col == 0) {
                mu.weights.push_back(v);
            } else {
                mu.points.push_back(v);
            }
            ++col;
        }
        if (col != cols) throw ConfigError("measure csv: ragged row");
    }
    return mu;
}

}  // namespace mvf
