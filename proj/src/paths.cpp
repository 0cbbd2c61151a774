#include "mvfilter/paths.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "mvfilter/rng.hpp"

namespace mvf {

namespace {

// Nudge (in units of interval index) applied before floor() so that times
// sitting on an interval boundary up to fp error land in the interval that
// starts there.
constexpr double kIndexNudge = 1e-7;

long aligned_steps(double delta, double dt_fine, const char* what) {
    const long k = std::llround(delta / dt_fine);
    if (k < 1 || std::abs(static_cast<double>(k) * dt_fine - delta) > 1e-9 * std::max(1.0, delta)) {
        throw ConfigError(std::string(what) + " must be a positive integer multiple of dt_fine");
    }
    return k;
}

}  // namespace

BrownianRecord sample_brownian(int m, double horizon, double dt_fine, std::uint64_t seed) {
    if (m < 1) throw ConfigError("sample_brownian: m must be >= 1");
    if (!(horizon > 0.0)) throw ConfigError("sample_brownian: horizon must be positive");
    if (!(dt_fine > 0.0)) throw ConfigError("sample_brownian: dt_fine must be positive");

    const long n = static_cast<long>(std::ceil(horizon / dt_fine - 1e-9));
    BrownianRecord w;
    w.m = m;
    w.dt_fine = dt_fine;
    w.seed = seed;
    w.values.assign(static_cast<std::size_t>(n + 1) * m, 0.0);

    const double scale = std::sqrt(dt_fine);
    for (int j = 0; j < m; ++j) {
        const std::uint64_t key = rng::substream(seed, rng::kTagBrownian, static_cast<std::uint64_t>(j));
        double acc = 0.0;
        for (long k = 0; k < n; ++k) {
            acc += scale * rng::normal(key, static_cast<std::uint64_t>(k));
            w.values[static_cast<std::size_t>(k + 1) * m + j] = acc;
        }
    }
    return w;
}

MollifiedPath mollify(const BrownianRecord& w, double delta) {
    const long k = aligned_steps(delta, w.dt_fine, "mollify: delta");
    const long n = w.steps();
    if (k > n) throw ConfigError("mollify: delta exceeds the record horizon");

    const long full = n / k;
    const long rem = n % k;
    const long intervals = full + (rem > 0 ? 1 : 0);

    MollifiedPath p;
    p.m = w.m;
    p.delta = static_cast<double>(k) * w.dt_fine;
    p.horizon = w.horizon();
    p.knot_times.resize(static_cast<std::size_t>(intervals) + 1);
    p.knots.resize((static_cast<std::size_t>(intervals) + 1) * w.m);
    p.slopes.resize(static_cast<std::size_t>(intervals) * w.m);

    for (long i = 0; i <= intervals; ++i) {
        const long fine = std::min(i * k, n);
        p.knot_times[static_cast<std::size_t>(i)] = (fine == n) ? p.horizon : static_cast<double>(i) * p.delta;
        for (int j = 0; j < w.m; ++j) {
            p.knots[static_cast<std::size_t>(i) * w.m + j] = w.value(fine, j);
        }
    }
    for (long i = 0; i < intervals; ++i) {
        const double len = p.knot_times[static_cast<std::size_t>(i + 1)] - p.knot_times[static_cast<std::size_t>(i)];
        for (int j = 0; j < w.m; ++j) {
            p.slopes[static_cast<std::size_t>(i) * w.m + j] =
                (p.knots[static_cast<std::size_t>(i + 1) * w.m + j] - p.knots[static_cast<std::size_t>(i) * w.m + j]) / len;
        }
    }
    return p;
}

long MollifiedPath::interval_of(double t) const {
    if (t < -1e-12 || t > horizon * (1.0 + 1e-12) + 1e-12) {
        throw std::out_of_range("MollifiedPath: time outside [0, horizon]");
    }
    const long idx = static_cast<long>(std::floor(t / delta + kIndexNudge));
    return std::clamp(idx, 0L, intervals() - 1);
}

double MollifiedPath::value(double t, int j) const {
    const long i = interval_of(t);
    const double t0 = knot_times[static_cast<std::size_t>(i)];
    return knots[static_cast<std::size_t>(i) * m + j] + slopes[static_cast<std::size_t>(i) * m + j] * (t - t0);
}

double modulus(const BrownianRecord& w, double delta, double t) {
    const long k = aligned_steps(delta, w.dt_fine, "modulus: delta");
    const long n = w.steps();
    if (t > w.horizon() * (1.0 + 1e-12) + 1e-12) throw std::out_of_range("modulus: t beyond record horizon");
    const long kt = std::clamp(static_cast<long>(std::floor(t / w.dt_fine + kIndexNudge)), 0L, n);

    double worst = 0.0;
    for (long start = 0; start <= kt; start += k) {
        const long stop = std::min(start + k, n);
        for (long s = start + 1; s <= stop; ++s) {
            for (int j = 0; j < w.m; ++j) {
                worst = std::max(worst, std::abs(w.value(s, j) - w.value(start, j)));
            }
        }
    }
    return worst;
}

DeltaChoice choose_delta(const BrownianRecord& w, long n, double t, double delta0, const DeltaOptions& opt) {
    if (n < 1) throw ConfigError("choose_delta: n must be >= 1");
    double target = opt.target_override;
    if (target <= 0.0) {
        target = (opt.rule == DeltaOptions::TargetRule::InvSqrtN) ? 1.0 / std::sqrt(static_cast<double>(n))
                                                                  : 1.0 / static_cast<double>(n);
    }

    const long quantum_steps =
        (opt.quantum > 0.0) ? aligned_steps(opt.quantum, w.dt_fine, "choose_delta: quantum") : 1L;
    long floor_steps =
        (opt.floor > 0.0) ? aligned_steps(opt.floor, w.dt_fine, "choose_delta: floor") : 1L;
    if (floor_steps % quantum_steps != 0) {
        throw ConfigError("choose_delta: floor must be a multiple of the quantum");
    }
    floor_steps = std::max(floor_steps, quantum_steps);
    const long max_steps = (w.steps() / quantum_steps) * quantum_steps;
    if (max_steps < quantum_steps) throw ConfigError("choose_delta: record shorter than the quantum");
    floor_steps = std::min(floor_steps, max_steps);
    auto snap = [&](long steps) {
        return std::max(floor_steps, (steps / quantum_steps) * quantum_steps);
    };

    long k = snap(std::max(floor_steps, static_cast<long>(std::llround(delta0 / w.dt_fine))));
    k = std::min(k, snap(w.steps()));

    DeltaChoice best;
    best.target = target;
    while (true) {
        const double delta = static_cast<double>(k) * w.dt_fine;
        const double osc = modulus(w, delta, t);
        best.delta = delta;
        best.achieved_modulus = osc;
        if (osc <= target) {
            best.target_met = true;
            return best;
        }
        if (k == floor_steps) break;
        k = snap(k / 2);
    }
    best.target_met = false;  // even the floor misses the target; caller records the warning
    return best;
}

void save_path_csv(const BrownianRecord& w, std::ostream& out) {
    out << "t";
    for (int j = 1; j <= w.m; ++j) out << ",W_" << j;
    out << "\n";
    const long n = w.steps();
    for (long k = 0; k <= n; ++k) {
        out << format_full(static_cast<double>(k) * w.dt_fine);
        for (int j = 0; j < w.m; ++j) out << "," << format_full(w.value(k, j));
        out << "\n";
    }
}

BrownianRecord load_path_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("path csv: empty input");
    int m = -1;  // from header
    {
        int cols = 1;
        for (char c : line) cols += (c == ',');
        m = cols - 1;
        if (m < 1) throw ConfigError("path csv: expected columns t,W_1..W_m");
    }

    std::vector<double> times;
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        int col = 0;
        while (std::getline(row, cell, ',')) {
            const double v = std::stod(cell);
            if (col == 0) {
                times.push_back(v);
            } else {
                values.push_back(v);
            }
            ++col;
        }
        if (col != m + 1) throw ConfigError("path csv: ragged row");
    }
    if (times.size() < 2) throw ConfigError("path csv: need at least two samples");

    const double dt = times[1] - times[0];
    for (std::size_t k = 1; k < times.size(); ++k) {
        if (std::abs(times[k] - times[k - 1] - dt) > 1e-9 * std::max(1.0, dt)) {
            throw ConfigError("path csv: non-uniform time grid");
        }
    }
    BrownianRecord w;
    w.m = m;
    w.dt_fine = dt;
    w.seed = 0;  // unknown for externally produced paths
    w.values = std::move(values);
    return w;
}

}  // namespace mvf
