#include "mvfilter/lambda_op.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "mvfilter/rng.hpp"

namespace mvf {

namespace {

double checked_mean(const DiscreteMeasure& mu, std::span<const double> f_vals) {
    KahanSum s;
    for (long i = 0; i < mu.size(); ++i) s.add(mu.weights[static_cast<std::size_t>(i)] * f_vals[static_cast<std::size_t>(i)]);
    return s.value();
}

std::vector<double> eval_at_atoms(const DiscreteMeasure& mu, const TestFn& f) {
    std::vector<double> vals(static_cast<std::size_t>(mu.size()));
    for (long i = 0; i < mu.size(); ++i) vals[static_cast<std::size_t>(i)] = f(mu.point(i));
    return vals;
}

}  // namespace

TestFn centered(const DiscreteMeasure& mu, const TestFn& f) {
    require_probability(mu, "centered");
    const double mean = integrate(mu, f);
    return [f, mean](std::span<const double> x) { return f(x) - mean; };
}

double lambda_1d(const DiscreteMeasure& mu, std::span<const double> f_at_atoms, double x) {
    require_probability(mu, "lambda_1d");
    KahanSum tail_f, tail_mass, total_f;
    for (long i = 0; i < mu.size(); ++i) {
        const double w = mu.weights[static_cast<std::size_t>(i)];
        const double v = f_at_atoms[static_cast<std::size_t>(i)];
        total_f.add(w * v);
        if (mu.points[static_cast<std::size_t>(i)] >= x) {  // closed at x
            tail_f.add(w * v);
            tail_mass.add(w);
        }
    }
    return tail_f.value() - total_f.value() * tail_mass.value();
}

double lambda_1d(const DiscreteMeasure& mu, const TestFn& f, double x) {
    if (mu.dim != 1) throw ConfigError("lambda_1d: measure must be one-dimensional");
    return lambda_1d(mu, std::span<const double>(eval_at_atoms(mu, f)), x);
}

std::vector<double> lambda_1d_at_atoms(const DiscreteMeasure& mu, std::span<const double> f_at_atoms) {
    if (mu.dim != 1) throw ConfigError("lambda_1d_at_atoms: measure must be one-dimensional");
    const long n = mu.size();

    std::vector<long> order(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](long a, long b) {
        return mu.points[static_cast<std::size_t>(a)] < mu.points[static_cast<std::size_t>(b)];
    });

    // suffix sums over the sorted atoms
    std::vector<double> suffix_wf(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> suffix_w(static_cast<std::size_t>(n) + 1, 0.0);
    for (long r = n - 1; r >= 0; --r) {
        const long i = order[static_cast<std::size_t>(r)];
        suffix_wf[static_cast<std::size_t>(r)] =
            suffix_wf[static_cast<std::size_t>(r) + 1] + mu.weights[static_cast<std::size_t>(i)] * f_at_atoms[static_cast<std::size_t>(i)];
        suffix_w[static_cast<std::size_t>(r)] =
            suffix_w[static_cast<std::size_t>(r) + 1] + mu.weights[static_cast<std::size_t>(i)];
    }
    const double total_f = suffix_wf[0];

    // rank of the first atom sharing each value, so the closed-at-x tie rule
    // matches the pointwise form under duplicates
    std::vector<long> first_of_value(static_cast<std::size_t>(n));
    for (long r = 0; r < n; ++r) {
        if (r > 0 && mu.points[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] ==
                         mu.points[static_cast<std::size_t>(order[static_cast<std::size_t>(r - 1)])]) {
            first_of_value[static_cast<std::size_t>(r)] = first_of_value[static_cast<std::size_t>(r - 1)];
        } else {
            first_of_value[static_cast<std::size_t>(r)] = r;
        }
    }

    std::vector<double> out(static_cast<std::size_t>(n));
    for (long r = 0; r < n; ++r) {
        const long i = order[static_cast<std::size_t>(r)];
        const long k0 = first_of_value[static_cast<std::size_t>(r)];
        out[static_cast<std::size_t>(i)] =
            suffix_wf[static_cast<std::size_t>(k0)] - total_f * suffix_w[static_cast<std::size_t>(k0)];
    }
    return out;
}

double sphere_surface_area(int d) {
    // surface area of S_{d-1} in R^d
    return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

void lambda_dd(const DiscreteMeasure& mu, const DensityEstimate& density, const TestFn& f,
               std::span<const double> x, const LambdaConfig& cfg, std::span<double> out) {
    const int d = mu.dim;
    if (d < 2) throw ConfigError("lambda_dd: use lambda_1d in one dimension");
    require_probability(mu, "lambda_dd");

    double eps = cfg.epsilon;
    if (eps <= 0.0) {
        double geo = 1.0;
        for (double h : density.bandwidth()) geo *= h;
        eps = 0.5 * std::pow(geo, 1.0 / d);
    }

    const auto f_vals = eval_at_atoms(mu, f);
    const double mean = checked_mean(mu, f_vals);
    const double inv_area = 1.0 / sphere_surface_area(d);

    std::vector<KahanSum> acc(static_cast<std::size_t>(d));
    for (long i = 0; i < mu.size(); ++i) {
        const auto p = mu.point(i);
        double dist2 = 0.0;
        for (int j = 0; j < d; ++j) dist2 += sq(p[static_cast<std::size_t>(j)] - x[static_cast<std::size_t>(j)]);
        const double dist = std::max(std::sqrt(dist2), eps);
        const double scale =
            mu.weights[static_cast<std::size_t>(i)] * (f_vals[static_cast<std::size_t>(i)] - mean) / std::pow(dist, d);
        for (int j = 0; j < d; ++j) {
            acc[static_cast<std::size_t>(j)].add(scale * (p[static_cast<std::size_t>(j)] - x[static_cast<std::size_t>(j)]));
        }
    }
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] = inv_area * acc[static_cast<std::size_t>(j)].value();
}

std::vector<double> drift_correction(const ModelSpec& model, const MollifiedPath& path,
                                     const DiscreteMeasure& mu, const DensityEstimate& density,
                                     double s, std::span<const double> x, const LambdaConfig& cfg,
                                     DriftDiagnostics* diag) {
    const int d = model.d;
    std::vector<double> beta_buf(static_cast<std::size_t>(model.m));
    std::vector<double> f_vals(static_cast<std::size_t>(mu.size()));
    for (long i = 0; i < mu.size(); ++i) {
        f_vals[static_cast<std::size_t>(i)] = alpha_delta_buf(model, path, s, mu.point(i), beta_buf);
    }

    const auto dens_at_atoms = density.values_at(mu.points);
    double dens_max = 0.0;
    for (double v : dens_at_atoms) dens_max = std::max(dens_max, v);
    const double eta = cfg.eta_rel * dens_max;

    std::vector<double> lam(static_cast<std::size_t>(d));
    if (d == 1) {
        lam[0] = lambda_1d(mu, std::span<const double>(f_vals), x[0]);
    } else {
        // reuse the atom values through a lookup is not possible pointwise;
        // evaluate the potential directly
        auto f = [&](std::span<const double> y) {
            std::vector<double> buf(static_cast<std::size_t>(model.m));
            return alpha_delta_buf(model, path, s, y, buf);
        };
        lambda_dd(mu, density, f, x, cfg, lam);
    }

    const double dens = density(x);
    const double floored = std::max(dens, eta);
    if (diag && dens < eta) ++diag->floor_activations;

    std::vector<double> drift(static_cast<std::size_t>(d));
    model.drift(s, x, drift);
    for (int j = 0; j < d; ++j) {
        const double corr = lam[static_cast<std::size_t>(j)] / floored;
        drift[static_cast<std::size_t>(j)] += corr;
        if (diag) diag->max_correction = std::max(diag->max_correction, std::abs(corr));
    }
    return drift;
}

SmoothBump radial_bump(double radius, std::vector<double> center) {
    if (!(radius > 0.0)) throw ConfigError("radial_bump: radius must be positive");
    const double r2 = radius * radius;
    auto c = std::make_shared<std::vector<double>>(std::move(center));
    auto shifted_sq = [c](std::span<const double> x) {
        double u = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double off = j < c->size() ? (*c)[j] : 0.0;
            u += sq(x[j] - off);
        }
        return u;
    };
    SmoothBump bump;
    bump.value = [r2, shifted_sq](std::span<const double> x) {
        const double u = shifted_sq(x) / r2;
        if (u >= 1.0) return 0.0;
        return std::exp(1.0 - 1.0 / (1.0 - u));
    };
    bump.gradient = [r2, c, shifted_sq](std::span<const double> x, std::span<double> out) {
        const double u = shifted_sq(x) / r2;
        if (u >= 1.0) {
            std::fill(out.begin(), out.end(), 0.0);
            return;
        }
        const double val = std::exp(1.0 - 1.0 / (1.0 - u));
        const double chain = -val / sq(1.0 - u);
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double off = j < c->size() ? (*c)[j] : 0.0;
            out[j] = chain * 2.0 * (x[j] - off) / r2;
        }
    };
    return bump;
}

namespace {

struct QuadGrid {
    std::vector<double> nodes;
    double step = 0.0;
    long count = 0;
};

QuadGrid axis_grid(double lo, double hi, double step) {
    QuadGrid g;
    g.count = static_cast<long>(std::ceil((hi - lo) / step - 1e-9)) + 1;
    g.step = (hi - lo) / static_cast<double>(g.count - 1);
    g.nodes.resize(static_cast<std::size_t>(g.count));
    for (long i = 0; i < g.count; ++i) g.nodes[static_cast<std::size_t>(i)] = lo + g.step * static_cast<double>(i);
    return g;
}

// All integrands here vanish smoothly at the box edge, so the composite
// trapezoid rule converges fast; the dominating error is the suffix rule
// inside the interaction field.
double parts_residual_1d(const DensityFn& dens, const TestFn& f, const SmoothBump& phi,
                         const Box& box, double step) {
    const QuadGrid g = axis_grid(box.lo[0], box.hi[0], step);
    const long n = g.count;
    std::vector<double> gv(static_cast<std::size_t>(n));  // (f - mu f) * density
    std::vector<double> dv(static_cast<std::size_t>(n));
    std::vector<double> fv(static_cast<std::size_t>(n));

    for (long i = 0; i < n; ++i) {
        const std::span<const double> x{&g.nodes[static_cast<std::size_t>(i)], 1};
        dv[static_cast<std::size_t>(i)] = dens(x);
        fv[static_cast<std::size_t>(i)] = f(x);
    }
    auto trapz = [&](auto&& value) {
        KahanSum s;
        for (long i = 0; i < n; ++i) {
            const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
            s.add(w * value(i));
        }
        return s.value() * g.step;
    };

    const double mean_f = trapz([&](long i) { return fv[static_cast<std::size_t>(i)] * dv[static_cast<std::size_t>(i)]; });
    for (long i = 0; i < n; ++i) {
        gv[static_cast<std::size_t>(i)] = (fv[static_cast<std::size_t>(i)] - mean_f) * dv[static_cast<std::size_t>(i)];
    }

    const double lhs = trapz([&](long i) {
        const std::span<const double> x{&g.nodes[static_cast<std::size_t>(i)], 1};
        return phi.value(x) * gv[static_cast<std::size_t>(i)];
    });

    // Lambda(x_i) = integral of g over [x_i, inf): suffix trapezoid
    std::vector<double> lambda(static_cast<std::size_t>(n), 0.0);
    for (long i = n - 2; i >= 0; --i) {
        lambda[static_cast<std::size_t>(i)] =
            lambda[static_cast<std::size_t>(i) + 1] +
            0.5 * g.step * (gv[static_cast<std::size_t>(i)] + gv[static_cast<std::size_t>(i) + 1]);
    }
    const double rhs = trapz([&](long i) {
        const std::span<const double> x{&g.nodes[static_cast<std::size_t>(i)], 1};
        double grad = 0.0;
        phi.gradient(x, {&grad, 1});
        return lambda[static_cast<std::size_t>(i)] * grad;
    });

    return std::abs(lhs - rhs);
}

double parts_residual_2d(const DensityFn& dens, const TestFn& f, const SmoothBump& phi,
                         const Box& box, double step) {
    const QuadGrid gx = axis_grid(box.lo[0], box.hi[0], step);
    const QuadGrid gy = axis_grid(box.lo[1], box.hi[1], step);

    // mu(f): tensor trapezoid
    KahanSum mean_acc;
    for (long i = 0; i < gx.count; ++i) {
        const double wx = (i == 0 || i == gx.count - 1) ? 0.5 : 1.0;
        for (long j = 0; j < gy.count; ++j) {
            const double wy = (j == 0 || j == gy.count - 1) ? 0.5 : 1.0;
            const double pt[2] = {gx.nodes[static_cast<std::size_t>(i)], gy.nodes[static_cast<std::size_t>(j)]};
            const std::span<const double> x(pt, 2);
            mean_acc.add(wx * wy * f(x) * dens(x));
        }
    }
    const double mean_f = mean_acc.value() * gx.step * gy.step;

    auto centered_g = [&](double x0, double x1) {
        const double pt[2] = {x0, x1};
        const std::span<const double> x(pt, 2);
        return (f(x) - mean_f) * dens(x);
    };

    KahanSum lhs_acc, rhs_acc;
    const int n_theta = 48;
    const double d_theta = 2.0 * std::numbers::pi / n_theta;
    std::vector<double> cos_t(n_theta), sin_t(n_theta);
    for (int t = 0; t < n_theta; ++t) {
        cos_t[static_cast<std::size_t>(t)] = std::cos(d_theta * t);
        sin_t[static_cast<std::size_t>(t)] = std::sin(d_theta * t);
    }
    const double inv_area = 1.0 / (2.0 * std::numbers::pi);
    // rays only need to reach the farthest box corner from the query point
    auto ray_reach = [&](double x0, double x1) {
        double reach = 0.0;
        for (double cx : {box.lo[0], box.hi[0]}) {
            for (double cy : {box.lo[1], box.hi[1]}) {
                reach = std::max(reach, std::hypot(cx - x0, cy - x1));
            }
        }
        return reach;
    };

    for (long i = 0; i < gx.count; ++i) {
        const double wx = (i == 0 || i == gx.count - 1) ? 0.5 : 1.0;
        for (long j = 0; j < gy.count; ++j) {
            const double wy = (j == 0 || j == gy.count - 1) ? 0.5 : 1.0;
            const double pt[2] = {gx.nodes[static_cast<std::size_t>(i)], gy.nodes[static_cast<std::size_t>(j)]};
            const std::span<const double> x(pt, 2);
            const double w = wx * wy;

            const double bump = phi.value(x);
            if (bump != 0.0) lhs_acc.add(w * bump * centered_g(pt[0], pt[1]));

            double grad[2];
            phi.gradient(x, std::span<double>(grad, 2));
            if (grad[0] == 0.0 && grad[1] == 0.0) continue;

            // polar rule for the interaction field: the kernel singularity
            // cancels exactly in polar coordinates
            const double reach = ray_reach(pt[0], pt[1]);
            const long n_r = static_cast<long>(std::ceil(reach / step));
            const double dr = reach / static_cast<double>(n_r);
            double lam0 = 0.0, lam1 = 0.0;
            for (int t = 0; t < n_theta; ++t) {
                const double ux = cos_t[static_cast<std::size_t>(t)];
                const double uy = sin_t[static_cast<std::size_t>(t)];
                double line = 0.5 * centered_g(pt[0], pt[1]);  // r = 0 endpoint
                for (long r = 1; r < n_r; ++r) {
                    const double rr = dr * static_cast<double>(r);
                    line += centered_g(pt[0] + rr * ux, pt[1] + rr * uy);
                }
                line += 0.5 * centered_g(pt[0] + reach * ux, pt[1] + reach * uy);
                lam0 += ux * line;
                lam1 += uy * line;
            }
            lam0 *= inv_area * dr * d_theta;
            lam1 *= inv_area * dr * d_theta;
            rhs_acc.add(w * (lam0 * grad[0] + lam1 * grad[1]));
        }
    }
    const double lhs = lhs_acc.value() * gx.step * gy.step;
    const double rhs = rhs_acc.value() * gx.step * gy.step;
    return std::abs(lhs - rhs);
}

}  // namespace

double parts_residual(const DensityFn& mu_density, const TestFn& f, const SmoothBump& phi,
                      const Box& box, double quad_step) {
    if (!(quad_step > 0.0)) throw ConfigError("parts_residual: quad_step must be positive");
    switch (box.dim()) {
        case 1:
            return parts_residual_1d(mu_density, f, phi, box, quad_step);
        case 2:
            return parts_residual_2d(mu_density, f, phi, box, quad_step);
        default:
            throw ConfigError("parts_residual: implemented for d = 1 and d = 2");
    }
}

double lipschitz_estimate(const std::function<void(std::span<const double>, std::span<double>)>& drift,
                          const Box& box, long sample_count, std::uint64_t seed) {
    const int d = box.dim();
    std::vector<double> x(static_cast<std::size_t>(d)), y(static_cast<std::size_t>(d));
    std::vector<double> fx(static_cast<std::size_t>(d)), fy(static_cast<std::size_t>(d));
    const std::uint64_t key = rng::substream(seed, rng::kTagProbe, 1);

    double worst = 0.0;
    for (long i = 0; i < sample_count; ++i) {
        for (int j = 0; j < d; ++j) {
            const std::uint64_t base = static_cast<std::uint64_t>(i) * 2 * d;
            const double u = rng::uniform01(key, base + static_cast<std::uint64_t>(j));
            const double v = rng::uniform01(key, base + static_cast<std::uint64_t>(d + j));
            x[static_cast<std::size_t>(j)] = box.lo[static_cast<std::size_t>(j)] +
                                             u * (box.hi[static_cast<std::size_t>(j)] - box.lo[static_cast<std::size_t>(j)]);
            y[static_cast<std::size_t>(j)] = box.lo[static_cast<std::size_t>(j)] +
                                             v * (box.hi[static_cast<std::size_t>(j)] - box.lo[static_cast<std::size_t>(j)]);
        }
        drift(x, fx);
        drift(y, fy);
        double num = 0.0, den = 0.0;
        for (int j = 0; j < d; ++j) {
            num += sq(fx[static_cast<std::size_t>(j)] - fy[static_cast<std::size_t>(j)]);
            den += sq(x[static_cast<std::size_t>(j)] - y[static_cast<std::size_t>(j)]);
        }
        if (den > 1e-24) worst = std::max(worst, std::sqrt(num / den));
    }
    return worst;
}

}  // namespace mvf
