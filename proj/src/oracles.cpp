#include "mvfilter/oracles.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace mvf {

namespace {

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace

std::vector<std::pair<double, GaussianState>> kalman_bucy(
    std::span<const double> A, std::span<const double> H, std::span<const double> Q_sqrt, int d, int m,
    std::span<const double> m0, std::span<const double> P0, const BrownianRecord& y, double dt,
    std::span<const double> snapshot_times) {
    using Mat = Eigen::MatrixXd;
    using RowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

    if (y.m != m) throw ConfigError("kalman_bucy: record dimension does not match m");
    const long stride = std::llround(dt / y.dt_fine);
    if (stride < 1 || std::abs(static_cast<double>(stride) * y.dt_fine - dt) > 1e-9) {
        throw ConfigError("kalman_bucy: dt must be a multiple of the record fine step");
    }

    Mat a = RowMap(A.data(), d, d);
    Mat h = RowMap(H.data(), m, d);
    Mat qs = RowMap(Q_sqrt.data(), d, d);
    Mat q = qs * qs.transpose();
    Eigen::VectorXd mean = Eigen::Map<const Eigen::VectorXd>(m0.data(), d);
    Mat p = RowMap(P0.data(), d, d);

    std::vector<std::pair<double, GaussianState>> out;
    auto emit = [&](double t) {
        GaussianState st;
        st.d = d;
        st.mean.assign(mean.data(), mean.data() + d);
        st.cov.resize(static_cast<std::size_t>(d) * d);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) st.cov[static_cast<std::size_t>(r) * d + c] = p(r, c);
        out.emplace_back(t, std::move(st));
    };

    const long steps = y.steps() / stride;
    std::size_t next_snap = 0;
    if (next_snap < snapshot_times.size() && near(snapshot_times[next_snap], 0.0, dt / 2)) {
        emit(0.0);
        ++next_snap;
    }

    Eigen::VectorXd dy(m);
    for (long k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        for (int j = 0; j < m; ++j) {
            dy[j] = y.value((k + 1) * stride, j) - y.value(k * stride, j);
        }
        const Eigen::VectorXd innovation = dy - h * mean * dt;
        mean += a * mean * dt + p * h.transpose() * innovation;
        Mat dp = a * p + p * a.transpose() + q - p * h.transpose() * h * p;
        p += dp * dt;
        p = 0.5 * (p + p.transpose());  // symmetrize

        Eigen::SelfAdjointEigenSolver<Mat> es(p);
        if (es.eigenvalues().minCoeff() < -1e-10) {
            throw NumericError("kalman_bucy: covariance lost positive semidefiniteness at t=" +
                               format_full(t + dt));
        }

        const double t_next = static_cast<double>(k + 1) * dt;
        while (next_snap < snapshot_times.size() && near(snapshot_times[next_snap], t_next, dt / 2)) {
            emit(t_next);
            ++next_snap;
        }
    }
    return out;
}

double GridDensity::mass() const {
    KahanSum s;
    const long n = cells();
    for (long i = 0; i < n; ++i) {
        const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        s.add(w * values[static_cast<std::size_t>(i)]);
    }
    return s.value() * h;
}

double GridDensity::integrate(const TestFn& f) const {
    KahanSum s;
    const long n = cells();
    for (long i = 0; i < n; ++i) {
        const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        const double x = node(i);
        s.add(w * values[static_cast<std::size_t>(i)] * f({&x, 1}));
    }
    return s.value() * h;
}

double GridDensity::mean() const {
    return integrate([](std::span<const double> x) { return x[0]; }) / mass();
}

double GridDensity::variance() const {
    const double m1 = mean();
    return integrate([m1](std::span<const double> x) { return sq(x[0] - m1); }) / mass();
}

std::vector<double> family_integrals(const GridDensity& u, const TestFunctionFamily& fam) {
    std::vector<double> out;
    out.reserve(fam.fns.size());
    for (const auto& tf : fam.fns) out.push_back(u.integrate(tf.f));
    return out;
}

FdResult fd_solve(const ModelSpec& model, const MollifiedPath& path, const FdGrid& grid, double dt,
                  bool normalize, std::span<const double> snapshot_times) {
    if (model.d != 1) throw ConfigError("fd_solve: implemented for one-dimensional models");
    if (!(grid.h > 0.0) || !(grid.x_hi > grid.x_lo)) throw ConfigError("fd_solve: bad grid");

    const long n = static_cast<long>(std::llround((grid.x_hi - grid.x_lo) / grid.h)) + 1;
    const double h = (grid.x_hi - grid.x_lo) / static_cast<double>(n - 1);

    if (dt > h * h / std::max(model.bounds.diffusion_sq, 1e-300) + 1e-15) {
        throw ConfigError("fd_solve: CFL violation, need dt <= h^2 / sup|a|");
    }

    std::vector<double> node(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) node[static_cast<std::size_t>(i)] = grid.x_lo + h * static_cast<double>(i);

    GridDensity u;
    u.x_lo = grid.x_lo;
    u.h = h;
    u.values.resize(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        u.values[static_cast<std::size_t>(i)] = model.initial_law.density({&node[static_cast<std::size_t>(i)], 1});
    }
    if (normalize) {
        const double m0 = u.mass();
        for (double& v : u.values) v /= m0;
    }

    const long steps = std::llround(path.horizon / dt);
    if (std::abs(static_cast<double>(steps) * dt - path.horizon) > 1e-9) {
        throw ConfigError("fd_solve: dt must divide the path horizon");
    }

    FdResult result;
    std::size_t next_snap = 0;
    KahanSum potential_integral;
    auto emit = [&](double t) {
        result.times.push_back(t);
        result.densities.push_back(u);
        result.potential_mean_integral.push_back(potential_integral.value());
    };
    if (next_snap < snapshot_times.size() && near(snapshot_times[next_snap], 0.0, dt / 2)) {
        emit(0.0);
        ++next_snap;
    }

    std::vector<double> a_col(static_cast<std::size_t>(n));
    std::vector<double> b_col(static_cast<std::size_t>(n));
    std::vector<double> pot(static_cast<std::size_t>(n));
    std::vector<double> flux(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> next(static_cast<std::size_t>(n));
    std::vector<double> beta_buf(static_cast<std::size_t>(model.m));

    const double leak_tol = 1e-10;
    long last_interval = -1;

    for (long k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * dt;

        // coefficient columns; the potential changes only when the
        // mollification interval advances (time-homogeneous coefficients)
        const long interval = path.interval_of(t);
        if (interval != last_interval) {
            for (long i = 0; i < n; ++i) {
                const std::span<const double> x{&node[static_cast<std::size_t>(i)], 1};
                double sig = 0.0;
                model.diffusion(t, x, {&sig, 1});
                a_col[static_cast<std::size_t>(i)] = sig * sig;
                model.drift(t, x, {&b_col[static_cast<std::size_t>(i)], 1});
                pot[static_cast<std::size_t>(i)] = alpha_delta_buf(model, path, t, x, beta_buf);
            }
            last_interval = interval;
        }

        // flux form: F_{i+1/2} = (1/2)((a u)_{i+1} - (a u)_i)/h - (1/2)(b_i u_i + b_{i+1} u_{i+1})
        for (long i = 0; i + 1 < n; ++i) {
            const double au_i = a_col[static_cast<std::size_t>(i)] * u.values[static_cast<std::size_t>(i)];
            const double au_n = a_col[static_cast<std::size_t>(i + 1)] * u.values[static_cast<std::size_t>(i + 1)];
            const double bu =
                0.5 * (b_col[static_cast<std::size_t>(i)] * u.values[static_cast<std::size_t>(i)] +
                       b_col[static_cast<std::size_t>(i + 1)] * u.values[static_cast<std::size_t>(i + 1)]);
            flux[static_cast<std::size_t>(i) + 1] = 0.5 * (au_n - au_i) / h - bu;
        }
        flux[0] = 0.0;
        flux[static_cast<std::size_t>(n)] = 0.0;  // zero-flux boundaries

        double pot_mean_num = 0.0, mass_num = 0.0;
        for (long i = 0; i < n; ++i) {
            const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
            pot_mean_num += w * pot[static_cast<std::size_t>(i)] * u.values[static_cast<std::size_t>(i)];
            mass_num += w * u.values[static_cast<std::size_t>(i)];
        }
        potential_integral.add(pot_mean_num / mass_num * dt);

        for (long i = 0; i < n; ++i) {
            const double div = (flux[static_cast<std::size_t>(i) + 1] - flux[static_cast<std::size_t>(i)]) / h;
            next[static_cast<std::size_t>(i)] =
                u.values[static_cast<std::size_t>(i)] +
                dt * (div + pot[static_cast<std::size_t>(i)] * u.values[static_cast<std::size_t>(i)]);
        }
        u.values.swap(next);

        if (normalize) {
            const double mass = u.mass();
            if (!(mass > 0.0) || !std::isfinite(mass)) {
                throw NumericError("fd_solve: density mass became degenerate at t=" + format_full(t + dt));
            }
            for (double& v : u.values) v /= mass;
        }

        const double edge = std::max(std::abs(u.values.front()), std::abs(u.values.back()));
        if (edge > leak_tol) {
            throw NumericError("fd_solve: boundary density " + format_full(edge) + " at t=" +
                               format_full(t + dt) + "; widen the grid");
        }

        const double t_next = static_cast<double>(k + 1) * dt;
        while (next_snap < snapshot_times.size() && near(snapshot_times[next_snap], t_next, dt / 2)) {
            emit(t_next);
            ++next_snap;
        }
    }
    return result;
}

double mass_identity_residual(const FdResult& unnormalized, const FdResult& normalized) {
    if (unnormalized.times.size() != normalized.times.size()) {
        throw ConfigError("mass_identity_residual: snapshot times differ");
    }
    double worst = 0.0;
    for (std::size_t k = 0; k < unnormalized.times.size(); ++k) {
        if (std::abs(unnormalized.times[k] - normalized.times[k]) > 1e-9) {
            throw ConfigError("mass_identity_residual: snapshot times differ");
        }
        const double mass = unnormalized.densities[k].mass();
        const double predicted = std::exp(normalized.potential_mean_integral[k]);
        worst = std::max(worst, std::abs(mass - predicted));
    }
    return worst;
}

}  // namespace mvf
