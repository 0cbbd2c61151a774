#include "mvfilter/model.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>

#include "json.hpp"

#include "mvfilter/rng.hpp"

namespace mvf {

namespace {

using json = nlohmann::json;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Halton radical inverse in the given base.
double radical_inverse(std::uint64_t i, int base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * static_cast<double>(i % static_cast<std::uint64_t>(base));
        i /= static_cast<std::uint64_t>(base);
    }
    return r;
}

constexpr int kHaltonBases[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};

double eigmin_sym(const RowMat& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    return es.eigenvalues().minCoeff();
}

std::vector<double> as_vector(const json& v, int d, const char* what) {
    std::vector<double> out;
    if (v.is_number()) {
        out.assign(static_cast<std::size_t>(d), v.get<double>());
    } else if (v.is_array()) {
        out = v.get<std::vector<double>>();
    } else {
        throw ConfigError(std::string("model config: ") + what + " must be a number or array");
    }
    if (static_cast<int>(out.size()) != d) {
        throw ConfigError(std::string("model config: ") + what + " has wrong dimension");
    }
    return out;
}

std::vector<double> as_matrix(const json& v, int rows, int cols, const char* what) {
    std::vector<double> out;
    if (v.is_number()) {
        if (rows != cols) throw ConfigError(std::string("model config: ") + what + " needs a full matrix");
        out.assign(static_cast<std::size_t>(rows) * cols, 0.0);
        for (int i = 0; i < rows; ++i) out[static_cast<std::size_t>(i) * cols + i] = v.get<double>();
    } else if (v.is_array() && !v.empty() && v[0].is_array()) {
        for (const auto& row : v) {
            auto r = row.get<std::vector<double>>();
            if (static_cast<int>(r.size()) != cols) {
                throw ConfigError(std::string("model config: ") + what + " has ragged rows");
            }
            out.insert(out.end(), r.begin(), r.end());
        }
    } else if (v.is_array()) {
        out = v.get<std::vector<double>>();
    } else {
        throw ConfigError(std::string("model config: ") + what + " must be a scalar or matrix");
    }
    if (static_cast<int>(out.size()) != rows * cols) {
        throw ConfigError(std::string("model config: ") + what + " has wrong shape");
    }
    return out;
}

InitialLaw gaussian_law(int d, std::vector<double> mean, std::vector<double> cov) {
    Eigen::Map<const RowMat> c(cov.data(), d, d);
    Eigen::LLT<Eigen::MatrixXd> llt{Eigen::MatrixXd(c)};
    if (llt.info() != Eigen::Success) {
        throw ConfigError("model config: initial covariance is not positive definite");
    }
    auto chol = std::make_shared<Eigen::MatrixXd>(llt.matrixL());
    auto inv = std::make_shared<Eigen::MatrixXd>(Eigen::Map<const RowMat>(cov.data(), d, d).inverse());
    const double det = Eigen::Map<const RowMat>(cov.data(), d, d).determinant();
    const double norm = 1.0 / (std::pow(6.283185307179586, 0.5 * d) * std::sqrt(det));
    auto mu = std::make_shared<std::vector<double>>(std::move(mean));

    InitialLaw law;
    law.dim = d;
    law.sample = [d, chol, mu](std::uint64_t seed, std::uint64_t index, std::span<double> out) {
        const std::uint64_t key = rng::substream(seed, rng::kTagInit, index);
        Eigen::VectorXd z(d);
        for (int j = 0; j < d; ++j) z[j] = rng::normal(key, static_cast<std::uint64_t>(j));
        Eigen::VectorXd x = (*chol) * z;
        for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] = (*mu)[static_cast<std::size_t>(j)] + x[j];
    };
    law.density = [d, inv, mu, norm](std::span<const double> x) {
        Eigen::VectorXd q(d);
        for (int j = 0; j < d; ++j) q[j] = x[static_cast<std::size_t>(j)] - (*mu)[static_cast<std::size_t>(j)];
        return norm * std::exp(-0.5 * q.dot((*inv) * q));
    };
    return law;
}

}  // namespace

double alpha_delta_buf(const ModelSpec& model, const MollifiedPath& path, double s,
                       std::span<const double> x, std::span<double> beta_buf) {
    const long interval = path.interval_of(s);  // throws past the horizon
    double value = model.alpha(s, x);
    model.sensor(s, x, beta_buf);
    for (int j = 0; j < model.m; ++j) {
        const double b = beta_buf[static_cast<std::size_t>(j)];
        value += b * (path.slopes[static_cast<std::size_t>(interval) * model.m + j] - 0.5 * b);
    }
    return value;
}

double alpha_delta(const ModelSpec& model, const MollifiedPath& path, double s,
                   std::span<const double> x) {
    std::vector<double> buf(static_cast<std::size_t>(model.m));
    return alpha_delta_buf(model, path, s, x, buf);
}

ValidationReport validate_model(const ModelSpec& model, long probe_count, std::uint64_t seed) {
    if (probe_count < 1) throw ConfigError("validate_model: probe_count must be >= 1");
    if (model.probe_box.dim() != model.d) throw ConfigError("validate_model: probe box dimension mismatch");
    if (model.d < 1 || model.m < 1) throw ConfigError("validate_model: dimensions must be positive");

    ValidationReport report;
    if (!(model.bounds.ellipticity > 0.0)) {
        report.violations.push_back({"ellipticity_positive", 0.0, {}, model.bounds.ellipticity});
    }
    if (model.sensor_bound_waiver) {
        // the sensor is only softly bounded (linear family); record the waiver
        report.warnings.push_back({"beta_bound_waived", 0.0, {}, model.bounds.beta});
    }

    const int dims = model.d + 1;
    std::vector<double> shift(static_cast<std::size_t>(dims));
    for (int j = 0; j < dims; ++j) {
        shift[static_cast<std::size_t>(j)] = rng::uniform01(rng::substream(seed, rng::kTagProbe, 0), static_cast<std::uint64_t>(j));
    }

    std::vector<double> x(static_cast<std::size_t>(model.d));
    std::vector<double> b(static_cast<std::size_t>(model.d));
    std::vector<double> sig(static_cast<std::size_t>(model.d) * model.d);
    std::vector<double> beta(static_cast<std::size_t>(model.m));
    const double tol = 1e-9;

    auto record = [&](std::vector<ValidationEntry>& sink, const char* condition, double s, double value) {
        if (sink.size() < 64) sink.push_back({condition, s, x, value});
    };

    for (long i = 0; i < probe_count; ++i) {
        double frac = radical_inverse(static_cast<std::uint64_t>(i) + 1, kHaltonBases[0]) + shift[0];
        frac -= std::floor(frac);
        const double s = frac * model.probe_horizon;
        for (int j = 0; j < model.d; ++j) {
            double u = radical_inverse(static_cast<std::uint64_t>(i) + 1, kHaltonBases[(j + 1) % 10]) +
                       shift[static_cast<std::size_t>(j + 1)];
            u -= std::floor(u);
            x[static_cast<std::size_t>(j)] =
                model.probe_box.lo[static_cast<std::size_t>(j)] +
                u * (model.probe_box.hi[static_cast<std::size_t>(j)] - model.probe_box.lo[static_cast<std::size_t>(j)]);
        }

        const double a_val = model.alpha(s, x);
        model.drift(s, x, b);
        model.diffusion(s, x, sig);
        model.sensor(s, x, beta);

        bool finite = std::isfinite(a_val);
        for (double v : b) finite = finite && std::isfinite(v);
        for (double v : sig) finite = finite && std::isfinite(v);
        for (double v : beta) finite = finite && std::isfinite(v);
        if (!finite) {
            record(report.violations, "finite_coefficients", s, std::numeric_limits<double>::quiet_NaN());
            ++report.checked_points;
            continue;
        }

        if (std::abs(a_val) > model.bounds.alpha + tol * (1.0 + model.bounds.alpha)) {
            record(report.violations, "alpha_bound", s, a_val);
        }
        for (double v : b) {
            if (std::abs(v) > model.bounds.drift + tol * (1.0 + model.bounds.drift)) {
                record(report.violations, "drift_bound", s, v);
                break;
            }
        }
        for (double v : beta) {
            if (std::abs(v) > model.bounds.beta + tol * (1.0 + model.bounds.beta)) {
                record(model.sensor_bound_waiver ? report.warnings : report.violations, "beta_bound", s, v);
                break;
            }
        }

        Eigen::Map<const RowMat> sm(sig.data(), model.d, model.d);
        RowMat a = sm * sm.transpose();
        double amax = 0.0;
        for (int r = 0; r < model.d; ++r) {
            for (int c = 0; c < model.d; ++c) amax = std::max(amax, std::abs(a(r, c)));
        }
        if (amax > model.bounds.diffusion_sq + tol * (1.0 + model.bounds.diffusion_sq)) {
            record(report.violations, "diffusion_bound", s, amax);
        }
        const double lam = eigmin_sym(a);
        if (lam < model.bounds.ellipticity - tol * (1.0 + std::abs(model.bounds.ellipticity))) {
            record(report.violations, "ellipticity", s, lam);
        }

        const double dens = model.initial_law.density(x);
        if (!(dens > 0.0) || !std::isfinite(dens)) {
            record(report.violations, "initial_density_positive", s, dens);
        }

        ++report.checked_points;
    }

    report.passed = report.violations.empty();
    return report;
}

ModelSpec model_from_json(const std::string& json_text) {
    json cfg;
    try {
        cfg = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }

    try {
        ModelSpec model;
        model.d = cfg.value("d", 1);
        model.m = cfg.value("m", 1);
        if (model.d < 1 || model.m < 1) throw ConfigError("model config: d and m must be >= 1");
        const int d = model.d;
        const int m = model.m;

        // probe box first; family bounds depend on it
        double halfwidth = 5.0;
        if (cfg.contains("probe_box")) halfwidth = cfg["probe_box"].value("halfwidth", 5.0);
        model.probe_box = Box::cube(d, halfwidth);
        model.probe_horizon = cfg.value("probe_horizon", 1.0);

        // drift
        const json jd = cfg.value("drift", json{{"family", "zero"}});
        const std::string drift_family = jd.value("family", "zero");
        bool drift_linear = false;
        double theta = jd.value("theta", 1.0);
        if (drift_family == "ou") {
            drift_linear = true;
            model.drift = [theta, d](double, std::span<const double> x, std::span<double> out) {
                for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] = -theta * x[static_cast<std::size_t>(j)];
            };
            model.bounds.drift = std::abs(theta) * halfwidth;
        } else if (drift_family == "double_well") {
            model.drift = [theta, d](double, std::span<const double> x, std::span<double> out) {
                for (int j = 0; j < d; ++j) {
                    const double v = x[static_cast<std::size_t>(j)];
                    out[static_cast<std::size_t>(j)] = theta * (v - v * v * v);
                }
            };
            const double edge = std::abs(theta) * std::abs(halfwidth - halfwidth * halfwidth * halfwidth);
            const double crit = std::abs(theta) * 2.0 / (3.0 * std::sqrt(3.0));
            model.bounds.drift = std::max(edge, crit);
        } else if (drift_family == "zero") {
            model.drift = [d](double, std::span<const double>, std::span<double> out) {
                for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] = 0.0;
            };
            model.bounds.drift = 0.0;
        } else {
            throw ConfigError("model config: unknown drift family " + drift_family);
        }

        // diffusion (constant matrix)
        const json js = cfg.value("diffusion", json{{"family", "constant"}, {"sigma", 1.0}});
        if (js.value("family", "constant") != "constant") {
            throw ConfigError("model config: only constant diffusion families are built in");
        }
        auto sigma = std::make_shared<std::vector<double>>(as_matrix(js.value("sigma", json(1.0)), d, d, "sigma"));
        model.diffusion = [sigma, d](double, std::span<const double>, std::span<double> out) {
            for (int j = 0; j < d * d; ++j) out[static_cast<std::size_t>(j)] = (*sigma)[static_cast<std::size_t>(j)];
        };
        {
            Eigen::Map<const RowMat> sm(sigma->data(), d, d);
            RowMat a = sm * sm.transpose();
            double amax = 0.0;
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c) amax = std::max(amax, std::abs(a(r, c)));
            model.bounds.diffusion_sq = amax;
            model.bounds.ellipticity = eigmin_sym(a);
        }

        // potential
        const json ja = cfg.value("alpha", json{{"family", "zero"}});
        const std::string alpha_family = ja.value("family", "zero");
        if (alpha_family == "zero") {
            model.alpha = [](double, std::span<const double>) { return 0.0; };
            model.bounds.alpha = 0.0;
        } else if (alpha_family == "constant") {
            const double value = ja.value("value", 0.0);
            model.alpha = [value](double, std::span<const double>) { return value; };
            model.bounds.alpha = std::abs(value);
        } else if (alpha_family == "gaussian_bump") {
            const double height = ja.value("height", 1.0);
            const double width = ja.value("width", 1.0);
            if (!(width > 0.0)) throw ConfigError("model config: gaussian_bump width must be positive");
            model.alpha = [height, width](double, std::span<const double> x) {
                double q = 0.0;
                for (double v : x) q += v * v;
                return height * std::exp(-0.5 * q / (width * width));
            };
            model.bounds.alpha = std::abs(height);
        } else {
            throw ConfigError("model config: unknown alpha family " + alpha_family);
        }

        // sensors
        const json jb = cfg.value("sensor", json{{"family", "zero"}});
        const std::string sensor_family = jb.value("family", "zero");
        if (sensor_family == "zero") {
            model.sensor = [m](double, std::span<const double>, std::span<double> out) {
                for (int j = 0; j < m; ++j) out[static_cast<std::size_t>(j)] = 0.0;
            };
            model.bounds.beta = 0.0;
        } else if (sensor_family == "bounded_sensor_tanh") {
            const double gain = jb.value("gain", 1.0);
            const double scale = jb.value("scale", 1.0);
            model.sensor = [gain, scale, d, m](double, std::span<const double> x, std::span<double> out) {
                for (int j = 0; j < m; ++j) {
                    out[static_cast<std::size_t>(j)] = gain * std::tanh(scale * x[static_cast<std::size_t>(j % d)]);
                }
            };
            model.bounds.beta = std::abs(gain);
        } else if (sensor_family == "linear_sensor") {
            auto h = std::make_shared<std::vector<double>>(as_matrix(jb.value("h", json(1.0)), m, d, "sensor h"));
            model.sensor = [h, d, m](double, std::span<const double> x, std::span<double> out) {
                for (int j = 0; j < m; ++j) {
                    double acc = 0.0;
                    for (int k = 0; k < d; ++k) acc += (*h)[static_cast<std::size_t>(j) * d + k] * x[static_cast<std::size_t>(k)];
                    out[static_cast<std::size_t>(j)] = acc;
                }
            };
            double hmax = 0.0;
            for (int j = 0; j < m; ++j) {
                double row = 0.0;
                for (int k = 0; k < d; ++k) row += std::abs((*h)[static_cast<std::size_t>(j) * d + k]);
                hmax = std::max(hmax, row);
            }
            model.bounds.beta = hmax * halfwidth;  // soft bound over the probe box
            model.sensor_bound_waiver = jb.value("waiver", true);
            if (drift_linear) {
                ModelSpec::LinearCoeffs lin;
                lin.A.assign(static_cast<std::size_t>(d) * d, 0.0);
                for (int j = 0; j < d; ++j) lin.A[static_cast<std::size_t>(j) * d + j] = -theta;
                lin.H = *h;
                lin.Q_sqrt = *sigma;
                model.linear = std::move(lin);
            }
        } else {
            throw ConfigError("model config: unknown sensor family " + sensor_family);
        }

        // explicit bound overrides
        if (cfg.contains("bounds")) {
            const json& jo = cfg["bounds"];
            model.bounds.alpha = jo.value("alpha", model.bounds.alpha);
            model.bounds.beta = jo.value("beta", model.bounds.beta);
            model.bounds.drift = jo.value("drift", model.bounds.drift);
            model.bounds.diffusion_sq = jo.value("diffusion_sq", model.bounds.diffusion_sq);
            model.bounds.ellipticity = jo.value("ellipticity", model.bounds.ellipticity);
        }

        // initial law
        const json ji = cfg.value("initial_law", json{{"family", "gaussian"}});
        if (ji.value("family", "gaussian") != "gaussian") {
            throw ConfigError("model config: only gaussian initial laws are built in");
        }
        model.initial_law = gaussian_law(d, as_vector(ji.value("mean", json(0.0)), d, "mean"),
                                         as_matrix(ji.value("cov", json(1.0)), d, d, "cov"));

        // domain
        const json jdom = cfg.value("domain", json{{"type", "full"}});
        const std::string dom = jdom.value("type", "full");
        if (dom == "full") {
            model.domain.type = Domain::Type::Full;
        } else if (dom == "ball") {
            model.domain.type = Domain::Type::Ball;
            model.domain.radius = jdom.value("radius", 1.0);
            if (!(model.domain.radius > 0.0)) throw ConfigError("model config: ball radius must be positive");
        } else {
            throw ConfigError("model config: unknown domain type " + dom);
        }

        return model;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
}

}  // namespace mvf
