#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mvfilter/baselines.hpp"
#include "mvfilter/common.hpp"
#include "mvfilter/measures.hpp"
#include "mvfilter/mkv.hpp"
#include "mvfilter/model.hpp"
#include "mvfilter/oracles.hpp"

namespace mvf {

/// One experiment description: a model, a method, sweep parameters and output
/// locations. Loaded from JSON; see configs/ for complete examples.
struct ExperimentConfig {
    std::string model_json;  // the model subobject, kept verbatim
    ModelSpec model;

    std::string method = "mkv";  // mkv | weighted | fkac | fd | kalman
    std::vector<long> n_values = {1000};
    long replicates = 1;
    std::uint64_t seed = 1;
    std::uint64_t path_seed = 42;

    double dt = 1e-3;
    double dt_fine = 0.0;  // 0: same as dt
    double horizon = 1.0;

    // delta policy
    double delta_fixed = 0.0;  // > 0: fixed
    double delta0 = 0.25;
    long delta_min_substeps = 8;
    DeltaOptions delta_opts;

    KdeRule kde;
    LambdaConfig lambda;
    std::vector<double> snapshot_times;

    FdGrid fd_grid;
    double fd_dt = 1e-4;
    bool fd_normalize = true;

    double family_halfwidth = 6.0;
    int family_count = 15;

    long n_mc = 20000;
    long probes = 2000;

    std::string out_dir = "out";
    int threads = 1;
};

ExperimentConfig load_experiment_file(const std::string& path);
ExperimentConfig load_experiment_json(const std::string& json_text);

/// Exit-code contract shared by the CLI: 0 success, 1 numeric failure,
/// 2 configuration error.
int cmd_validate(const ExperimentConfig& cfg);
int cmd_simulate(const ExperimentConfig& cfg);
int cmd_convergence(const ExperimentConfig& cfg);
int cmd_lambda_check(const ExperimentConfig& cfg);

/// Snapshot writers (deterministic full-precision formatting; repeated seeded
/// runs produce byte-identical files).
void write_mkv_csv(const MkvRun& run, std::ostream& out, int dim);
void write_weighted_csv(const WeightedRun& run, std::ostream& out);
void write_grid_csv(const FdResult& result, std::ostream& out);

struct LambdaSuiteOptions {
    long measure_count = 100;
    long atom_count = 50;
    long query_count = 100;
    std::uint64_t seed = 2024;
    double tolerance = 1e-12;
    bool include_parts = true;
    /// Test hook: deliberately corrupt one of the four equivalent forms to
    /// prove the suite catches it. 0 = off, 1..4 = form index.
    int sabotage_form = 0;
};

/// Randomized identity checks for the interaction operator: the four
/// equivalent one-dimensional forms agree at non-atom queries, constant
/// shifts drop out, linearity holds, the at-atoms fast path matches the
/// pointwise form, the field vanishes far outside the support, and the
/// integration-by-parts residual is small. Returns human-readable failures.
std::vector<std::string> lambda_identity_suite(const LambdaSuiteOptions& opt);

}  // namespace mvf
