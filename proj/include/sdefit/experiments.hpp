// Batch experiment drivers behind the CLI subcommands: moment computation,
// stream generation, estimation runs over replications, CLT studies, and
// chain diagnostics.  Replications fan out over a worker pool, each owning
// its RNG substream and moment provider; results merge by replication index,
// so runs are deterministic under a fixed seed regardless of thread count.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdefit/chain.hpp"
#include "sdefit/config.hpp"
#include "sdefit/estimator.hpp"
#include "sdefit/moments.hpp"
#include "sdefit/simulator.hpp"

namespace sdefit {

/// Runs fn(0..n_tasks-1) across a pool of `threads` workers.
void parallel_for(std::int64_t n_tasks, int threads,
                  const std::function<void(std::int64_t)>& fn);

struct MomentsResult {
    MomentTable table;
    std::vector<MonotonicityReport> scans;  // one per grid point, per free coordinate
    std::string table_json;
    std::string report_json;
};

MomentsResult run_moments(const ExperimentConfig& config);

struct SimulateResult {
    std::vector<ObservationRecord> records;
    std::string summary_json;
    bool asserts_passed = true;
};

SimulateResult run_simulate(const ExperimentConfig& config);

struct ReplicationRow {
    std::int64_t rep = 0;
    Theta final_theta;
    double error_norm = 0.0;
    Theta checkpoint_theta;
    double checkpoint_error = 0.0;
    std::int64_t updates = 0;
    std::int64_t skipped = 0;
    double wall_ms = 0.0;
    bool skip_budget_exceeded = false;
    std::vector<TrajectoryPoint> trajectory;
};

struct EstimateResult {
    std::vector<ReplicationRow> rows;
    double median_error = 0.0;
    double median_checkpoint_error = 0.0;
    double median_gbar_norm = 0.0;  // projected variant only
    bool skip_budget_exceeded = false;
    bool outside_proven_hypotheses = false;
    std::string summary_json;
    bool asserts_passed = true;
};

/// Runs the configured estimator over replications.  When `replay` is given,
/// every replication consumes that stream instead of simulating.
EstimateResult run_estimate(const ExperimentConfig& config,
                            const std::vector<ObservationRecord>* replay = nullptr,
                            int threads = 1);

struct CltResult {
    std::vector<double> sqrt_n_errors;  // sqrt(n) (Theta_n - theta*) per replication
    double predicted_sigma2 = 0.0;
    double empirical_variance = 0.0;
    double variance_ratio = 0.0;
    double empirical_mean = 0.0;
    double mean_band = 0.0;  // 3 sigma / sqrt(M)
    double q05 = 0.0, q95 = 0.0;  // standardized sample quantiles
    std::string summary_json;
    bool asserts_passed = true;
};

CltResult run_clt(const ExperimentConfig& config, int threads = 1);

struct DiagnoseResult {
    std::string report_json;
    bool asserts_passed = true;
};

DiagnoseResult run_diagnose(const ExperimentConfig& config,
                            const std::vector<ObservationRecord>& stream);

/// Sample quantile (linear interpolation between order statistics).
double sample_quantile(std::vector<double> values, double q);

}  // namespace sdefit
