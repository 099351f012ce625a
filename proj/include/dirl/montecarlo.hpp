#pragma once

#include "dirl/estimators.hpp"
#include "dirl/oracle.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace dirl {

/// Monte Carlo experiment over a grid of sample sizes. Replication
/// (n, r) draws its dataset with seed = base_seed XOR mix64(n * C + r),
/// so runs are reproducible and independent of worker scheduling.
struct ExperimentConfig {
    std::string mdp_path;
    EstimandSpec estimand;
    std::vector<long> n_grid;
    int reps = 1;
    std::uint64_t base_seed = 0;
    EstimatorConfig estimator_config;
    std::string output_dir;
    int jobs = 1;
    int max_failures = 0;  // exit-code-4 threshold for the CLI
};
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

struct RepRecord {
    long n = 0;
    int rep = 0;
    std::uint64_t seed = 0;
    Real psi_hat = 0.0;
    Real std_error = 0.0;
    Real ci_low = 0.0;
    Real ci_high = 0.0;
    bool covered = false;
    Real plugin_psi = 0.0;
    bool failed = false;
    std::string error;
};

struct SizeSummary {
    long n = 0;
    Real coverage = 0.0;
    Real mean_bias = 0.0;
    Real rmse = 0.0;
    Real mean_ci_width = 0.0;
    Real n_var_ratio = 0.0;  // n * Var(psi_hat) / sigma0^2
    int failures = 0;
};

struct ExperimentSummary {
    Real psi0 = 0.0;
    Real sigma0_sq = 0.0;
    std::vector<SizeSummary> per_n;
    std::vector<RepRecord> records;  // sorted by (n, rep)
    int total_failures = 0;
};
nlohmann::json summary_to_json(const ExperimentSummary& summary);

std::uint64_t replication_seed(std::uint64_t base_seed, long n, int rep);

/// Runs the experiment against the given world. When output_dir is
/// nonempty, writes `rep_records.csv` with schema
/// n,rep,seed,psi_hat,std_error,ci_low,ci_high,covered,plugin_psi and
/// `summary.json` alongside it.
ExperimentSummary run_montecarlo(const ExperimentConfig& config, const TabularMDP& mdp,
                                 const RewardTable& true_reward);

}  // namespace dirl
