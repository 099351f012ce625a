#include "dirl/montecarlo.hpp"

#include "dirl/agent_sim.hpp"
#include "dirl/rng.hpp"
#include "dirl/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

namespace dirl {

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.mdp_path = j.at("mdp_path").get<std::string>();
    c.estimand = estimand_from_json(j.at("estimand"));
    c.n_grid = j.at("n_grid").get<std::vector<long>>();
    c.reps = j.at("reps").get<int>();
    c.base_seed = j.at("base_seed").get<std::uint64_t>();
    if (j.contains("estimator_config"))
        c.estimator_config = estimator_config_from_json(j["estimator_config"]);
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("jobs")) c.jobs = j["jobs"].get<int>();
    if (j.contains("max_failures")) c.max_failures = j["max_failures"].get<int>();
    detail::require(c.reps >= 1, "reps must be >= 1");
    detail::require(!c.n_grid.empty(), "n_grid must be nonempty");
    detail::require(std::is_sorted(c.n_grid.begin(), c.n_grid.end()) &&
                        std::adjacent_find(c.n_grid.begin(), c.n_grid.end()) == c.n_grid.end(),
                    "n_grid must be strictly increasing");
    return c;
}

std::uint64_t replication_seed(std::uint64_t base_seed, long n, int rep) {
    return base_seed ^ mix64(static_cast<std::uint64_t>(n) * 0x100000001B3ULL +
                             static_cast<std::uint64_t>(rep));
}

namespace {

std::string csv_real(Real x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
}

}  // namespace

ExperimentSummary run_montecarlo(const ExperimentConfig& config, const TabularMDP& mdp,
                                 const RewardTable& true_reward) {
    validate_estimand(config.estimand);
    ExperimentSummary summary;
    summary.psi0 = true_psi(config.estimand, mdp, true_reward);
    summary.sigma0_sq = true_eif_and_bound(config.estimand, mdp, true_reward).sigma0_sq;

    // The behavior policy is recomputed once; replications only sample.
    const OracleWorld world = solve_world(mdp, true_reward);
    const std::uint64_t fingerprint = fingerprint_with_reward(mdp, true_reward.values);

    struct Task {
        long n;
        int rep;
    };
    std::vector<Task> tasks;
    for (long n : config.n_grid)
        for (int rep = 0; rep < config.reps; ++rep) tasks.push_back({n, rep});
    summary.records.resize(tasks.size());

    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task task = tasks[i];
            RepRecord rec;
            rec.n = task.n;
            rec.rep = task.rep;
            rec.seed = replication_seed(config.base_seed, task.n, task.rep);
            try {
                const TransitionDataset data = sample_transitions_with_policy(
                    mdp, world.pi0, task.n, rec.seed, fingerprint);
                EstimatorConfig est = config.estimator_config;
                est.seed = rec.seed;
                est.n_states = mdp.n_states;
                est.n_actions = mdp.n_actions;
                const EstimateReport report = estimate(config.estimand, data, est);
                rec.psi_hat = report.psi_hat;
                rec.std_error = report.std_error;
                rec.ci_low = report.ci_low;
                rec.ci_high = report.ci_high;
                rec.plugin_psi = report.plugin_psi;
                rec.covered = report.ci_low <= summary.psi0 && summary.psi0 <= report.ci_high;
            } catch (const std::exception& e) {
                rec.failed = true;
                rec.error = e.what();
            }
            summary.records[i] = std::move(rec);
        }
    };

    const int jobs = std::max(1, config.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::sort(summary.records.begin(), summary.records.end(),
              [](const RepRecord& a, const RepRecord& b) {
                  return a.n != b.n ? a.n < b.n : a.rep < b.rep;
              });

    for (long n : config.n_grid) {
        SizeSummary sz;
        sz.n = n;
        std::vector<Real> psis, widths;
        int covered = 0;
        for (const RepRecord& rec : summary.records) {
            if (rec.n != n) continue;
            if (rec.failed) {
                ++sz.failures;
                continue;
            }
            psis.push_back(rec.psi_hat);
            widths.push_back(rec.ci_high - rec.ci_low);
            covered += rec.covered ? 1 : 0;
        }
        summary.total_failures += sz.failures;
        if (!psis.empty()) {
            sz.coverage = static_cast<Real>(covered) / static_cast<Real>(psis.size());
            sz.mean_bias = mean_of(psis) - summary.psi0;
            const Real variance = population_variance(psis);
            sz.rmse = std::sqrt(sz.mean_bias * sz.mean_bias + variance);
            sz.mean_ci_width = mean_of(widths);
            sz.n_var_ratio = static_cast<Real>(n) * variance / summary.sigma0_sq;
        }
        summary.per_n.push_back(sz);
    }

    if (!config.output_dir.empty()) {
        std::filesystem::create_directories(config.output_dir);
        const std::string csv_path = config.output_dir + "/rep_records.csv";
        std::ofstream csv(csv_path);
        if (!csv) throw ValidationError("cannot write " + csv_path);
        csv << "n,rep,seed,psi_hat,std_error,ci_low,ci_high,covered,plugin_psi\n";
        for (const RepRecord& rec : summary.records) {
            if (rec.failed) continue;
            csv << rec.n << ',' << rec.rep << ',' << rec.seed << ',' << csv_real(rec.psi_hat)
                << ',' << csv_real(rec.std_error) << ',' << csv_real(rec.ci_low) << ','
                << csv_real(rec.ci_high) << ',' << (rec.covered ? 1 : 0) << ','
                << csv_real(rec.plugin_psi) << '\n';
        }
        std::ofstream js(config.output_dir + "/summary.json");
        js << summary_to_json(summary).dump(2) << '\n';
    }
    return summary;
}

nlohmann::json summary_to_json(const ExperimentSummary& summary) {
    nlohmann::json j;
    j["psi0"] = summary.psi0;
    j["sigma0_sq"] = summary.sigma0_sq;
    j["total_failures"] = summary.total_failures;
    nlohmann::json per_n = nlohmann::json::array();
    for (const SizeSummary& sz : summary.per_n) {
        per_n.push_back({{"n", sz.n},
                         {"coverage", sz.coverage},
                         {"mean_bias", sz.mean_bias},
                         {"rmse", sz.rmse},
                         {"mean_ci_width", sz.mean_ci_width},
                         {"n_var_ratio", sz.n_var_ratio},
                         {"failures", sz.failures}});
    }
    j["per_n"] = std::move(per_n);
    nlohmann::json failed = nlohmann::json::array();
    for (const RepRecord& rec : summary.records)
        if (rec.failed)
            failed.push_back({{"n", rec.n}, {"rep", rec.rep}, {"seed", rec.seed},
                              {"error", rec.error}});
    j["failed_reps"] = std::move(failed);
    return j;
}

}  // namespace dirl
