#pragma once

#include "dirl/agent_sim.hpp"
#include "dirl/mdp_core.hpp"
#include "dirl/types.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dirl {

/// Per-cell sufficient statistics of a transition dataset: counts over
/// (a, s) cells and the empirical next-state distribution per cell.
/// Tabular regressions reduce to weighted sums over these.
struct CellStats {
    int n_states = 0;
    int n_actions = 0;
    Matrix sa_counts;                 // (a, s)
    Vector state_counts;              // (s)
    Kernel next_counts;               // next_counts[a](s, s')
    long n = 0;

    bool visited(int a, int s) const { return sa_counts(a, s) > 0; }
};
CellStats tabulate(const TransitionDataset& data, int n_states, int n_actions);

/// Laplace-smoothed behavior policy:
/// pi_n(a|s) = (count(s,a) + lambda) / (count(s) + lambda |A|),
/// uniform on unvisited states. Second return is log pi_n.
/// With lambda = 0 a visited state missing some action violates
/// positivity and raises ValidationError.
std::pair<PolicyTable, RewardTable> fit_behavior_policy(const CellStats& stats,
                                                        Real smoothing_lambda);
std::pair<PolicyTable, RewardTable> fit_behavior_policy(const TransitionDataset& data,
                                                        int n_states, int n_actions,
                                                        Real smoothing_lambda);

/// Smoothed kernel estimate k_n(s'|a,s) = (count(s,a,s') + alpha) /
/// (count(s,a) + alpha |S|); uniform rows where (s,a) is unobserved.
/// With alpha = 0 zero rows/entries can remain; `positivity_violated`
/// (when supplied) reports that.
Kernel fit_kernel(const CellStats& stats, Real smoothing_alpha,
                  bool* positivity_violated = nullptr);
Kernel fit_kernel(const TransitionDataset& data, int n_states, int n_actions,
                  Real smoothing_alpha, bool* positivity_violated = nullptr);

/// Smoothed empirical state marginal (count(s) + lambda)/(n + lambda |S|).
Vector fit_initial_state(const CellStats& stats, Real smoothing_lambda);

struct FqiOptions {
    long iters = 10000;
    Real tol = 1e-12;
};

/// Tabular fitted Q-iteration: repeat
///   q(a, s) <- mean over records in cell (a, s) of
///              { r(a, s) + gamma * sum_a' pi_target(a'|S') q(a', S') }
/// until the successive sup-norm change is <= tol. Cells with no records
/// are pinned to the exact solve under `k_fallback`.
QTable fitted_q_iteration(const CellStats& stats, const RewardTable& r_n,
                          const PolicyTable& pi_target, Real gamma, const FqiOptions& opts,
                          const Kernel& k_fallback, Real* achieved_change = nullptr);

/// Soft analogue: v(a, s) <- per-cell mean of
///   tau_star * logsumexp_{a' in action_set} (r(a', S') + gamma v(a', S')) / tau_star,
/// converging to the soft Bellman continuation value under the empirical
/// kernel. Unvisited cells are pinned to the exact soft solve under
/// `k_fallback`.
QTable soft_q_iteration(const CellStats& stats, const RewardTable& r_n, Real tau_star,
                        const std::vector<int>& action_set, Real gamma, const FqiOptions& opts,
                        const Kernel& k_fallback, Real* achieved_change = nullptr);

enum class OccupancyMode { plugin, quadratic_loss };

struct OccupancyFit {
    Vector rho;
    Matrix d;
    bool quadratic_fell_back = false;
};

/// Occupancy-ratio estimate for evaluation policy `pi` against the
/// estimated behavior policy `pi_n`.
///  - plugin: occupancy_ratios under (k_n, rho0_hat).
///  - quadratic_loss: minimize the empirical Riesz loss
///      (1/n) sum_i { (B_n alpha)(S_i)^2 - 2 alpha(S_i) },
///    B_n = I - gamma K_{pi,k_n}, by normal equations; rho = B_n alpha.
///    Singular normal equations fall back to plugin with a flag.
OccupancyFit fit_occupancy_ratio(const CellStats& stats, const Kernel& k_n,
                                 const PolicyTable& pi_n, const Vector& rho0_hat,
                                 const PolicyTable& pi, Real gamma, OccupancyMode mode);

/// Cross-fitting plan: a seeded shuffled partition into K folds whose
/// sizes differ by at most one.
struct FoldPlan {
    std::vector<int> assignments;
    int K = 0;
    std::uint64_t seed = 0;

    std::vector<int> fold_indices(int fold) const;
    std::vector<int> complement_indices(int fold) const;
};
FoldPlan cross_fit(const TransitionDataset& data, int K, std::uint64_t seed);

/// A fitted Q-table together with what it was fit against.
struct FittedQ {
    QTable table;
    std::string policy_tag;
    std::string reward_tag;
    Real gamma = 0.0;
    Real achieved_change = 0.0;
};

/// Every nuisance an estimand's influence-function evaluation needs,
/// fitted on one fold's complement. Table keys used by the estimators:
///   q_tables:     "q_pi_gamma", "q_nu_gamma", "q_pi_prime_nu",
///                 "q_star", "v_star"
///   aux_tables:   "r_nu"
///   state_tables: "V_pi_gamma", "V_nu_gamma", "V_pi_prime_nu",
///                 "V_star", "g_tilde"
///   occupancy:    "pi_gamma", "pi_gamma_prime", "star"
///   policies:     "pi_star"
struct NuisanceSet {
    PolicyTable pi_n;
    RewardTable r_n;
    Kernel k_n;
    Vector rho0_hat;
    std::map<std::string, FittedQ> q_tables;
    std::map<std::string, Matrix> aux_tables;
    std::map<std::string, Vector> state_tables;
    std::map<std::string, OccupancyFit> occupancy;
    std::map<std::string, PolicyTable> policies;
    int fold_id = -1;

    const FittedQ& q(const std::string& name) const;
    const Matrix& aux(const std::string& name) const;
    const Vector& state(const std::string& name) const;
    const OccupancyFit& occ(const std::string& name) const;
    const PolicyTable& policy(const std::string& name) const;
};

}  // namespace dirl
