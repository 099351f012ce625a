#pragma once

#include "dirl/nuisance.hpp"
#include "dirl/types.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace dirl {

// ---------------------------------------------------------------------------
// Estimand family
// ---------------------------------------------------------------------------

/// Value of a fixed policy pi under the pseudo-reward at discount gamma.
struct PolicyValueSpec {
    PolicyTable pi;
    Real gamma = 0.9;
};

/// Value of the counterfactual softmax agent on `action_set` at
/// temperature tau_star; the value is discounted at the behavioral gamma.
struct SoftmaxValueSpec {
    std::vector<int> action_set;
    Real tau_star = 1.0;
    Real gamma = 0.9;
};

/// Value of pi at discount gamma_prime under the nu-normalized reward
/// (normalization discount gamma).
struct NormalizedPolicyValueSpec {
    PolicyTable pi;
    PolicyTable nu;
    Real gamma = 0.9;
    Real gamma_prime = 0.9;
};

using EstimandSpec = std::variant<PolicyValueSpec, SoftmaxValueSpec, NormalizedPolicyValueSpec>;

void validate_estimand(const EstimandSpec& estimand);
std::string estimand_name(const EstimandSpec& estimand);

/// JSON forms:
///  {"type":"policy_value","gamma":g,"pi":[[...]]}
///  {"type":"softmax_value","gamma":g,"tau_star":t,"action_set":[..],
///   "n_states":S,"n_actions":A}
///  {"type":"normalized_policy_value","gamma":g,"gamma_prime":g2,
///   "pi":[[...]],"nu":[[...]]}
EstimandSpec estimand_from_json(const nlohmann::json& j);
nlohmann::json estimand_to_json(const EstimandSpec& estimand);

/// Table dimensions the estimand implies ((n_states, n_actions)); the
/// softmax variant carries them explicitly.
std::pair<int, int> estimand_dims(const EstimandSpec& estimand,
                                  std::optional<std::pair<int, int>> softmax_dims = {});

// ---------------------------------------------------------------------------
// Estimator configuration and report
// ---------------------------------------------------------------------------

struct EstimatorConfig {
    int K = 2;
    Real level = 0.95;
    Real smoothing_lambda = 0.5;
    Real smoothing_alpha = 0.5;
    Real fqi_tol = 1e-12;
    long fqi_iters = 10000;
    OccupancyMode occupancy_mode = OccupancyMode::plugin;
    std::optional<Real> ratio_cap;  // off by default
    std::uint64_t seed = 0;
    std::string dump_nuisances_path;  // empty: no dump
    // Dimensions for nuisance fitting when the estimand does not imply
    // them (softmax action sets only constrain n_actions).
    int n_states = 0;
    int n_actions = 0;
};
EstimatorConfig estimator_config_from_json(const nlohmann::json& j);
nlohmann::json estimator_config_to_json(const EstimatorConfig& config);

struct FoldSummary {
    int fold_id = 0;
    Real psi_fold = 0.0;
    int n_fold = 0;
};

struct EstimateReport {
    Real psi_hat = 0.0;
    Real std_error = 0.0;
    Real ci_low = 0.0;
    Real ci_high = 0.0;
    Real level = 0.95;
    long n = 0;
    Real plugin_psi = 0.0;
    std::vector<FoldSummary> per_fold;
    nlohmann::json diagnostics;
    // Per-record streams (kept in memory, not serialized): the report's
    // psi_hat/std_error must reproduce from these.
    std::vector<Real> contributions;
    std::vector<Real> m_values;
    std::vector<Real> correction_values;
};
nlohmann::json report_to_json(const EstimateReport& report);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Uncentered per-record influence contribution: the m-component plus
/// every correction term, evaluated with the supplied nuisances. The
/// Psi(P0) centering is left to the combiner/variance stage.
Real eif_contribution(const EstimandSpec& estimand, const Transition& record,
                      const NuisanceSet& nuis, const EstimatorConfig& config = {});

/// The m-component alone (the plug-in summand).
Real m_component(const EstimandSpec& estimand, const Transition& record,
                 const NuisanceSet& nuis);

/// mean(m_values) + mean(correction_values).
Real one_step_combine(const std::vector<Real>& m_values,
                      const std::vector<Real>& correction_values);

/// Plug-in estimate (1/n) sum_i m(A_i, S_i) with no correction.
Real plugin_estimate(const EstimandSpec& estimand, const TransitionDataset& data,
                     const NuisanceSet& nuis);

/// Normal-quantile confidence interval from centered contributions.
struct Interval {
    Real low = 0.0;
    Real high = 0.0;
    Real std_error = 0.0;
};
Interval confidence_interval(const std::vector<Real>& contributions, Real psi_hat, Real level);

/// Fits every nuisance the estimand needs on `train` (tables listed in
/// nuisance.hpp). `fold_id` is recorded for provenance.
NuisanceSet fit_nuisances(const EstimandSpec& estimand, const TransitionDataset& train,
                          const EstimatorConfig& config, int fold_id);

/// Cross-fitted one-step estimator: K-fold plan, out-of-fold nuisances,
/// grand-mean contribution, EIF-based standard error and CI.
EstimateReport estimate(const EstimandSpec& estimand, const TransitionDataset& data,
                        const EstimatorConfig& config);

/// Riesz-representer transform for nu-normalized functionals. Maps the
/// representers (alpha~, beta~/k) of a functional of the reward itself
/// into the representers of the same functional of the nu-normalized
/// reward. Returns the pi_n-centered alpha (mean-zero at every state);
/// the beta evaluator internally carries the uncentered representer's
/// coupling to the nu-policy temporal difference.
struct RieszPair {
    Matrix alpha_centered;
    std::function<Real(int s, int a, int s_next)> beta_over_k;
};
RieszPair riesz_transform_for_normalization(
    const Matrix& alpha_tilde, std::function<Real(int, int, int)> beta_tilde_over_k,
    const NuisanceSet& nuis, const PolicyTable& nu, Real gamma);

}  // namespace dirl
