#pragma once

#include "dirl/estimators.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace dirl {

/// Exact behavioral world derived from (mdp, true reward): the
/// soft-optimal policy, its log (the pseudo-reward), and the soft values.
struct OracleWorld {
    PolicyTable pi0;
    RewardTable r0;
    QTable v0;
    Vector V0;
};
OracleWorld solve_world(const TabularMDP& mdp, const RewardTable& true_reward,
                        const SolveOptions& opts = {1e-14, 200000, 4096, false});

/// Population value of the estimand, computed by exact dense solves.
Real true_psi(const EstimandSpec& estimand, const TabularMDP& mdp,
              const RewardTable& true_reward);

/// The estimand evaluated under arbitrary joint factors (rho, pi, k);
/// the pseudo-reward is log pi. Used by the tilting probes.
Real psi_under(const EstimandSpec& estimand, const Vector& rho, const Matrix& pi,
               const Kernel& kernel);

/// Exact influence function and efficiency bound. The chi tensor is
/// stored as chi[a](s, s'); component tables:
///   tables:       "m0" (a,s broadcast of the value), "alpha_centered"
///   state_tables: estimand-specific occupancies and values
///   beta_over_k:  [a](s, s')
struct OracleTruth {
    Real psi0 = 0.0;
    Real sigma0_sq = 0.0;
    Kernel chi;
    Kernel beta_over_k;
    std::map<std::string, Matrix> tables;
    std::map<std::string, Vector> state_tables;
};
OracleTruth true_eif_and_bound(const EstimandSpec& estimand, const TabularMDP& mdp,
                               const RewardTable& true_reward);

/// NuisanceSet loaded with the exact population tables; feeding it to
/// eif_contribution must reproduce chi + psi0.
NuisanceSet exact_nuisances(const EstimandSpec& estimand, const TabularMDP& mdp,
                            const RewardTable& true_reward);

/// Finite-difference check of pathwise differentiability: tilts
/// P_t ~ P0 exp(t phi), recomputes the full functional, and compares the
/// central difference against E0[chi phi].
struct PathwiseProbeResult {
    Real derivative = 0.0;
    Real inner_product = 0.0;
    Real rel_error = 0.0;
};
PathwiseProbeResult pathwise_probe(const EstimandSpec& estimand, const TabularMDP& mdp,
                                   const RewardTable& true_reward, const Kernel& phi,
                                   Real tilt, const OracleTruth& truth);

/// Random bounded score direction with exact P0-mean zero.
Kernel random_score_direction(const TabularMDP& mdp, const PolicyTable& pi0,
                              std::uint64_t seed);

/// Exact verification of the identification results; violations are
/// data, not errors.
struct IdentificationReport {
    Real q_shift_violation = 0.0;
    Real value_diff_violation = 0.0;
    std::optional<Real> recovery_violation;
    std::string recovery_note;
    Real adjoint_marginal_violation = 0.0;   // E_P[Pi T^-1 f] = E_P[d f]
    Real adjoint_pointwise_violation = 0.0;  // E_P[T^-1 f] with behavior-start occupancy
    Real reward_average_violation = 0.0;     // corrected representation identity
    nlohmann::json to_json() const;
};
IdentificationReport check_identification(const TabularMDP& mdp, const RewardTable& true_reward,
                                          const PolicyTable& nu,
                                          const std::vector<PolicyTable>& policies, Real gamma,
                                          std::uint64_t seed = 20240801);

/// Direction for the von Mises remainder probe. Entries act as
/// eps * table added to the matching exact nuisance; derived tables
/// (value functions, the normalized reward, the nu-chain ratio, the
/// counterfactual softmax policy) are recomputed from the perturbed
/// primitives exactly as the estimator derives them.
struct NuisancePerturbation {
    std::optional<Matrix> r_dir;
    std::optional<Vector> rho_dir;
    std::optional<Matrix> q_dir;         // q^{pi,gamma} | q_nu^{pi,gamma'} | q*
    std::optional<Matrix> q_nu_dir;      // q^{nu,gamma} (normalized estimand)
    std::optional<Matrix> v_star_dir;    // v* (softmax estimand)
    std::optional<Vector> rho_tilde_dir; // rho~* (softmax estimand)
};

/// Exact-P0 mean of the one-step contribution under nuisances
/// (truth + eps * direction), minus psi0.
Real von_mises_remainder(const EstimandSpec& estimand, const TabularMDP& mdp,
                         const RewardTable& true_reward, const NuisancePerturbation& direction,
                         Real eps);

}  // namespace dirl
