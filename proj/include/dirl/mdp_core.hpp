#pragma once

#include "dirl/types.hpp"

#include <optional>
#include <vector>

namespace dirl {

/// Linear and soft Bellman solver knobs. Systems with
/// n_states * n_actions <= dense_threshold are solved by a dense direct
/// factorization; larger ones by fixed-point iteration to `tol`.
struct SolveOptions {
    Real tol = 1e-12;
    long max_iters = 200000;
    long dense_threshold = 4096;
    bool record_residuals = false;
};

/// Achieved accuracy report attached to every solve.
struct SolveInfo {
    Real residual = 0.0;
    long iterations = 0;
    bool dense = false;
    std::vector<Real> residual_history;  // filled when record_residuals
};

// ---------------------------------------------------------------------------
// Expression-friendly building blocks. Tables are (n_actions x n_states),
// kernels are vectors of row-stochastic (n_states x n_states) matrices.
// ---------------------------------------------------------------------------

/// V(s) = sum_a pi(a|s) q(a, s).
template <typename D1, typename D2>
Vector policy_average(const Eigen::MatrixBase<D1>& pi, const Eigen::MatrixBase<D2>& q) {
    return (pi.array() * q.array()).colwise().sum().transpose();
}

/// (P_k h)(a, s) = sum_{s'} k(s'|a, s) h(s') for a state function h.
template <typename D>
Matrix expected_next(const Kernel& kernel, const Eigen::MatrixBase<D>& h) {
    const auto n_actions = static_cast<Eigen::Index>(kernel.size());
    Matrix out(n_actions, kernel.empty() ? 0 : kernel[0].rows());
    for (Eigen::Index a = 0; a < n_actions; ++a)
        out.row(a) = (kernel[a] * h.derived()).transpose();
    return out;
}

/// State-to-state chain under pi: K_pi(s, s') = sum_a pi(a|s) k(s'|a, s).
Matrix policy_chain(const Kernel& kernel, const Matrix& pi);

/// log(sum_i exp(x_i)) with max-subtraction over the given indices.
Real logsumexp(const Vector& x, const std::vector<int>& idx);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Solves T_{k,pi,gamma}(q) = r for the Q-function of `pi` under reward
/// `r` and kernel `kernel`, where T(q) = q - gamma P_k(pi q).
QTable solve_policy_q(const Kernel& kernel, const RewardTable& reward, const PolicyTable& pi,
                      Real gamma, const SolveOptions& opts = {}, SolveInfo* info = nullptr);
QTable solve_policy_q(const TabularMDP& mdp, const RewardTable& reward, const PolicyTable& pi,
                      Real gamma, const SolveOptions& opts = {}, SolveInfo* info = nullptr);

/// Evaluates the Bellman operator: returns q - gamma P_k(pi q).
RewardTable apply_bellman(const TabularMDP& mdp, const PolicyTable& pi, Real gamma,
                          const QTable& q);
RewardTable apply_bellman(const Kernel& kernel, const PolicyTable& pi, Real gamma,
                          const QTable& q);

/// sum_s rho0(s) sum_a pi(a|s) q(a, s).
Real policy_value_of(const Vector& rho0, const PolicyTable& pi, const QTable& q);

/// Soft Bellman solution restricted to `action_set` at temperature tau:
///   v(a, s)   = sum_{s'} k(s'|a, s) V(s'),
///   V(s)      = tau * logsumexp_{a in A*} (r(a, s) + gamma v(a, s)) / tau,
/// with the softmax policy over A* (zero outside).
struct SoftBellmanSolution {
    QTable v;             // continuation value
    Vector V_soft;        // soft value function
    PolicyTable pi_softmax;
};
SoftBellmanSolution solve_soft_bellman(const Kernel& kernel, const RewardTable& reward, Real tau,
                                       const std::vector<int>& action_set, Real gamma,
                                       const SolveOptions& opts = {}, SolveInfo* info = nullptr);
SoftBellmanSolution solve_soft_bellman(const TabularMDP& mdp, const RewardTable& reward, Real tau,
                                       const std::vector<int>& action_set, Real gamma,
                                       const SolveOptions& opts = {}, SolveInfo* info = nullptr);

/// Softmax policy over `action_set` from total utilities z(a, s),
/// computed with max-subtraction; zero outside the set.
PolicyTable softmax_policy(const Matrix& z, Real tau, const std::vector<int>& action_set);

/// All actions 0..n_actions-1.
std::vector<int> full_action_set(int n_actions);

/// Entrywise log of the policy; errors if any probability is <= 0.
RewardTable log_policy_reward(const PolicyTable& pi);

/// Potential-based shaping r(a, s) + c(s) - gamma * sum_{s'} c(s') k(s'|a, s).
RewardTable shape_reward(const TabularMDP& mdp, const RewardTable& reward, const Vector& potential,
                         Real gamma);

/// nu-normalized reward (identification under the constraint nu r = 0):
///   q_nu = T^{-1}_{k,nu,gamma}(r0),  r_nu = (I - nu) q_nu,
///   v_nu = (r0 - q_nu) / gamma  (identically 0 when gamma == 0).
struct NormalizedReward {
    RewardTable r_nu;
    QTable v_nu;
    QTable q_nu;  // the nu-policy Q-function the construction passes through
};
NormalizedReward normalized_reward(const TabularMDP& mdp, const RewardTable& r0,
                                   const PolicyTable& nu, Real gamma,
                                   const SolveOptions& opts = {});

/// Reward selected by an affine constraint nu r = f:
///   f(s) + [(I - nu) T^{-1}_{k,nu,gamma}(r0 - f)](a, s).
RewardTable anchored_reward_affine(const TabularMDP& mdp, const RewardTable& r0,
                                   const PolicyTable& nu, const Vector& f, Real gamma,
                                   const SolveOptions& opts = {});

/// Reward selected by pinning the value of `pi` to g:
///   r0(a, s) + [(I - gamma P_k)(g - V^{pi,gamma}_{r0,k})](a, s).
RewardTable anchored_reward_value(const TabularMDP& mdp, const RewardTable& r0,
                                  const PolicyTable& pi, const Vector& g, Real gamma,
                                  const SolveOptions& opts = {});

/// Discounted occupancy of `pi` relative to the data distribution:
/// solves m = rho0 + gamma K_pi^T m, returns rho = m / rho0 and
/// d(a, s) = rho(s) pi(a|s) / pi_b(a|s). rho_cond and rho_tilde stay
/// empty; conditional_occupancy and advantage_weighted_occupancy fill
/// them for the softmax pipeline.
OccupancyTables occupancy_ratios(const Kernel& kernel, const Vector& rho0, const PolicyTable& pi,
                                 const PolicyTable& pi_b, Real gamma,
                                 const SolveOptions& opts = {}, SolveInfo* info = nullptr);
OccupancyTables occupancy_ratios(const TabularMDP& mdp, const PolicyTable& pi,
                                 const PolicyTable& pi_b, Real gamma,
                                 const SolveOptions& opts = {}, SolveInfo* info = nullptr);

/// Conditional discounted state-occupancy ratio: slice (a, s) holds
/// rho(s'|a, s) = m(s'|a, s) / rho0(s') with
/// m(.|a, s) = delta_s + gamma sum_{s''} k(s''|a, s) m_pi(.|s'').
Kernel conditional_occupancy(const Kernel& kernel, const Vector& rho0, const PolicyTable& pi,
                             Real gamma, const SolveOptions& opts = {});
Kernel conditional_occupancy(const TabularMDP& mdp, const PolicyTable& pi, Real gamma,
                             const SolveOptions& opts = {});

/// Advantage-weighted state occupancy ratio:
/// rho~(s) = sum_{a,s~} rho0(s~) pi0(a|s~) d*(a,s~) {q*(a,s~) - V*(s~)} rho_cond(s|a,s~).
Vector advantage_weighted_occupancy(const Vector& rho0, const PolicyTable& pi0,
                                    const Matrix& d_star, const QTable& q_star,
                                    const Vector& V_star, const Kernel& rho_cond);

/// Random MDP satisfying the positivity assumption: kernel rows and rho0
/// are floor-mixed Dirichlet(1) draws, rewards uniform on
/// [-reward_scale, reward_scale]. Deterministic in `seed`.
struct RandomMdp {
    TabularMDP mdp;
    RewardTable reward;
};
RandomMdp random_mdp(int n_states, int n_actions, Real gamma, std::uint64_t seed,
                     Real floor = 0.05, Real reward_scale = 1.0);

}  // namespace dirl
