#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace dirl {

using Real = double;
/// Action-by-state table: entry (a, s) is the value of the pair (a, s).
using Matrix = Eigen::MatrixXd;
/// State vector: entry s is the value at state s.
using Vector = Eigen::VectorXd;
/// Transition kernel: kernel[a](s, s') = k(s' | a, s). Rows are distributions.
using Kernel = std::vector<Matrix>;

/// Input or contract violations (bad dimensions, broken invariants).
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A solver failed to reach its tolerance; carries the last residual.
struct SolverError : std::runtime_error {
    SolverError(const std::string& msg, Real residual_, long iterations_)
        : std::runtime_error(msg), residual(residual_), iterations(iterations_) {}
    Real residual;
    long iterations;
};

/// Default floor for probabilities in validated MDPs and policies.
inline constexpr Real kPositivityFloor = 1e-9;
/// Tolerance for "sums to one" checks on distributions.
inline constexpr Real kSimplexTol = 1e-12;

/// Finite MDP with dense dynamics. kernel[a](s, s') = k(s' | a, s),
/// rho0 is the initial state distribution, gamma the discount in [0, 1).
struct TabularMDP {
    int n_states = 0;
    int n_actions = 0;
    Kernel kernel;
    Vector rho0;
    Real gamma = 0.0;

    /// Throws ValidationError unless every kernel row and rho0 are
    /// distributions (within kSimplexTol) with entries >= eps_pos,
    /// and gamma is in [0, 1).
    void validate(Real eps_pos = kPositivityFloor) const;

    /// 64-bit FNV-1a hash over the dimensions, gamma, rho0 and kernel
    /// entries (raw little-endian doubles, in [a][s][s'] order).
    std::uint64_t fingerprint() const;
};

/// Per-step reward r(a, s), entropy scale tau = 1.
struct RewardTable {
    Matrix values;
};

/// Conditional action distribution pi(a | s) stored column-per-state.
struct PolicyTable {
    Matrix probs;

    /// Columns must sum to one within kSimplexTol. Entries may be zero
    /// (restricted-support policies are legal values).
    void validate_distribution() const;
    /// Additionally require every entry >= eta (assumption A1-style
    /// positivity, needed wherever the policy appears in a denominator
    /// or a logarithm).
    void validate_positive(Real eta = kPositivityFloor) const;
};

/// State-action value table q(a, s).
struct QTable {
    Matrix values;
};

/// Discounted occupancy quantities relative to the data distribution.
///   rho(s)            state occupancy ratio,
///   d(a, s)           = rho(s) * pi(a|s) / pi_b(a|s),
///   rho_cond[a](s, s') conditional ratio started from (a, s),
///   rho_tilde(s)      advantage-weighted ratio (may be negative).
/// rho_cond and rho_tilde are filled only by the softmax pipeline.
struct OccupancyTables {
    Vector rho;
    Matrix d;
    Kernel rho_cond;
    Vector rho_tilde;
};

/// Fingerprint of an MDP together with a generating reward table.
std::uint64_t fingerprint_with_reward(const TabularMDP& mdp, const Matrix& reward);

/// pi(a|s) = 1/n_actions for all (a, s).
PolicyTable uniform_policy(int n_states, int n_actions);

/// Point mass on `action` in every state.
PolicyTable point_mass_policy(int n_states, int n_actions, int action);

namespace detail {
void require(bool cond, const std::string& msg);
void require_table_dims(const Matrix& m, int n_actions, int n_states, const std::string& what);
}  // namespace detail

}  // namespace dirl
