#include "dirl/mdp_core.hpp"

#include "dirl/rng.hpp"

#include <algorithm>
#include <cmath>

namespace dirl {

namespace {

int kernel_states(const Kernel& kernel) {
    return kernel.empty() ? 0 : static_cast<int>(kernel[0].rows());
}

void check_gamma(Real gamma) {
    detail::require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
}

void check_dims(const Kernel& kernel, const Matrix& table, const std::string& what) {
    const int S = kernel_states(kernel);
    const int A = static_cast<int>(kernel.size());
    detail::require_table_dims(table, A, S, what);
}

void check_action_set(const std::vector<int>& action_set, int n_actions) {
    detail::require(!action_set.empty(), "action set must be nonempty");
    for (int a : action_set)
        detail::require(a >= 0 && a < n_actions, "action set index out of range");
}

Real bellman_residual(const Kernel& kernel, const Matrix& r, const Matrix& pi, Real gamma,
                      const Matrix& q) {
    const Vector V = policy_average(pi, q);
    return (q - gamma * expected_next(kernel, V) - r).cwiseAbs().maxCoeff();
}

}  // namespace

Matrix policy_chain(const Kernel& kernel, const Matrix& pi) {
    const int S = kernel_states(kernel);
    Matrix K = Matrix::Zero(S, S);
    for (std::size_t a = 0; a < kernel.size(); ++a)
        K.noalias() += pi.row(static_cast<Eigen::Index>(a)).transpose().asDiagonal() * kernel[a];
    return K;
}

Real logsumexp(const Vector& x, const std::vector<int>& idx) {
    Real m = x(idx.front());
    for (int i : idx) m = std::max(m, x(i));
    Real acc = 0.0;
    for (int i : idx) acc += std::exp(x(i) - m);
    return m + std::log(acc);
}

QTable solve_policy_q(const Kernel& kernel, const RewardTable& reward, const PolicyTable& pi,
                      Real gamma, const SolveOptions& opts, SolveInfo* info) {
    check_gamma(gamma);
    check_dims(kernel, reward.values, "reward");
    check_dims(kernel, pi.probs, "policy");
    const int S = kernel_states(kernel);
    const int A = static_cast<int>(kernel.size());

    QTable q;
    SolveInfo local;
    if (static_cast<long>(S) * A <= opts.dense_threshold) {
        // Reduce to the state-level system (I - gamma K_pi) V = pi r,
        // then lift q = r + gamma P_k V.
        const Matrix K = policy_chain(kernel, pi.probs);
        const Vector b = policy_average(pi.probs, reward.values);
        const Matrix lhs = Matrix::Identity(S, S) - gamma * K;
        const Vector V = lhs.partialPivLu().solve(b);
        q.values = reward.values + gamma * expected_next(kernel, V);
        local.dense = true;
    } else {
        q.values = Matrix::Zero(A, S);
        Real change = 0.0;
        long it = 0;
        for (; it < opts.max_iters; ++it) {
            const Vector V = policy_average(pi.probs, q.values);
            Matrix next = reward.values + gamma * expected_next(kernel, V);
            change = (next - q.values).cwiseAbs().maxCoeff();
            q.values.swap(next);
            if (opts.record_residuals) local.residual_history.push_back(change);
            if (change <= opts.tol) break;
        }
        local.iterations = it + 1;
        if (change > opts.tol)
            throw SolverError("policy Q iteration did not converge; last change " +
                                  std::to_string(change),
                              change, it);
    }
    local.residual = bellman_residual(kernel, reward.values, pi.probs, gamma, q.values);
    if (local.dense && local.residual > std::max(opts.tol, 1e-10))
        throw SolverError("dense policy Q solve left residual " + std::to_string(local.residual),
                          local.residual, 0);
    if (info) *info = std::move(local);
    return q;
}

QTable solve_policy_q(const TabularMDP& mdp, const RewardTable& reward, const PolicyTable& pi,
                      Real gamma, const SolveOptions& opts, SolveInfo* info) {
    return solve_policy_q(mdp.kernel, reward, pi, gamma, opts, info);
}

RewardTable apply_bellman(const Kernel& kernel, const PolicyTable& pi, Real gamma,
                          const QTable& q) {
    check_dims(kernel, q.values, "q");
    check_dims(kernel, pi.probs, "policy");
    const Vector V = policy_average(pi.probs, q.values);
    return RewardTable{q.values - gamma * expected_next(kernel, V)};
}

RewardTable apply_bellman(const TabularMDP& mdp, const PolicyTable& pi, Real gamma,
                          const QTable& q) {
    return apply_bellman(mdp.kernel, pi, gamma, q);
}

Real policy_value_of(const Vector& rho0, const PolicyTable& pi, const QTable& q) {
    detail::require(pi.probs.rows() == q.values.rows() && pi.probs.cols() == q.values.cols(),
                    "policy and q dimensions disagree");
    detail::require(rho0.size() == q.values.cols(), "rho0 and q dimensions disagree");
    return rho0.dot(policy_average(pi.probs, q.values));
}

PolicyTable softmax_policy(const Matrix& z, Real tau, const std::vector<int>& action_set) {
    const int A = static_cast<int>(z.rows());
    const int S = static_cast<int>(z.cols());
    check_action_set(action_set, A);
    detail::require(tau > 0.0, "tau must be positive");
    PolicyTable pi;
    pi.probs = Matrix::Zero(A, S);
    for (int s = 0; s < S; ++s) {
        Real m = z(action_set.front(), s);
        for (int a : action_set) m = std::max(m, z(a, s));
        Real denom = 0.0;
        for (int a : action_set) denom += std::exp((z(a, s) - m) / tau);
        for (int a : action_set) pi.probs(a, s) = std::exp((z(a, s) - m) / tau) / denom;
    }
    return pi;
}

std::vector<int> full_action_set(int n_actions) {
    std::vector<int> all(static_cast<std::size_t>(n_actions));
    for (int a = 0; a < n_actions; ++a) all[static_cast<std::size_t>(a)] = a;
    return all;
}

SoftBellmanSolution solve_soft_bellman(const Kernel& kernel, const RewardTable& reward, Real tau,
                                       const std::vector<int>& action_set, Real gamma,
                                       const SolveOptions& opts, SolveInfo* info) {
    check_gamma(gamma);
    check_dims(kernel, reward.values, "reward");
    detail::require(tau > 0.0, "tau must be positive");
    const int S = kernel_states(kernel);
    const int A = static_cast<int>(kernel.size());
    check_action_set(action_set, A);

    const auto soft_value = [&](const Matrix& v) {
        Vector V(S);
        for (int s = 0; s < S; ++s) {
            const Vector z = (reward.values.col(s) + gamma * v.col(s)) / tau;
            V(s) = tau * logsumexp(z, action_set);
        }
        return V;
    };

    Matrix v = Matrix::Zero(A, S);
    SolveInfo local;
    Real change = 0.0;
    long it = 0;
    for (; it < opts.max_iters; ++it) {
        const Vector V = soft_value(v);
        Matrix next = expected_next(kernel, V);
        change = (next - v).cwiseAbs().maxCoeff();
        v.swap(next);
        if (opts.record_residuals) local.residual_history.push_back(change);
        if (change <= opts.tol) break;
    }
    local.iterations = it + 1;
    if (change > opts.tol)
        throw SolverError("soft Bellman iteration did not converge; last residual " +
                              std::to_string(change),
                          change, it);

    SoftBellmanSolution sol;
    sol.v.values = v;
    sol.V_soft = soft_value(v);
    sol.pi_softmax = softmax_policy(reward.values + gamma * v, tau, action_set);
    local.residual = (expected_next(kernel, sol.V_soft) - v).cwiseAbs().maxCoeff();
    if (info) *info = std::move(local);
    return sol;
}

SoftBellmanSolution solve_soft_bellman(const TabularMDP& mdp, const RewardTable& reward, Real tau,
                                       const std::vector<int>& action_set, Real gamma,
                                       const SolveOptions& opts, SolveInfo* info) {
    return solve_soft_bellman(mdp.kernel, reward, tau, action_set, gamma, opts, info);
}

RewardTable log_policy_reward(const PolicyTable& pi) {
    if (pi.probs.size() == 0 || pi.probs.minCoeff() <= 0.0)
        throw ValidationError("log_policy_reward requires strictly positive probabilities");
    return RewardTable{pi.probs.array().log().matrix()};
}

RewardTable shape_reward(const TabularMDP& mdp, const RewardTable& reward, const Vector& potential,
                         Real gamma) {
    check_dims(mdp.kernel, reward.values, "reward");
    detail::require(potential.size() == mdp.n_states, "potential must have one entry per state");
    Matrix shaped = reward.values - gamma * expected_next(mdp.kernel, potential);
    shaped.rowwise() += potential.transpose();
    return RewardTable{shaped};
}

NormalizedReward normalized_reward(const TabularMDP& mdp, const RewardTable& r0,
                                   const PolicyTable& nu, Real gamma, const SolveOptions& opts) {
    check_gamma(gamma);
    NormalizedReward out;
    out.q_nu = solve_policy_q(mdp.kernel, r0, nu, gamma, opts);
    const Vector V_nu = policy_average(nu.probs, out.q_nu.values);
    out.r_nu.values = out.q_nu.values.rowwise() - V_nu.transpose();
    if (gamma > 0.0) {
        out.v_nu.values = (r0.values - out.q_nu.values) / gamma;
    } else {
        // Continuation value is vacuous at gamma = 0.
        out.v_nu.values = Matrix::Zero(r0.values.rows(), r0.values.cols());
    }
    return out;
}

RewardTable anchored_reward_affine(const TabularMDP& mdp, const RewardTable& r0,
                                   const PolicyTable& nu, const Vector& f, Real gamma,
                                   const SolveOptions& opts) {
    detail::require(f.size() == mdp.n_states, "f must have one entry per state");
    RewardTable centered{r0.values.rowwise() - f.transpose()};
    const QTable q = solve_policy_q(mdp.kernel, centered, nu, gamma, opts);
    const Vector V = policy_average(nu.probs, q.values);
    Matrix out = q.values.rowwise() - V.transpose();
    out.rowwise() += f.transpose();
    return RewardTable{out};
}

RewardTable anchored_reward_value(const TabularMDP& mdp, const RewardTable& r0,
                                  const PolicyTable& pi, const Vector& g, Real gamma,
                                  const SolveOptions& opts) {
    detail::require(g.size() == mdp.n_states, "g must have one entry per state");
    const QTable q = solve_policy_q(mdp.kernel, r0, pi, gamma, opts);
    const Vector potential = g - policy_average(pi.probs, q.values);
    return shape_reward(mdp, r0, potential, gamma);
}

OccupancyTables occupancy_ratios(const Kernel& kernel, const Vector& rho0, const PolicyTable& pi,
                                 const PolicyTable& pi_b, Real gamma, const SolveOptions& opts,
                                 SolveInfo* info) {
    check_gamma(gamma);
    check_dims(kernel, pi.probs, "policy");
    check_dims(kernel, pi_b.probs, "behavior policy");
    const int S = kernel_states(kernel);
    detail::require(rho0.size() == S, "rho0 dimension mismatch");
    detail::require(pi_b.probs.minCoeff() > 0.0, "behavior policy must be strictly positive");

    const Matrix K = policy_chain(kernel, pi.probs);
    Vector m;
    SolveInfo local;
    if (static_cast<long>(S) <= opts.dense_threshold) {
        const Matrix lhs = Matrix::Identity(S, S) - gamma * K.transpose();
        m = lhs.partialPivLu().solve(rho0);
        local.dense = true;
    } else {
        m = rho0;
        Real change = 0.0;
        long it = 0;
        for (; it < opts.max_iters; ++it) {
            Vector next = rho0 + gamma * (K.transpose() * m);
            change = (next - m).cwiseAbs().maxCoeff();
            m.swap(next);
            if (change <= opts.tol) break;
        }
        local.iterations = it + 1;
        if (change > opts.tol)
            throw SolverError("occupancy iteration did not converge", change, it);
    }
    local.residual = (m - rho0 - gamma * (K.transpose() * m)).cwiseAbs().maxCoeff();
    if (local.residual > std::max(opts.tol, 1e-10) * std::max(Real(1), m.cwiseAbs().maxCoeff()))
        throw SolverError("occupancy solve left residual " + std::to_string(local.residual),
                          local.residual, local.iterations);
    if (info) *info = std::move(local);

    OccupancyTables out;
    out.rho = m.cwiseQuotient(rho0);
    out.d = pi.probs.cwiseQuotient(pi_b.probs);
    out.d.array().rowwise() *= out.rho.transpose().array();
    return out;
}

OccupancyTables occupancy_ratios(const TabularMDP& mdp, const PolicyTable& pi,
                                 const PolicyTable& pi_b, Real gamma, const SolveOptions& opts,
                                 SolveInfo* info) {
    return occupancy_ratios(mdp.kernel, mdp.rho0, pi, pi_b, gamma, opts, info);
}

Kernel conditional_occupancy(const Kernel& kernel, const Vector& rho0, const PolicyTable& pi,
                             Real gamma, const SolveOptions& opts) {
    check_gamma(gamma);
    check_dims(kernel, pi.probs, "policy");
    const int S = kernel_states(kernel);
    const int A = static_cast<int>(kernel.size());
    detail::require(rho0.size() == S, "rho0 dimension mismatch");
    (void)opts;

    // Columns of M solve m_pi(.|s'') = delta_{s''} + gamma K_pi^T m_pi(.|s''):
    // M = (I - gamma K_pi^T)^{-1}.
    const Matrix K = policy_chain(kernel, pi.probs);
    const Matrix M =
        (Matrix::Identity(S, S) - gamma * K.transpose()).partialPivLu().solve(Matrix::Identity(S, S));

    Kernel rho_cond(static_cast<std::size_t>(A));
    for (int a = 0; a < A; ++a) {
        Matrix slice(S, S);  // row s, column s'
        for (int s = 0; s < S; ++s) {
            Vector m = gamma * (M * kernel[a].row(s).transpose());
            m(s) += 1.0;
            slice.row(s) = m.cwiseQuotient(rho0).transpose();
        }
        rho_cond[static_cast<std::size_t>(a)] = slice;
    }
    return rho_cond;
}

Kernel conditional_occupancy(const TabularMDP& mdp, const PolicyTable& pi, Real gamma,
                             const SolveOptions& opts) {
    return conditional_occupancy(mdp.kernel, mdp.rho0, pi, gamma, opts);
}

Vector advantage_weighted_occupancy(const Vector& rho0, const PolicyTable& pi0,
                                    const Matrix& d_star, const QTable& q_star,
                                    const Vector& V_star, const Kernel& rho_cond) {
    const int S = static_cast<int>(rho0.size());
    const int A = static_cast<int>(pi0.probs.rows());
    Vector out = Vector::Zero(S);
    for (int st = 0; st < S; ++st)
        for (int a = 0; a < A; ++a) {
            const Real w = rho0(st) * pi0.probs(a, st) * d_star(a, st) *
                           (q_star.values(a, st) - V_star(st));
            out += w * rho_cond[static_cast<std::size_t>(a)].row(st).transpose();
        }
    return out;
}

RandomMdp random_mdp(int n_states, int n_actions, Real gamma, std::uint64_t seed, Real floor,
                     Real reward_scale) {
    detail::require(n_states > 0 && n_actions > 0, "dimensions must be positive");
    detail::require(floor * n_states < 1.0, "positivity floor too large for this state count");
    SplitMix64 rng(mix64(seed ^ 0x6D2B79F5A7C15ULL));

    const auto simplex = [&](int k) {
        Vector g(k);
        for (int i = 0; i < k; ++i) g(i) = -std::log(rng.next_unit_open());
        g /= g.sum();
        return Vector((1.0 - floor * k) * g.array() + floor);
    };

    RandomMdp out;
    out.mdp.n_states = n_states;
    out.mdp.n_actions = n_actions;
    out.mdp.gamma = gamma;
    out.mdp.kernel.assign(static_cast<std::size_t>(n_actions), Matrix(n_states, n_states));
    for (int a = 0; a < n_actions; ++a)
        for (int s = 0; s < n_states; ++s)
            out.mdp.kernel[static_cast<std::size_t>(a)].row(s) = simplex(n_states).transpose();
    out.mdp.rho0 = simplex(n_states);
    out.reward.values = Matrix(n_actions, n_states);
    for (int a = 0; a < n_actions; ++a)
        for (int s = 0; s < n_states; ++s)
            out.reward.values(a, s) = reward_scale * (2.0 * rng.next_unit_open() - 1.0);
    out.mdp.validate();
    return out;
}

}  // namespace dirl
