#include "dirl/nuisance.hpp"

#include "dirl/rng.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <numeric>

namespace dirl {

CellStats tabulate(const TransitionDataset& data, int n_states, int n_actions) {
    CellStats st;
    st.n_states = n_states;
    st.n_actions = n_actions;
    st.n = data.n;
    st.sa_counts = Matrix::Zero(n_actions, n_states);
    st.state_counts = Vector::Zero(n_states);
    st.next_counts.assign(static_cast<std::size_t>(n_actions),
                          Matrix::Zero(n_states, n_states));
    for (const Transition& t : data.records) {
        detail::require(t.s >= 0 && t.s < n_states && t.a >= 0 && t.a < n_actions &&
                            t.s_next >= 0 && t.s_next < n_states,
                        "record index out of range");
        st.sa_counts(t.a, t.s) += 1.0;
        st.state_counts(t.s) += 1.0;
        st.next_counts[static_cast<std::size_t>(t.a)](t.s, t.s_next) += 1.0;
    }
    return st;
}

std::pair<PolicyTable, RewardTable> fit_behavior_policy(const CellStats& st,
                                                        Real smoothing_lambda) {
    detail::require(smoothing_lambda >= 0.0, "smoothing_lambda must be nonnegative");
    const int S = st.n_states;
    const int A = st.n_actions;
    PolicyTable pi;
    pi.probs.resize(A, S);
    for (int s = 0; s < S; ++s) {
        const Real ns = st.state_counts(s);
        if (ns == 0.0) {
            pi.probs.col(s).setConstant(1.0 / A);
            continue;
        }
        if (smoothing_lambda == 0.0 && st.sa_counts.col(s).minCoeff() == 0.0)
            throw ValidationError("state " + std::to_string(s) +
                                  " has an unobserved action and lambda = 0 violates positivity");
        pi.probs.col(s) = (st.sa_counts.col(s).array() + smoothing_lambda) /
                          (ns + smoothing_lambda * A);
    }
    RewardTable r_n = log_policy_reward(pi);
    return {std::move(pi), std::move(r_n)};
}

std::pair<PolicyTable, RewardTable> fit_behavior_policy(const TransitionDataset& data,
                                                        int n_states, int n_actions,
                                                        Real smoothing_lambda) {
    return fit_behavior_policy(tabulate(data, n_states, n_actions), smoothing_lambda);
}

Kernel fit_kernel(const CellStats& st, Real smoothing_alpha, bool* positivity_violated) {
    detail::require(smoothing_alpha >= 0.0, "smoothing_alpha must be nonnegative");
    const int S = st.n_states;
    const int A = st.n_actions;
    bool violated = false;
    Kernel k_n(static_cast<std::size_t>(A), Matrix(S, S));
    for (int a = 0; a < A; ++a)
        for (int s = 0; s < S; ++s) {
            const Real nc = st.sa_counts(a, s);
            if (nc == 0.0) {
                if (smoothing_alpha == 0.0) violated = true;
                k_n[static_cast<std::size_t>(a)].row(s).setConstant(1.0 / S);
                continue;
            }
            k_n[static_cast<std::size_t>(a)].row(s) =
                (st.next_counts[static_cast<std::size_t>(a)].row(s).array() + smoothing_alpha) /
                (nc + smoothing_alpha * S);
            if (k_n[static_cast<std::size_t>(a)].row(s).minCoeff() <= 0.0) violated = true;
        }
    if (positivity_violated) *positivity_violated = violated;
    return k_n;
}

Kernel fit_kernel(const TransitionDataset& data, int n_states, int n_actions,
                  Real smoothing_alpha, bool* positivity_violated) {
    return fit_kernel(tabulate(data, n_states, n_actions), smoothing_alpha,
                      positivity_violated);
}

Vector fit_initial_state(const CellStats& st, Real smoothing_lambda) {
    return (st.state_counts.array() + smoothing_lambda) /
           (static_cast<Real>(st.n) + smoothing_lambda * st.n_states);
}

namespace {

// Iterates q <- base + scale * (per-cell mean of W(S')) on visited
// cells, pinning unvisited cells to `pinned`. Fitted Q-iteration uses
// base = r, scale = gamma; the soft variant uses base = 0, scale = 1
// with the discount inside the logsumexp target.
QTable pinned_cell_iteration(const CellStats& st, const Matrix& pinned, Real scale,
                             const FqiOptions& opts, Real* achieved_change,
                             const std::function<Vector(const Matrix&)>& next_value,
                             const Matrix& base) {
    const int S = st.n_states;
    const int A = st.n_actions;
    Matrix q = pinned;
    Real change = 0.0;
    long it = 0;
    for (; it < opts.iters; ++it) {
        const Vector W = next_value(q);
        Matrix next = pinned;
        for (int a = 0; a < A; ++a)
            for (int s = 0; s < S; ++s) {
                const Real nc = st.sa_counts(a, s);
                if (nc == 0.0) continue;
                const Real mean_w =
                    st.next_counts[static_cast<std::size_t>(a)].row(s).dot(W) / nc;
                next(a, s) = base(a, s) + scale * mean_w;
            }
        change = (next - q).cwiseAbs().maxCoeff();
        q.swap(next);
        if (change <= opts.tol) break;
    }
    if (achieved_change) *achieved_change = change;
    if (change > opts.tol)
        throw SolverError("cell iteration did not converge; last change " +
                              std::to_string(change),
                          change, it);
    return QTable{q};
}

}  // namespace

QTable fitted_q_iteration(const CellStats& st, const RewardTable& r_n,
                          const PolicyTable& pi_target, Real gamma, const FqiOptions& opts,
                          const Kernel& k_fallback, Real* achieved_change) {
    detail::require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
    const QTable pinned = solve_policy_q(k_fallback, r_n, pi_target, gamma);
    return pinned_cell_iteration(
        st, pinned.values, gamma, opts, achieved_change,
        [&](const Matrix& q) { return policy_average(pi_target.probs, q); }, r_n.values);
}

QTable soft_q_iteration(const CellStats& st, const RewardTable& r_n, Real tau_star,
                        const std::vector<int>& action_set, Real gamma, const FqiOptions& opts,
                        const Kernel& k_fallback, Real* achieved_change) {
    detail::require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
    detail::require(tau_star > 0.0, "tau_star must be positive");
    const auto pinned = solve_soft_bellman(k_fallback, r_n, tau_star, action_set, gamma);
    const Matrix zero_base = Matrix::Zero(st.n_actions, st.n_states);
    return pinned_cell_iteration(
        st, pinned.v.values, 1.0, opts, achieved_change,
        [&](const Matrix& v) {
            Vector W(st.n_states);
            for (int s = 0; s < st.n_states; ++s) {
                const Vector z = (r_n.values.col(s) + gamma * v.col(s)) / tau_star;
                W(s) = tau_star * logsumexp(z, action_set);
            }
            return W;
        },
        zero_base);
}

OccupancyFit fit_occupancy_ratio(const CellStats& st, const Kernel& k_n,
                                 const PolicyTable& pi_n, const Vector& rho0_hat,
                                 const PolicyTable& pi, Real gamma, OccupancyMode mode) {
    const int S = st.n_states;
    OccupancyFit fit;
    if (mode == OccupancyMode::quadratic_loss) {
        // Normal equations for the empirical Riesz loss with
        // B = I - gamma K_pi under k_n and weights = raw state frequency.
        const Matrix B = Matrix::Identity(S, S) - gamma * policy_chain(k_n, pi.probs);
        const Vector freq = st.state_counts / static_cast<Real>(st.n);
        const Matrix G = B.transpose() * freq.asDiagonal() * B;
        Eigen::FullPivLU<Matrix> lu(G);
        if (lu.isInvertible()) {
            const Vector alpha = lu.solve(freq);
            fit.rho = B * alpha;
            fit.d = pi.probs.cwiseQuotient(pi_n.probs);
            fit.d.array().rowwise() *= fit.rho.transpose().array();
            return fit;
        }
        fit.quadratic_fell_back = true;
    }
    const auto occ = occupancy_ratios(k_n, rho0_hat, pi, pi_n, gamma);
    fit.rho = occ.rho;
    fit.d = occ.d;
    return fit;
}

std::vector<int> FoldPlan::fold_indices(int fold) const {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(assignments.size()); ++i)
        if (assignments[static_cast<std::size_t>(i)] == fold) idx.push_back(i);
    return idx;
}

std::vector<int> FoldPlan::complement_indices(int fold) const {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(assignments.size()); ++i)
        if (assignments[static_cast<std::size_t>(i)] != fold) idx.push_back(i);
    return idx;
}

FoldPlan cross_fit(const TransitionDataset& data, int K, std::uint64_t seed) {
    detail::require(K >= 2, "cross-fitting needs K >= 2");
    detail::require(data.n >= K, "cross-fitting needs n >= K");
    FoldPlan plan;
    plan.K = K;
    plan.seed = seed;
    const auto n = static_cast<std::size_t>(data.n);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 rng(mix64(seed ^ 0xF01DF01DULL));
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = rng.next() % (i + 1);
        std::swap(order[i], order[j]);
    }
    plan.assignments.resize(n);
    for (std::size_t pos = 0; pos < n; ++pos)
        plan.assignments[static_cast<std::size_t>(order[pos])] =
            static_cast<int>(pos % static_cast<std::size_t>(K));
    return plan;
}

namespace {
[[noreturn]] void missing(const std::string& kind, const std::string& name) {
    throw ValidationError("NuisanceSet is missing the " + kind + " table \"" + name + "\"");
}
}  // namespace

const FittedQ& NuisanceSet::q(const std::string& name) const {
    auto it = q_tables.find(name);
    if (it == q_tables.end()) missing("Q", name);
    return it->second;
}

const Matrix& NuisanceSet::aux(const std::string& name) const {
    auto it = aux_tables.find(name);
    if (it == aux_tables.end()) missing("auxiliary", name);
    return it->second;
}

const Vector& NuisanceSet::state(const std::string& name) const {
    auto it = state_tables.find(name);
    if (it == state_tables.end()) missing("state", name);
    return it->second;
}

const OccupancyFit& NuisanceSet::occ(const std::string& name) const {
    auto it = occupancy.find(name);
    if (it == occupancy.end()) missing("occupancy", name);
    return it->second;
}

const PolicyTable& NuisanceSet::policy(const std::string& name) const {
    auto it = policies.find(name);
    if (it == policies.end()) missing("policy", name);
    return it->second;
}

}  // namespace dirl
