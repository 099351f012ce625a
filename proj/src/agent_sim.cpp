#include "dirl/agent_sim.hpp"

#include "dirl/rng.hpp"

#include <cmath>

namespace dirl {

TransitionDataset sample_transitions(const TabularMDP& mdp, const RewardTable& true_reward, long n,
                                     std::uint64_t seed, const SolveOptions& opts) {
    detail::require(n >= 1, "sample_transitions requires n >= 1");
    mdp.validate();
    const auto soft = solve_soft_bellman(mdp, true_reward, 1.0, full_action_set(mdp.n_actions),
                                         mdp.gamma, opts);
    return sample_transitions_with_policy(mdp, soft.pi_softmax, n, seed,
                                          fingerprint_with_reward(mdp, true_reward.values));
}

TransitionDataset sample_transitions_with_policy(const TabularMDP& mdp, const PolicyTable& pi,
                                                 long n, std::uint64_t seed,
                                                 std::uint64_t fingerprint) {
    detail::require(n >= 1, "sampling requires n >= 1");
    pi.validate_distribution();
    TransitionDataset data;
    data.n = n;
    data.seed = seed;
    data.mdp_fingerprint = fingerprint;
    data.records.resize(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        SplitMix64 rng = record_stream(seed, static_cast<std::uint64_t>(i));
        Transition& t = data.records[static_cast<std::size_t>(i)];
        t.s = sample_categorical(rng, mdp.rho0);
        t.a = sample_categorical(rng, pi.probs.col(t.s));
        t.s_next = sample_categorical(rng, mdp.kernel[static_cast<std::size_t>(t.a)].row(t.s));
    }
    return data;
}

Vector gumbel_action_frequencies(const QTable& q_total, int state, long n_draws,
                                 std::uint64_t seed) {
    detail::require(n_draws >= 1, "n_draws must be >= 1");
    detail::require(state >= 0 && state < q_total.values.cols(), "state index out of range");
    const int A = static_cast<int>(q_total.values.rows());
    Vector counts = Vector::Zero(A);
    for (long i = 0; i < n_draws; ++i) {
        SplitMix64 rng = record_stream(seed, static_cast<std::uint64_t>(i));
        int best = 0;
        Real best_u = -std::numeric_limits<Real>::infinity();
        for (int a = 0; a < A; ++a) {
            const Real u = q_total.values(a, state) + sample_gumbel(rng);
            if (u > best_u) {
                best_u = u;
                best = a;
            }
        }
        counts(best) += 1.0;
    }
    return counts / static_cast<Real>(n_draws);
}

std::uint64_t dataset_hash(const TransitionDataset& data) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    const auto mixin = [&h](std::uint64_t x) {
        for (int b = 0; b < 8; ++b) {
            h ^= (x >> (8 * b)) & 0xFF;
            h *= 0x100000001B3ULL;
        }
    };
    mixin(static_cast<std::uint64_t>(data.n));
    mixin(data.seed);
    mixin(data.mdp_fingerprint);
    for (const Transition& t : data.records) {
        mixin(static_cast<std::uint64_t>(t.s));
        mixin(static_cast<std::uint64_t>(t.a));
        mixin(static_cast<std::uint64_t>(t.s_next));
    }
    return h;
}

TransitionDataset subset_dataset(const TransitionDataset& data, const std::vector<int>& keep) {
    TransitionDataset out;
    out.seed = data.seed;
    out.mdp_fingerprint = data.mdp_fingerprint;
    out.records.reserve(keep.size());
    for (int i : keep) out.records.push_back(data.records.at(static_cast<std::size_t>(i)));
    out.n = static_cast<long>(out.records.size());
    return out;
}

}  // namespace dirl
