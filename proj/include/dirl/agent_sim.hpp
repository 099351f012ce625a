#pragma once

#include "dirl/mdp_core.hpp"
#include "dirl/types.hpp"

#include <cstdint>
#include <vector>

namespace dirl {

struct Transition {
    int s;
    int a;
    int s_next;
};

/// i.i.d. transition triples (S, A, S') with seed provenance. Record i is
/// drawn from its own SplitMix64 stream (see record_stream in rng.hpp):
/// three categorical draws in the order S ~ rho0, A ~ pi0(.|S),
/// S' ~ k(.|A, S), each by cumulative-sum inversion.
struct TransitionDataset {
    std::vector<Transition> records;
    long n = 0;
    std::uint64_t seed = 0;
    std::uint64_t mdp_fingerprint = 0;
};

/// Draws n i.i.d. transitions from the soft-optimal agent: the behavior
/// policy is the softmax policy of `true_reward` at tau = 1 over the full
/// action set. Deterministic given (mdp, true_reward, n, seed).
TransitionDataset sample_transitions(const TabularMDP& mdp, const RewardTable& true_reward, long n,
                                     std::uint64_t seed, const SolveOptions& opts = {});

/// Sampling under an explicitly supplied behavior policy.
TransitionDataset sample_transitions_with_policy(const TabularMDP& mdp, const PolicyTable& pi,
                                                 long n, std::uint64_t seed,
                                                 std::uint64_t fingerprint);

/// Empirical frequency of argmax_a { q_total(a, state) + eps(a) } over
/// n_draws i.i.d. Gumbel(0,1) shock vectors eps.
Vector gumbel_action_frequencies(const QTable& q_total, int state, long n_draws,
                                 std::uint64_t seed);

/// FNV-1a hash of the record stream (for reproducibility checks).
std::uint64_t dataset_hash(const TransitionDataset& data);

/// Records whose index lies in `keep` (order preserved); seed and
/// fingerprint provenance are carried over from the parent.
TransitionDataset subset_dataset(const TransitionDataset& data, const std::vector<int>& keep);

}  // namespace dirl
