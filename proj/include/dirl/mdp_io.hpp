#pragma once

#include "dirl/agent_sim.hpp"
#include "dirl/types.hpp"

#include <optional>
#include <string>

namespace dirl {

/// MDP file contents: dynamics plus the optional generating reward.
struct MdpFile {
    TabularMDP mdp;
    std::optional<RewardTable> reward;
};

/// JSON schema:
/// {"n_states": int, "n_actions": int, "gamma": float,
///  "kernel": [[[float]]] /* [a][s][s'] */, "rho0": [float],
///  "reward": [[float]] /* [a][s], optional */}
MdpFile load_mdp_json(const std::string& path);
void save_mdp_json(const std::string& path, const TabularMDP& mdp,
                   const RewardTable* reward = nullptr);

/// Datasets are CSV files with header `s,a,s_next`; a sidecar
/// `<path>.json` holds {"n": int, "seed": int, "mdp_fingerprint": hex}.
void save_dataset_csv(const std::string& csv_path, const TransitionDataset& data);
TransitionDataset load_dataset_csv(const std::string& csv_path);

std::string fingerprint_hex(std::uint64_t fp);
std::uint64_t parse_fingerprint_hex(const std::string& hex);

/// The reference RING2 instance: two states, two actions, gamma = 0.9,
/// action 0 stays and action 1 switches with probability 0.9 each.
MdpFile ring2_fixture();

/// RING2 with the normalized reward r(0,.) = 0, r(1,0) = 1, r(1,1) = -0.5
/// (zero under the point mass on action 0).
MdpFile ring2n_fixture();

}  // namespace dirl
