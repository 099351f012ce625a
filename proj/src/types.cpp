#include "dirl/types.hpp"

#include <cmath>
#include <cstring>

namespace dirl {

namespace detail {

void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

void require_table_dims(const Matrix& m, int n_actions, int n_states, const std::string& what) {
    if (m.rows() != n_actions || m.cols() != n_states)
        throw ValidationError(what + " has shape " + std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()) + ", expected " +
                              std::to_string(n_actions) + "x" + std::to_string(n_states));
}

}  // namespace detail

void TabularMDP::validate(Real eps_pos) const {
    detail::require(n_states > 0, "n_states must be positive");
    detail::require(n_actions > 0, "n_actions must be positive");
    detail::require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
    detail::require(static_cast<int>(kernel.size()) == n_actions,
                    "kernel must have one slice per action");
    for (int a = 0; a < n_actions; ++a) {
        detail::require(kernel[a].rows() == n_states && kernel[a].cols() == n_states,
                        "kernel slice a=" + std::to_string(a) + " must be n_states x n_states");
        for (int s = 0; s < n_states; ++s) {
            const Real row_sum = kernel[a].row(s).sum();
            if (std::abs(row_sum - 1.0) > kSimplexTol)
                throw ValidationError("kernel row (a=" + std::to_string(a) +
                                      ", s=" + std::to_string(s) + ") sums to " +
                                      std::to_string(row_sum));
            if (kernel[a].row(s).minCoeff() < eps_pos)
                throw ValidationError("kernel row (a=" + std::to_string(a) +
                                      ", s=" + std::to_string(s) +
                                      ") violates the positivity floor");
        }
    }
    detail::require(rho0.size() == n_states, "rho0 must have one entry per state");
    if (std::abs(rho0.sum() - 1.0) > kSimplexTol)
        throw ValidationError("rho0 sums to " + std::to_string(rho0.sum()));
    if (rho0.minCoeff() < eps_pos)
        throw ValidationError("rho0 violates the positivity floor");
}

namespace {

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
}

void fnv_double(std::uint64_t& h, Real x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    fnv_bytes(h, &bits, sizeof bits);
}

}  // namespace

std::uint64_t TabularMDP::fingerprint() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    const std::uint32_t dims[2] = {static_cast<std::uint32_t>(n_states),
                                   static_cast<std::uint32_t>(n_actions)};
    fnv_bytes(h, dims, sizeof dims);
    fnv_double(h, gamma);
    for (int s = 0; s < n_states; ++s) fnv_double(h, rho0(s));
    for (int a = 0; a < n_actions; ++a)
        for (int s = 0; s < n_states; ++s)
            for (int sp = 0; sp < n_states; ++sp) fnv_double(h, kernel[a](s, sp));
    return h;
}

std::uint64_t fingerprint_with_reward(const TabularMDP& mdp, const Matrix& reward) {
    std::uint64_t h = mdp.fingerprint();
    for (int a = 0; a < reward.rows(); ++a)
        for (int s = 0; s < reward.cols(); ++s) {
            std::uint64_t bits;
            Real x = reward(a, s);
            std::memcpy(&bits, &x, sizeof bits);
            h ^= bits;
            h *= 0x100000001B3ULL;
        }
    return h;
}

void PolicyTable::validate_distribution() const {
    for (int s = 0; s < probs.cols(); ++s) {
        const Real col_sum = probs.col(s).sum();
        if (std::abs(col_sum - 1.0) > kSimplexTol)
            throw ValidationError("policy column s=" + std::to_string(s) + " sums to " +
                                  std::to_string(col_sum));
        if (probs.col(s).minCoeff() < 0.0)
            throw ValidationError("policy column s=" + std::to_string(s) +
                                  " has a negative probability");
    }
}

void PolicyTable::validate_positive(Real eta) const {
    validate_distribution();
    if (probs.size() > 0 && probs.minCoeff() < eta)
        throw ValidationError("policy violates the positivity floor eta=" + std::to_string(eta));
}

PolicyTable uniform_policy(int n_states, int n_actions) {
    PolicyTable pi;
    pi.probs = Matrix::Constant(n_actions, n_states, 1.0 / n_actions);
    return pi;
}

PolicyTable point_mass_policy(int n_states, int n_actions, int action) {
    detail::require(action >= 0 && action < n_actions, "point mass action out of range");
    PolicyTable pi;
    pi.probs = Matrix::Zero(n_actions, n_states);
    pi.probs.row(action).setOnes();
    return pi;
}

}  // namespace dirl
