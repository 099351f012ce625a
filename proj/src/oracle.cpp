#include "dirl/oracle.hpp"

#include "dirl/json_util.hpp"
#include "dirl/rng.hpp"

#include <cmath>

namespace dirl {

namespace {

const SolveOptions kTight{1e-14, 200000, 4096, false};

void check_softmax_gamma(const SoftmaxValueSpec& sv, Real behavioral_gamma) {
    if (std::abs(sv.gamma - behavioral_gamma) > 1e-12)
        throw ValidationError(
            "softmax_value is identified only at the behavioral discount factor; "
            "use normalized_policy_value to evaluate at a different gamma");
}

Real triple_sum(const TabularMDP& mdp, const Matrix& pi0,
                const std::function<Real(int, int, int)>& f) {
    Real acc = 0.0;
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            const Real w = mdp.rho0(s) * pi0(a, s);
            for (int sp = 0; sp < mdp.n_states; ++sp)
                acc += w * mdp.kernel[static_cast<std::size_t>(a)](s, sp) * f(s, a, sp);
        }
    return acc;
}

}  // namespace

OracleWorld solve_world(const TabularMDP& mdp, const RewardTable& true_reward,
                        const SolveOptions& opts) {
    OracleWorld w;
    const auto sol = solve_soft_bellman(mdp, true_reward, 1.0, full_action_set(mdp.n_actions),
                                        mdp.gamma, opts);
    w.pi0 = sol.pi_softmax;
    w.r0 = log_policy_reward(sol.pi_softmax);
    w.v0 = sol.v;
    w.V0 = sol.V_soft;
    return w;
}

Real psi_under(const EstimandSpec& estimand, const Vector& rho, const Matrix& pi,
               const Kernel& kernel) {
    const RewardTable r{pi.array().log().matrix()};
    if (const auto* pv = std::get_if<PolicyValueSpec>(&estimand)) {
        const QTable q = solve_policy_q(kernel, r, pv->pi, pv->gamma, kTight);
        return rho.dot(policy_average(pv->pi.probs, q.values));
    }
    if (const auto* sv = std::get_if<SoftmaxValueSpec>(&estimand)) {
        const auto star = solve_soft_bellman(kernel, r, sv->tau_star, sv->action_set, sv->gamma,
                                             kTight);
        const QTable q = solve_policy_q(kernel, r, star.pi_softmax, sv->gamma, kTight);
        return rho.dot(policy_average(star.pi_softmax.probs, q.values));
    }
    const auto& npv = std::get<NormalizedPolicyValueSpec>(estimand);
    const QTable q_nu = solve_policy_q(kernel, r, npv.nu, npv.gamma, kTight);
    const Vector V_nu = policy_average(npv.nu.probs, q_nu.values);
    const RewardTable r_nu{q_nu.values.rowwise() - V_nu.transpose()};
    const QTable q_pi = solve_policy_q(kernel, r_nu, npv.pi, npv.gamma_prime, kTight);
    return rho.dot(policy_average(npv.pi.probs, q_pi.values));
}

Real true_psi(const EstimandSpec& estimand, const TabularMDP& mdp,
              const RewardTable& true_reward) {
    validate_estimand(estimand);
    if (const auto* sv = std::get_if<SoftmaxValueSpec>(&estimand))
        check_softmax_gamma(*sv, mdp.gamma);
    const OracleWorld w = solve_world(mdp, true_reward);
    return psi_under(estimand, mdp.rho0, w.pi0.probs, mdp.kernel);
}

NuisanceSet exact_nuisances(const EstimandSpec& estimand, const TabularMDP& mdp,
                            const RewardTable& true_reward) {
    validate_estimand(estimand);
    const OracleWorld w = solve_world(mdp, true_reward);
    const int S = mdp.n_states;

    NuisanceSet nuis;
    nuis.fold_id = -1;
    nuis.pi_n = w.pi0;
    nuis.r_n = w.r0;
    nuis.k_n = mdp.kernel;
    nuis.rho0_hat = mdp.rho0;

    if (const auto* pv = std::get_if<PolicyValueSpec>(&estimand)) {
        FittedQ q;
        q.table = solve_policy_q(mdp, w.r0, pv->pi, pv->gamma, kTight);
        q.policy_tag = "pi";
        q.reward_tag = "r0";
        q.gamma = pv->gamma;
        nuis.state_tables["V_pi_gamma"] = policy_average(pv->pi.probs, q.table.values);
        nuis.q_tables["q_pi_gamma"] = std::move(q);
        const auto occ = occupancy_ratios(mdp, pv->pi, w.pi0, pv->gamma, kTight);
        nuis.occupancy["pi_gamma"] = OccupancyFit{occ.rho, occ.d, false};
        return nuis;
    }

    if (const auto* sv = std::get_if<SoftmaxValueSpec>(&estimand)) {
        check_softmax_gamma(*sv, mdp.gamma);
        const auto star = solve_soft_bellman(mdp, w.r0, sv->tau_star, sv->action_set, sv->gamma,
                                             kTight);
        FittedQ vstar;
        vstar.table = star.v;
        vstar.policy_tag = "pi_star_softmax";
        vstar.reward_tag = "r0";
        vstar.gamma = sv->gamma;
        FittedQ qstar;
        qstar.table = solve_policy_q(mdp, w.r0, star.pi_softmax, sv->gamma, kTight);
        qstar.policy_tag = "pi_star";
        qstar.reward_tag = "r0";
        qstar.gamma = sv->gamma;

        const Vector V_star = policy_average(star.pi_softmax.probs, qstar.table.values);
        Vector V_soft(S);
        const Matrix logits = w.r0.values + sv->gamma * star.v.values;
        for (int s = 0; s < S; ++s)
            V_soft(s) = sv->tau_star * logsumexp(Vector(logits.col(s) / sv->tau_star),
                                                 sv->action_set);

        const auto occ = occupancy_ratios(mdp, star.pi_softmax, w.pi0, sv->gamma, kTight);
        const Kernel rho_cond = conditional_occupancy(mdp, star.pi_softmax, sv->gamma, kTight);
        const Vector rho_tilde = advantage_weighted_occupancy(mdp.rho0, w.pi0, occ.d,
                                                              qstar.table, V_star, rho_cond);

        nuis.state_tables["V_star"] = V_star;
        nuis.state_tables["V_soft_star"] = std::move(V_soft);
        nuis.state_tables["rho_tilde_star"] = rho_tilde;
        nuis.occupancy["star"] = OccupancyFit{occ.rho, occ.d, false};
        nuis.q_tables["v_star"] = std::move(vstar);
        nuis.q_tables["q_star"] = std::move(qstar);
        nuis.policies["pi_star"] = star.pi_softmax;
        return nuis;
    }

    const auto& npv = std::get<NormalizedPolicyValueSpec>(estimand);
    const NormalizedReward norm = normalized_reward(mdp, w.r0, npv.nu, npv.gamma, kTight);
    FittedQ qnu;
    qnu.table = norm.q_nu;
    qnu.policy_tag = "nu";
    qnu.reward_tag = "r0";
    qnu.gamma = npv.gamma;
    FittedQ qpi;
    qpi.table = solve_policy_q(mdp, norm.r_nu, npv.pi, npv.gamma_prime, kTight);
    qpi.policy_tag = "pi";
    qpi.reward_tag = "r_nu";
    qpi.gamma = npv.gamma_prime;

    nuis.state_tables["V_nu_gamma"] = policy_average(npv.nu.probs, qnu.table.values);
    nuis.state_tables["V_pi_prime_nu"] = policy_average(npv.pi.probs, qpi.table.values);
    nuis.aux_tables["r_nu"] = norm.r_nu.values;

    const auto occ = occupancy_ratios(mdp, npv.pi, w.pi0, npv.gamma_prime, kTight);
    nuis.occupancy["pi_gamma_prime"] = OccupancyFit{occ.rho, occ.d, false};

    const Matrix K_pi = policy_chain(mdp.kernel, npv.pi.probs);
    const Matrix K_nu = policy_chain(mdp.kernel, npv.nu.probs);
    const Vector m_occ = mdp.rho0.cwiseProduct(occ.rho);
    const Vector w_tilde = (Matrix::Identity(S, S) - npv.gamma * K_nu.transpose())
                               .partialPivLu()
                               .solve(npv.gamma * ((K_pi - K_nu).transpose() * m_occ));
    nuis.state_tables["g_tilde"] = w_tilde.cwiseQuotient(mdp.rho0);

    nuis.q_tables["q_nu_gamma"] = std::move(qnu);
    nuis.q_tables["q_pi_prime_nu"] = std::move(qpi);
    return nuis;
}

OracleTruth true_eif_and_bound(const EstimandSpec& estimand, const TabularMDP& mdp,
                               const RewardTable& true_reward) {
    const OracleWorld w = solve_world(mdp, true_reward);
    const int S = mdp.n_states;
    const int A = mdp.n_actions;
    const Matrix& pi0 = w.pi0.probs;

    OracleTruth truth;
    truth.psi0 = psi_under(estimand, mdp.rho0, pi0, mdp.kernel);
    truth.chi.assign(static_cast<std::size_t>(A), Matrix(S, S));
    truth.beta_over_k.assign(static_cast<std::size_t>(A), Matrix(S, S));
    Matrix alpha_centered(A, S);
    Matrix m0(A, S);

    if (const auto* pv = std::get_if<PolicyValueSpec>(&estimand)) {
        const QTable q = solve_policy_q(mdp, w.r0, pv->pi, pv->gamma, kTight);
        const Vector V = policy_average(pv->pi.probs, q.values);
        const auto occ = occupancy_ratios(mdp, pv->pi, w.pi0, pv->gamma, kTight);
        for (int a = 0; a < A; ++a)
            for (int s = 0; s < S; ++s) {
                const Real ratio = pv->pi.probs(a, s) / pi0(a, s);
                alpha_centered(a, s) = occ.rho(s) * (ratio - 1.0);
                m0(a, s) = V(s);
                for (int sp = 0; sp < S; ++sp)
                    truth.beta_over_k[static_cast<std::size_t>(a)](s, sp) =
                        occ.d(a, s) *
                        (w.r0.values(a, s) + pv->gamma * V(sp) - q.values(a, s));
            }
        truth.state_tables["rho"] = occ.rho;
        truth.state_tables["V"] = V;
        truth.tables["q"] = q.values;
        truth.tables["d"] = occ.d;
    } else if (const auto* sv = std::get_if<SoftmaxValueSpec>(&estimand)) {
        check_softmax_gamma(*sv, mdp.gamma);
        const Real tau = sv->tau_star;
        const auto star = solve_soft_bellman(mdp, w.r0, tau, sv->action_set, sv->gamma, kTight);
        const QTable q_star = solve_policy_q(mdp, w.r0, star.pi_softmax, sv->gamma, kTight);
        const Vector V_star = policy_average(star.pi_softmax.probs, q_star.values);
        const Matrix logits = w.r0.values + sv->gamma * star.v.values;
        Vector V_soft(S);
        for (int s = 0; s < S; ++s)
            V_soft(s) = tau * logsumexp(Vector(logits.col(s) / tau), sv->action_set);
        const auto occ = occupancy_ratios(mdp, star.pi_softmax, w.pi0, sv->gamma, kTight);
        const Kernel rho_cond = conditional_occupancy(mdp, star.pi_softmax, sv->gamma, kTight);
        const Vector rho_tilde = advantage_weighted_occupancy(mdp.rho0, w.pi0, occ.d, q_star,
                                                              V_star, rho_cond);
        for (int a = 0; a < A; ++a)
            for (int s = 0; s < S; ++s) {
                const Real ratio = star.pi_softmax.probs(a, s) / pi0(a, s);
                const Real advantage = occ.d(a, s) * (q_star.values(a, s) - V_star(s)) / tau;
                alpha_centered(a, s) =
                    (rho_tilde(s) / tau + occ.rho(s)) * (ratio - 1.0) + advantage;
                m0(a, s) = V_star(s);
                for (int sp = 0; sp < S; ++sp) {
                    const Real td_v = V_soft(sp) - star.v.values(a, s);
                    const Real td_q =
                        w.r0.values(a, s) + sv->gamma * V_star(sp) - q_star.values(a, s);
                    truth.beta_over_k[static_cast<std::size_t>(a)](s, sp) =
                        (sv->gamma / tau) * rho_tilde(s) * ratio * td_v + occ.d(a, s) * td_q +
                        advantage * sv->gamma * td_v;
                }
            }
        truth.state_tables["rho_star"] = occ.rho;
        truth.state_tables["rho_tilde_star"] = rho_tilde;
        truth.state_tables["V_star"] = V_star;
        truth.state_tables["V_soft_star"] = V_soft;
        truth.tables["q_star"] = q_star.values;
        truth.tables["d_star"] = occ.d;
        truth.tables["pi_star"] = star.pi_softmax.probs;
    } else {
        const auto& npv = std::get<NormalizedPolicyValueSpec>(estimand);
        const NormalizedReward norm = normalized_reward(mdp, w.r0, npv.nu, npv.gamma, kTight);
        const Vector V_nu = policy_average(npv.nu.probs, norm.q_nu.values);
        const QTable q_pi = solve_policy_q(mdp, norm.r_nu, npv.pi, npv.gamma_prime, kTight);
        const Vector V_pi = policy_average(npv.pi.probs, q_pi.values);
        const auto occ = occupancy_ratios(mdp, npv.pi, w.pi0, npv.gamma_prime, kTight);
        const Matrix K_pi = policy_chain(mdp.kernel, npv.pi.probs);
        const Matrix K_nu = policy_chain(mdp.kernel, npv.nu.probs);
        const Vector m_occ = mdp.rho0.cwiseProduct(occ.rho);
        const Vector w_tilde = (Matrix::Identity(S, S) - npv.gamma * K_nu.transpose())
                                   .partialPivLu()
                                   .solve(npv.gamma * ((K_pi - K_nu).transpose() * m_occ));
        const Vector g_tilde = w_tilde.cwiseQuotient(mdp.rho0);
        for (int a = 0; a < A; ++a)
            for (int s = 0; s < S; ++s) {
                const Real ratio_pi = npv.pi.probs(a, s) / pi0(a, s);
                const Real ratio_nu = npv.nu.probs(a, s) / pi0(a, s);
                alpha_centered(a, s) =
                    occ.rho(s) * (ratio_pi - ratio_nu) + g_tilde(s) * (ratio_nu - 1.0);
                m0(a, s) = V_pi(s);
                for (int sp = 0; sp < S; ++sp) {
                    const Real td_nu =
                        w.r0.values(a, s) + npv.gamma * V_nu(sp) - norm.q_nu.values(a, s);
                    const Real td_pi = norm.r_nu.values(a, s) +
                                       npv.gamma_prime * V_pi(sp) - q_pi.values(a, s);
                    truth.beta_over_k[static_cast<std::size_t>(a)](s, sp) =
                        occ.rho(s) * ratio_pi * td_pi +
                        occ.rho(s) * (ratio_pi - ratio_nu) * td_nu +
                        g_tilde(s) * ratio_nu * td_nu;
                }
            }
        truth.state_tables["rho"] = occ.rho;
        truth.state_tables["g_tilde"] = g_tilde;
        truth.state_tables["V_nu_gamma"] = V_nu;
        truth.state_tables["V_pi_prime_nu"] = V_pi;
        truth.tables["r_nu"] = norm.r_nu.values;
        truth.tables["q_nu_gamma"] = norm.q_nu.values;
        truth.tables["q_pi_prime_nu"] = q_pi.values;
    }

    truth.tables["alpha_centered"] = alpha_centered;
    truth.tables["m0"] = m0;
    for (int a = 0; a < A; ++a)
        for (int s = 0; s < S; ++s)
            for (int sp = 0; sp < S; ++sp)
                truth.chi[static_cast<std::size_t>(a)](s, sp) =
                    alpha_centered(a, s) + truth.beta_over_k[static_cast<std::size_t>(a)](s, sp) +
                    m0(a, s) - truth.psi0;

    const Real mean = triple_sum(mdp, pi0, [&](int s, int a, int sp) {
        return truth.chi[static_cast<std::size_t>(a)](s, sp);
    });
    if (std::abs(mean) > 1e-8)
        throw SolverError("EIF mean-zero self-check failed (transcription bug guard); mean = " +
                              std::to_string(mean),
                          std::abs(mean), 0);
    truth.sigma0_sq = triple_sum(mdp, pi0, [&](int s, int a, int sp) {
        const Real c = truth.chi[static_cast<std::size_t>(a)](s, sp);
        return c * c;
    });
    return truth;
}

Kernel random_score_direction(const TabularMDP& mdp, const PolicyTable& pi0,
                              std::uint64_t seed) {
    SplitMix64 rng(mix64(seed ^ 0x5C0ED1ECULL));
    Kernel phi(static_cast<std::size_t>(mdp.n_actions), Matrix(mdp.n_states, mdp.n_states));
    for (auto& slice : phi)
        for (int s = 0; s < mdp.n_states; ++s)
            for (int sp = 0; sp < mdp.n_states; ++sp)
                slice(s, sp) = 2.0 * rng.next_unit_open() - 1.0;
    Real mean = 0.0;
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            for (int sp = 0; sp < mdp.n_states; ++sp)
                mean += mdp.rho0(s) * pi0.probs(a, s) *
                        mdp.kernel[static_cast<std::size_t>(a)](s, sp) *
                        phi[static_cast<std::size_t>(a)](s, sp);
    for (auto& slice : phi) slice.array() -= mean;
    return phi;
}

PathwiseProbeResult pathwise_probe(const EstimandSpec& estimand, const TabularMDP& mdp,
                                   const RewardTable& true_reward, const Kernel& phi,
                                   Real tilt, const OracleTruth& truth) {
    const OracleWorld w = solve_world(mdp, true_reward);
    const int S = mdp.n_states;
    const int A = mdp.n_actions;

    const auto tilted_psi = [&](Real t) {
        Vector rho(S);
        Matrix pi(A, S);
        Kernel kernel(static_cast<std::size_t>(A), Matrix(S, S));
        std::vector<Real> joint(static_cast<std::size_t>(S * A * S));
        Real z = 0.0;
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a)
                for (int sp = 0; sp < S; ++sp) {
                    const Real p = mdp.rho0(s) * w.pi0.probs(a, s) *
                                   mdp.kernel[static_cast<std::size_t>(a)](s, sp) *
                                   std::exp(t * phi[static_cast<std::size_t>(a)](s, sp));
                    joint[static_cast<std::size_t>((s * A + a) * S + sp)] = p;
                    z += p;
                }
        for (int s = 0; s < S; ++s) {
            Real ms = 0.0;
            for (int a = 0; a < A; ++a)
                for (int sp = 0; sp < S; ++sp)
                    ms += joint[static_cast<std::size_t>((s * A + a) * S + sp)];
            rho(s) = ms / z;
            for (int a = 0; a < A; ++a) {
                Real ma = 0.0;
                for (int sp = 0; sp < S; ++sp)
                    ma += joint[static_cast<std::size_t>((s * A + a) * S + sp)];
                pi(a, s) = ma / ms;
                for (int sp = 0; sp < S; ++sp)
                    kernel[static_cast<std::size_t>(a)](s, sp) =
                        joint[static_cast<std::size_t>((s * A + a) * S + sp)] / ma;
            }
        }
        return psi_under(estimand, rho, pi, kernel);
    };

    PathwiseProbeResult out;
    out.derivative = (tilted_psi(tilt) - tilted_psi(-tilt)) / (2.0 * tilt);
    out.inner_product = triple_sum(mdp, w.pi0.probs, [&](int s, int a, int sp) {
        return truth.chi[static_cast<std::size_t>(a)](s, sp) *
               phi[static_cast<std::size_t>(a)](s, sp);
    });
    out.rel_error = std::abs(out.inner_product - out.derivative) /
                    std::max(std::abs(out.derivative), Real(1e-12));
    return out;
}

nlohmann::json IdentificationReport::to_json() const {
    nlohmann::json j;
    j["q_shift_violation"] = q_shift_violation;
    j["value_diff_violation"] = value_diff_violation;
    if (recovery_violation)
        j["recovery_violation"] = *recovery_violation;
    else
        j["recovery_violation"] = nullptr;
    j["recovery_note"] = recovery_note;
    j["adjoint_marginal_violation"] = adjoint_marginal_violation;
    j["adjoint_pointwise_violation"] = adjoint_pointwise_violation;
    j["reward_average_violation"] = reward_average_violation;
    return j;
}

IdentificationReport check_identification(const TabularMDP& mdp, const RewardTable& true_reward,
                                          const PolicyTable& nu,
                                          const std::vector<PolicyTable>& policies, Real gamma,
                                          std::uint64_t seed) {
    const OracleWorld w = solve_world(mdp, true_reward);
    const int S = mdp.n_states;
    const int A = mdp.n_actions;
    const Matrix& pi0 = w.pi0.probs;
    IdentificationReport rep;

    // (i)-(ii): potential shift of Q-functions and equality of value
    // differences under the pseudo-reward versus the true reward.
    std::vector<Real> v_r0, v_true;
    for (const PolicyTable& pi : policies) {
        const QTable qa = solve_policy_q(mdp, w.r0, pi, gamma, kTight);
        const QTable qb = solve_policy_q(mdp, true_reward, pi, gamma, kTight);
        const Matrix shifted = qb.values.rowwise() - w.V0.transpose();
        rep.q_shift_violation =
            std::max(rep.q_shift_violation, (qa.values - shifted).cwiseAbs().maxCoeff());
        v_r0.push_back(policy_value_of(mdp.rho0, pi, qa));
        v_true.push_back(policy_value_of(mdp.rho0, pi, qb));
    }
    for (std::size_t i = 0; i < policies.size(); ++i)
        for (std::size_t j = i + 1; j < policies.size(); ++j)
            rep.value_diff_violation =
                std::max(rep.value_diff_violation,
                         std::abs((v_r0[i] - v_r0[j]) - (v_true[i] - v_true[j])));

    // (iii) Exact reward recovery when the true reward is nu-normalized.
    const Vector nu_rdag = policy_average(nu.probs, true_reward.values);
    if (nu_rdag.cwiseAbs().maxCoeff() <= 1e-9) {
        const auto norm = normalized_reward(mdp, w.r0, nu, gamma, kTight);
        rep.recovery_violation = (norm.r_nu.values - true_reward.values).cwiseAbs().maxCoeff();
        rep.recovery_note = "true reward is nu-normalized; recovery checked";
    } else {
        rep.recovery_note = "skipped: the true reward is not nu-normalized";
    }

    // (iv) Adjoint identities for 10 random f per policy. The marginal
    // identity uses the plain discounted occupancy; the pointwise one
    // uses the occupancy whose first step follows the data policy.
    SplitMix64 rng(mix64(seed));
    const Matrix I = Matrix::Identity(S, S);
    for (const PolicyTable& pi : policies) {
        const auto occ = occupancy_ratios(mdp, pi, w.pi0, gamma, kTight);
        const Matrix K_pi = policy_chain(mdp.kernel, pi.probs);
        const Matrix K_pi0 = policy_chain(mdp.kernel, pi0);
        const Vector m_mixed =
            mdp.rho0 + gamma * (I - gamma * K_pi.transpose())
                                   .partialPivLu()
                                   .solve(K_pi0.transpose() * mdp.rho0);
        for (int trial = 0; trial < 10; ++trial) {
            Matrix f(A, S);
            for (int a = 0; a < A; ++a)
                for (int s = 0; s < S; ++s) f(a, s) = 2.0 * rng.next_unit_open() - 1.0;
            const QTable tinv = solve_policy_q(mdp, RewardTable{f}, pi, gamma, kTight);
            const Vector pi_avg = policy_average(pi.probs, tinv.values);
            Real lhs1 = mdp.rho0.dot(pi_avg);
            Real lhs2 = 0.0, rhs1 = 0.0, rhs2 = 0.0;
            for (int s = 0; s < S; ++s)
                for (int a = 0; a < A; ++a) {
                    const Real wgt = mdp.rho0(s) * pi0(a, s);
                    const Real ratio = pi.probs(a, s) / pi0(a, s);
                    lhs2 += wgt * tinv.values(a, s);
                    rhs1 += wgt * occ.d(a, s) * f(a, s);
                    rhs2 += wgt * (1.0 - ratio + ratio * m_mixed(s) / mdp.rho0(s)) * f(a, s);
                }
            rep.adjoint_marginal_violation =
                std::max(rep.adjoint_marginal_violation, std::abs(lhs1 - rhs1));
            rep.adjoint_pointwise_violation =
                std::max(rep.adjoint_pointwise_violation, std::abs(lhs2 - rhs2));
        }
    }

    // (v) Representation of reward averages for 5 random weights, with
    // the nu-chain correction term.
    const auto norm = normalized_reward(mdp, w.r0, nu, gamma, kTight);
    const Vector nu_r0 = policy_average(nu.probs, w.r0.values);
    const Matrix K_nu = policy_chain(mdp.kernel, nu.probs);
    for (int trial = 0; trial < 5; ++trial) {
        Matrix wt(A, S);
        for (int a = 0; a < A; ++a)
            for (int s = 0; s < S; ++s) wt(a, s) = 2.0 * rng.next_unit_open() - 1.0;
        Matrix u = pi0.cwiseProduct(wt);
        const Vector colsum = u.colwise().sum().transpose();
        u -= (nu.probs.array().rowwise() * colsum.transpose().array()).matrix();
        u.array().rowwise() *= mdp.rho0.transpose().array();
        Vector e = Vector::Zero(S);
        for (int a = 0; a < A; ++a)
            e += mdp.kernel[static_cast<std::size_t>(a)].transpose() *
                 u.row(a).transpose();
        const Vector w_tilde =
            (I - gamma * K_nu.transpose()).partialPivLu().solve(gamma * e);
        Real lhs = 0.0, rhs = w_tilde.dot(nu_r0);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                const Real p = mdp.rho0(s) * pi0(a, s);
                lhs += p * wt(a, s) * norm.r_nu.values(a, s);
                rhs += p * wt(a, s) * (w.r0.values(a, s) - nu_r0(s));
            }
        rep.reward_average_violation =
            std::max(rep.reward_average_violation, std::abs(lhs - rhs));
    }
    return rep;
}

Real von_mises_remainder(const EstimandSpec& estimand, const TabularMDP& mdp,
                         const RewardTable& true_reward, const NuisancePerturbation& direction,
                         Real eps) {
    NuisanceSet nuis = exact_nuisances(estimand, mdp, true_reward);
    const Real psi0 = psi_under(estimand, mdp.rho0, nuis.pi_n.probs, mdp.kernel);

    if (direction.r_dir) {
        nuis.r_n.values += eps * *direction.r_dir;
        nuis.pi_n.probs = nuis.r_n.values.array().exp().matrix();
        if (nuis.pi_n.probs.minCoeff() <= 0.0)
            throw ValidationError("perturbed policy lost positivity");
    }

    if (const auto* pv = std::get_if<PolicyValueSpec>(&estimand)) {
        if (direction.q_dir) {
            FittedQ& q = nuis.q_tables.at("q_pi_gamma");
            q.table.values += eps * *direction.q_dir;
            nuis.state_tables["V_pi_gamma"] = policy_average(pv->pi.probs, q.table.values);
        }
        if (direction.rho_dir) nuis.occupancy.at("pi_gamma").rho += eps * *direction.rho_dir;
    } else if (const auto* sv = std::get_if<SoftmaxValueSpec>(&estimand)) {
        if (direction.v_star_dir)
            nuis.q_tables.at("v_star").table.values += eps * *direction.v_star_dir;
        if (direction.r_dir || direction.v_star_dir) {
            const Matrix logits =
                nuis.r_n.values + sv->gamma * nuis.q_tables.at("v_star").table.values;
            nuis.policies["pi_star"] = softmax_policy(logits, sv->tau_star, sv->action_set);
            Vector V_soft(mdp.n_states);
            for (int s = 0; s < mdp.n_states; ++s)
                V_soft(s) = sv->tau_star *
                            logsumexp(Vector(logits.col(s) / sv->tau_star), sv->action_set);
            nuis.state_tables["V_soft_star"] = std::move(V_soft);
        }
        if (direction.q_dir) nuis.q_tables.at("q_star").table.values += eps * *direction.q_dir;
        nuis.state_tables["V_star"] = policy_average(nuis.policies.at("pi_star").probs,
                                                     nuis.q_tables.at("q_star").table.values);
        if (direction.rho_dir) nuis.occupancy.at("star").rho += eps * *direction.rho_dir;
        if (direction.rho_tilde_dir)
            nuis.state_tables.at("rho_tilde_star") += eps * *direction.rho_tilde_dir;
    } else {
        const auto& npv = std::get<NormalizedPolicyValueSpec>(estimand);
        if (direction.q_nu_dir) {
            FittedQ& qnu = nuis.q_tables.at("q_nu_gamma");
            qnu.table.values += eps * *direction.q_nu_dir;
            const Vector V_nu = policy_average(npv.nu.probs, qnu.table.values);
            nuis.state_tables["V_nu_gamma"] = V_nu;
            nuis.aux_tables["r_nu"] = qnu.table.values.rowwise() - V_nu.transpose();
        }
        if (direction.q_dir) {
            FittedQ& qpi = nuis.q_tables.at("q_pi_prime_nu");
            qpi.table.values += eps * *direction.q_dir;
            nuis.state_tables["V_pi_prime_nu"] = policy_average(npv.pi.probs, qpi.table.values);
        }
        if (direction.rho_dir) {
            OccupancyFit& occ = nuis.occupancy.at("pi_gamma_prime");
            occ.rho += eps * *direction.rho_dir;
            // The nu-chain ratio is derived from the occupancy estimate.
            const Matrix K_pi = policy_chain(nuis.k_n, npv.pi.probs);
            const Matrix K_nu = policy_chain(nuis.k_n, npv.nu.probs);
            const Vector m_occ = nuis.rho0_hat.cwiseProduct(occ.rho);
            const Vector w_tilde =
                (Matrix::Identity(mdp.n_states, mdp.n_states) - npv.gamma * K_nu.transpose())
                    .partialPivLu()
                    .solve(npv.gamma * ((K_pi - K_nu).transpose() * m_occ));
            nuis.state_tables["g_tilde"] = w_tilde.cwiseQuotient(nuis.rho0_hat);
        }
    }

    const OracleWorld w = solve_world(mdp, true_reward);
    const Real mean = triple_sum(mdp, w.pi0.probs, [&](int s, int a, int sp) {
        return eif_contribution(estimand, Transition{s, a, sp}, nuis);
    });
    return mean - psi0;
}

}  // namespace dirl
