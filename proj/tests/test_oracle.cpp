#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dirl/mdp_io.hpp"
#include "dirl/oracle.hpp"
#include "dirl/rng.hpp"
#include "dirl/stats.hpp"

#include <cmath>

using namespace dirl;

namespace {

// Frozen closed forms on RING2 (symmetry: pi0 is the logistic of the
// reward gap, V0 = log(1+e)/(1-gamma), psi(true reward, uniform) = 5).
const Real kRing2V0 = std::log(1.0 + std::exp(1.0)) / 0.1;
const Real kRing2PsiR0Uniform = 5.0 - kRing2V0;  // value shift under the pseudo-reward

std::vector<std::pair<TabularMDP, RewardTable>> worlds(int count, std::uint64_t base) {
    std::vector<std::pair<TabularMDP, RewardTable>> out;
    const MdpFile r2 = ring2_fixture();
    out.emplace_back(r2.mdp, *r2.reward);
    for (int i = 1; i < count; ++i) {
        auto rm = random_mdp(5, 3, 0.9, base + static_cast<std::uint64_t>(i));
        out.emplace_back(rm.mdp, rm.reward);
    }
    return out;
}

std::vector<EstimandSpec> estimands_for(const TabularMDP& mdp) {
    const int S = mdp.n_states;
    const int A = mdp.n_actions;
    std::vector<int> restricted;
    for (int a = 0; a < std::max(1, A - 1); ++a) restricted.push_back(a);
    return {
        PolicyValueSpec{uniform_policy(S, A), mdp.gamma},
        SoftmaxValueSpec{restricted, 0.8, mdp.gamma},
        NormalizedPolicyValueSpec{uniform_policy(S, A), point_mass_policy(S, A, 0), mdp.gamma,
                                  0.5},
    };
}

}  // namespace

TEST_CASE("true_psi: frozen RING2 values and estimand-path consistency") {
    const MdpFile f = ring2_fixture();
    const PolicyTable uni = uniform_policy(2, 2);

    const Real psi_pv = true_psi(PolicyValueSpec{uni, 0.9}, f.mdp, *f.reward);
    CHECK(psi_pv == doctest::Approx(kRing2PsiR0Uniform).epsilon(1e-10));

    // Full-action-set softmax at tau* = 1 coincides with the policy value
    // of the behavior policy itself.
    const OracleWorld w = solve_world(f.mdp, *f.reward);
    const Real psi_soft = true_psi(SoftmaxValueSpec{{0, 1}, 1.0, 0.9}, f.mdp, *f.reward);
    const Real psi_pi0 = true_psi(PolicyValueSpec{w.pi0, 0.9}, f.mdp, *f.reward);
    CHECK(std::abs(psi_soft - psi_pi0) < 1e-10);
}

TEST_CASE("true_psi: gamma = 0 policy value closed form") {
    auto [mdp, reward] = random_mdp(4, 3, 0.9, 5150);
    const OracleWorld w = solve_world(mdp, reward);
    const PolicyTable pi = uniform_policy(4, 3);
    const Real psi = true_psi(PolicyValueSpec{pi, 0.0}, mdp, reward);
    Real expect = 0.0;
    for (int s = 0; s < 4; ++s)
        for (int a = 0; a < 3; ++a)
            expect += mdp.rho0(s) * pi.probs(a, s) * std::log(w.pi0.probs(a, s));
    CHECK(psi == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("true_psi: softmax estimand rejects a non-behavioral discount") {
    const MdpFile f = ring2_fixture();
    CHECK_THROWS_AS(true_psi(SoftmaxValueSpec{{0, 1}, 1.0, 0.5}, f.mdp, *f.reward),
                    ValidationError);
}

TEST_CASE("true_eif_and_bound: mean zero, positive bound, m-agreement") {
    for (const auto& [mdp, reward] : worlds(4, 900)) {
        for (const EstimandSpec& estimand : estimands_for(mdp)) {
            const OracleTruth truth = true_eif_and_bound(estimand, mdp, reward);
            CHECK(truth.sigma0_sq > 0.0);
            const OracleWorld w = solve_world(mdp, reward);
            // Exact mean of chi is zero (rechecked here over the tensor).
            Real mean = 0.0, m_mean = 0.0;
            for (int s = 0; s < mdp.n_states; ++s)
                for (int a = 0; a < mdp.n_actions; ++a) {
                    const Real wgt = mdp.rho0(s) * w.pi0.probs(a, s);
                    m_mean += wgt * truth.tables.at("m0")(a, s);
                    for (int sp = 0; sp < mdp.n_states; ++sp)
                        mean += wgt * mdp.kernel[static_cast<std::size_t>(a)](s, sp) *
                                truth.chi[static_cast<std::size_t>(a)](s, sp);
                }
            CHECK(std::abs(mean) < 1e-10);
            CHECK(std::abs(m_mean - truth.psi0) < 1e-10);
        }
    }
}

TEST_CASE("pathwise probe validates every influence function") {
    for (const auto& [mdp, reward] : worlds(3, 4400)) {
        const OracleWorld w = solve_world(mdp, reward);
        for (const EstimandSpec& estimand : estimands_for(mdp)) {
            const OracleTruth truth = true_eif_and_bound(estimand, mdp, reward);
            for (std::uint64_t d = 0; d < 5; ++d) {
                const Kernel phi = random_score_direction(mdp, w.pi0, 17 * d + 3);
                const auto probe = pathwise_probe(estimand, mdp, reward, phi, 1e-4, truth);
                CHECK(probe.rel_error <= 1e-3);
            }
        }
    }
}

TEST_CASE("softmax EIF: full action set at tau 1 has vanishing ratio residuals") {
    const MdpFile f = ring2_fixture();
    const OracleTruth truth =
        true_eif_and_bound(SoftmaxValueSpec{{0, 1}, 1.0, 0.9}, f.mdp, *f.reward);
    // pi* = pi0, so d* = rho* and the (pi*/pi0 - 1) factors vanish; the
    // alpha slot reduces to the pointwise advantage term.
    const OracleWorld w = solve_world(f.mdp, *f.reward);
    CHECK((truth.tables.at("pi_star") - w.pi0.probs).cwiseAbs().maxCoeff() < 1e-11);
    const Matrix& alpha = truth.tables.at("alpha_centered");
    const Matrix& d_star = truth.tables.at("d_star");
    const Matrix& q_star = truth.tables.at("q_star");
    const Vector& V_star = truth.state_tables.at("V_star");
    for (int a = 0; a < 2; ++a)
        for (int s = 0; s < 2; ++s)
            CHECK(alpha(a, s) ==
                  doctest::Approx(d_star(a, s) * (q_star(a, s) - V_star(s))).epsilon(1e-9));
}

TEST_CASE("policy-value EIF at gamma 0 collapses to the closed form") {
    const MdpFile f = ring2_fixture();
    const PolicyTable pi = uniform_policy(2, 2);
    const OracleTruth truth = true_eif_and_bound(PolicyValueSpec{pi, 0.0}, f.mdp, *f.reward);
    const OracleWorld w = solve_world(f.mdp, *f.reward);
    for (int a = 0; a < 2; ++a)
        for (int s = 0; s < 2; ++s) {
            const Real ratio = pi.probs(a, s) / w.pi0.probs(a, s);
            Real V = 0.0;
            for (int aa = 0; aa < 2; ++aa)
                V += pi.probs(aa, s) * std::log(w.pi0.probs(aa, s));
            for (int sp = 0; sp < 2; ++sp)
                CHECK(truth.chi[static_cast<std::size_t>(a)](s, sp) ==
                      doctest::Approx((ratio - 1.0) + V - truth.psi0).epsilon(1e-10));
        }
}

TEST_CASE("check_identification: RING2-N passes every check at 1e-8") {
    const MdpFile f = ring2n_fixture();
    const PolicyTable nu = point_mass_policy(2, 2, 0);
    const std::vector<PolicyTable> policies = {uniform_policy(2, 2),
                                               point_mass_policy(2, 2, 1)};
    const auto rep = check_identification(f.mdp, *f.reward, nu, policies, 0.9);
    CHECK(rep.q_shift_violation < 1e-8);
    CHECK(rep.value_diff_violation < 1e-8);
    REQUIRE(rep.recovery_violation.has_value());
    CHECK(*rep.recovery_violation < 1e-8);
    CHECK(rep.adjoint_marginal_violation < 1e-10);
    CHECK(rep.adjoint_pointwise_violation < 1e-10);
    CHECK(rep.reward_average_violation < 1e-10);
}

TEST_CASE("check_identification: non-normalized reward skips recovery with a note") {
    const MdpFile f = ring2_fixture();  // r(0,.) = (1, 0) is not nu-normalized
    const auto rep = check_identification(f.mdp, *f.reward, point_mass_policy(2, 2, 0),
                                          {uniform_policy(2, 2)}, 0.9);
    CHECK(!rep.recovery_violation.has_value());
    CHECK(rep.recovery_note.find("skipped") == 0);
}

TEST_CASE("check_identification: shaping leaves every output unchanged") {
    const MdpFile f = ring2n_fixture();
    SplitMix64 rng(8181);
    Vector c(2);
    c << 2.0 * rng.next_unit_open() - 1.0, 2.0 * rng.next_unit_open() - 1.0;
    const RewardTable shaped = shape_reward(f.mdp, *f.reward, c, 0.9);
    const PolicyTable nu = point_mass_policy(2, 2, 0);
    const std::vector<PolicyTable> policies = {uniform_policy(2, 2)};
    const auto a = check_identification(f.mdp, *f.reward, nu, policies, 0.9);
    const auto b = check_identification(f.mdp, shaped, nu, policies, 0.9);
    // pi0 is invariant under shaping, so the identification outputs agree
    // (the shaped reward is no longer nu-normalized, so recovery skips).
    CHECK(std::abs(a.adjoint_marginal_violation - b.adjoint_marginal_violation) < 1e-10);
    CHECK(std::abs(a.reward_average_violation - b.reward_average_violation) < 1e-10);
    CHECK(a.q_shift_violation < 1e-8);
    CHECK(b.q_shift_violation < 1e-8);
}

TEST_CASE("check_identification: gamma 0 recovery reduces to centering") {
    const MdpFile f = ring2n_fixture();
    // At gamma = 0 the soft-optimal policy is the softmax of the reward
    // alone and recovery is exact centering.
    TabularMDP mdp0 = f.mdp;
    mdp0.gamma = 0.0;
    const auto rep = check_identification(mdp0, *f.reward, point_mass_policy(2, 2, 0),
                                          {uniform_policy(2, 2)}, 0.0);
    REQUIRE(rep.recovery_violation.has_value());
    CHECK(*rep.recovery_violation < 1e-12);
}

TEST_CASE("von_mises_remainder: zero at eps 0 and for single-factor directions") {
    const MdpFile f = ring2_fixture();
    const PolicyTable uni = uniform_policy(2, 2);
    const EstimandSpec estimand = PolicyValueSpec{uni, 0.9};

    NuisancePerturbation none;
    CHECK(std::abs(von_mises_remainder(estimand, f.mdp, *f.reward, none, 0.0)) < 1e-12);

    // Occupancy-only perturbation with exact q and r: the mixed-bias
    // product has one exact factor, so the remainder vanishes.
    NuisancePerturbation occ_only;
    Vector dir(2);
    dir << 0.7, -0.4;
    occ_only.rho_dir = dir;
    for (Real eps : {0.1, 0.05, 0.025})
        CHECK(std::abs(von_mises_remainder(estimand, f.mdp, *f.reward, occ_only, eps)) < 1e-10);
}

TEST_CASE("von_mises_remainder: joint perturbations are second order") {
    const MdpFile f = ring2_fixture();
    SplitMix64 rng(7);
    const auto rand_mat = [&](int rows, int cols) {
        Matrix m(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) m(r, c) = 2.0 * rng.next_unit_open() - 1.0;
        return m;
    };
    const auto rand_vec = [&](int n) {
        Vector v(n);
        for (int i = 0; i < n; ++i) v(i) = 2.0 * rng.next_unit_open() - 1.0;
        return v;
    };

    const std::vector<Real> eps_grid = {0.1, 0.05, 0.025};

    SUBCASE("policy value") {
        NuisancePerturbation dir;
        dir.r_dir = rand_mat(2, 2);
        dir.rho_dir = rand_vec(2);
        dir.q_dir = rand_mat(2, 2);
        std::vector<Real> remainders;
        for (Real eps : eps_grid)
            remainders.push_back(von_mises_remainder(PolicyValueSpec{uniform_policy(2, 2), 0.9},
                                                     f.mdp, *f.reward, dir, eps));
        const Real slope = loglog_slope(eps_grid, remainders);
        CHECK(slope >= 1.7);
        CHECK(slope <= 2.3);
    }
    SUBCASE("normalized policy value") {
        NuisancePerturbation dir;
        dir.r_dir = rand_mat(2, 2);
        dir.rho_dir = rand_vec(2);
        dir.q_dir = rand_mat(2, 2);
        dir.q_nu_dir = rand_mat(2, 2);
        const EstimandSpec estimand = NormalizedPolicyValueSpec{
            uniform_policy(2, 2), point_mass_policy(2, 2, 0), 0.9, 0.5};
        std::vector<Real> remainders;
        for (Real eps : eps_grid)
            remainders.push_back(von_mises_remainder(estimand, f.mdp, *f.reward, dir, eps));
        const Real slope = loglog_slope(eps_grid, remainders);
        CHECK(slope >= 1.7);
        CHECK(slope <= 2.3);
    }
    SUBCASE("softmax value on an asymmetric world") {
        auto [mdp, reward] = random_mdp(3, 2, 0.9, 606);
        NuisancePerturbation dir;
        dir.r_dir = rand_mat(2, 3);
        dir.rho_dir = rand_vec(3);
        dir.q_dir = rand_mat(2, 3);
        dir.v_star_dir = rand_mat(2, 3);
        dir.rho_tilde_dir = rand_vec(3);
        const EstimandSpec estimand = SoftmaxValueSpec{{0, 1}, 0.7, 0.9};
        std::vector<Real> remainders;
        for (Real eps : eps_grid)
            remainders.push_back(von_mises_remainder(estimand, mdp, reward, dir, eps));
        const Real slope = loglog_slope(eps_grid, remainders);
        CHECK(slope >= 1.7);
        CHECK(slope <= 2.3);
    }
}

TEST_CASE("exact nuisances drive eif_contribution back to the oracle chi") {
    for (const auto& [mdp, reward] : worlds(2, 7300)) {
        const OracleWorld w = solve_world(mdp, reward);
        for (const EstimandSpec& estimand : estimands_for(mdp)) {
            const OracleTruth truth = true_eif_and_bound(estimand, mdp, reward);
            const NuisanceSet nuis = exact_nuisances(estimand, mdp, reward);
            Real worst = 0.0;
            for (int s = 0; s < mdp.n_states; ++s)
                for (int a = 0; a < mdp.n_actions; ++a)
                    for (int sp = 0; sp < mdp.n_states; ++sp) {
                        const Real contrib =
                            eif_contribution(estimand, Transition{s, a, sp}, nuis);
                        const Real chi = truth.chi[static_cast<std::size_t>(a)](s, sp);
                        worst = std::max(worst, std::abs(contrib - (chi + truth.psi0)));
                    }
            CHECK(worst < 1e-9);
        }
    }
}
