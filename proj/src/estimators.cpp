#include "dirl/estimators.hpp"

#include "dirl/json_util.hpp"
#include "dirl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dirl {

namespace {

Real capped(Real ratio, const std::optional<Real>& cap, long* hits) {
    if (cap && ratio > *cap) {
        if (hits) ++*hits;
        return *cap;
    }
    return ratio;
}

}  // namespace

// ---------------------------------------------------------------------------
// Estimand plumbing
// ---------------------------------------------------------------------------

void validate_estimand(const EstimandSpec& estimand) {
    std::visit(
        [](const auto& spec) {
            using T = std::decay_t<decltype(spec)>;
            detail::require(spec.gamma >= 0.0 && spec.gamma < 1.0, "gamma must lie in [0, 1)");
            if constexpr (std::is_same_v<T, PolicyValueSpec>) {
                spec.pi.validate_distribution();
            } else if constexpr (std::is_same_v<T, SoftmaxValueSpec>) {
                detail::require(!spec.action_set.empty(), "action set must be nonempty");
                detail::require(spec.tau_star > 0.0, "tau_star must be positive");
            } else {
                detail::require(spec.gamma_prime >= 0.0 && spec.gamma_prime < 1.0,
                                "gamma_prime must lie in [0, 1)");
                spec.pi.validate_distribution();
                spec.nu.validate_distribution();
            }
        },
        estimand);
}

std::string estimand_name(const EstimandSpec& estimand) {
    if (std::holds_alternative<PolicyValueSpec>(estimand)) return "policy_value";
    if (std::holds_alternative<SoftmaxValueSpec>(estimand)) return "softmax_value";
    return "normalized_policy_value";
}

EstimandSpec estimand_from_json(const nlohmann::json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "policy_value") {
        PolicyValueSpec spec;
        spec.gamma = j.at("gamma").get<Real>();
        spec.pi.probs = matrix_from(j.at("pi"), "pi");
        return spec;
    }
    if (type == "softmax_value") {
        SoftmaxValueSpec spec;
        spec.gamma = j.at("gamma").get<Real>();
        spec.tau_star = j.at("tau_star").get<Real>();
        spec.action_set = j.at("action_set").get<std::vector<int>>();
        return spec;
    }
    if (type == "normalized_policy_value") {
        NormalizedPolicyValueSpec spec;
        spec.gamma = j.at("gamma").get<Real>();
        spec.gamma_prime = j.at("gamma_prime").get<Real>();
        spec.pi.probs = matrix_from(j.at("pi"), "pi");
        spec.nu.probs = matrix_from(j.at("nu"), "nu");
        return spec;
    }
    throw ValidationError("unknown estimand type \"" + type + "\"");
}

nlohmann::json estimand_to_json(const EstimandSpec& estimand) {
    nlohmann::json j;
    j["type"] = estimand_name(estimand);
    std::visit(
        [&](const auto& spec) {
            using T = std::decay_t<decltype(spec)>;
            j["gamma"] = spec.gamma;
            if constexpr (std::is_same_v<T, PolicyValueSpec>) {
                j["pi"] = matrix_json(spec.pi.probs);
            } else if constexpr (std::is_same_v<T, SoftmaxValueSpec>) {
                j["tau_star"] = spec.tau_star;
                j["action_set"] = spec.action_set;
            } else {
                j["gamma_prime"] = spec.gamma_prime;
                j["pi"] = matrix_json(spec.pi.probs);
                j["nu"] = matrix_json(spec.nu.probs);
            }
        },
        estimand);
    return j;
}

std::pair<int, int> estimand_dims(const EstimandSpec& estimand,
                                  std::optional<std::pair<int, int>> softmax_dims) {
    if (const auto* pv = std::get_if<PolicyValueSpec>(&estimand))
        return {static_cast<int>(pv->pi.probs.cols()), static_cast<int>(pv->pi.probs.rows())};
    if (const auto* npv = std::get_if<NormalizedPolicyValueSpec>(&estimand))
        return {static_cast<int>(npv->pi.probs.cols()), static_cast<int>(npv->pi.probs.rows())};
    detail::require(softmax_dims.has_value(),
                    "softmax_value requires explicit n_states/n_actions");
    return *softmax_dims;
}

// ---------------------------------------------------------------------------
// Config / report JSON
// ---------------------------------------------------------------------------

EstimatorConfig estimator_config_from_json(const nlohmann::json& j) {
    EstimatorConfig c;
    if (j.contains("K")) c.K = j["K"].get<int>();
    if (j.contains("level")) c.level = j["level"].get<Real>();
    if (j.contains("smoothing_lambda")) c.smoothing_lambda = j["smoothing_lambda"].get<Real>();
    if (j.contains("smoothing_alpha")) c.smoothing_alpha = j["smoothing_alpha"].get<Real>();
    if (j.contains("fqi_tol")) c.fqi_tol = j["fqi_tol"].get<Real>();
    if (j.contains("fqi_iters")) c.fqi_iters = j["fqi_iters"].get<long>();
    if (j.contains("occupancy_mode")) {
        const std::string mode = j["occupancy_mode"].get<std::string>();
        if (mode == "plugin")
            c.occupancy_mode = OccupancyMode::plugin;
        else if (mode == "quadratic_loss")
            c.occupancy_mode = OccupancyMode::quadratic_loss;
        else
            throw ValidationError("occupancy_mode must be \"plugin\" or \"quadratic_loss\"");
    }
    if (j.contains("ratio_cap") && !j["ratio_cap"].is_null())
        c.ratio_cap = j["ratio_cap"].get<Real>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("n_states")) c.n_states = j["n_states"].get<int>();
    if (j.contains("n_actions")) c.n_actions = j["n_actions"].get<int>();
    return c;
}

nlohmann::json estimator_config_to_json(const EstimatorConfig& c) {
    nlohmann::json j;
    j["K"] = c.K;
    j["level"] = c.level;
    j["smoothing_lambda"] = c.smoothing_lambda;
    j["smoothing_alpha"] = c.smoothing_alpha;
    j["fqi_tol"] = c.fqi_tol;
    j["fqi_iters"] = c.fqi_iters;
    j["occupancy_mode"] =
        c.occupancy_mode == OccupancyMode::plugin ? "plugin" : "quadratic_loss";
    j["ratio_cap"] = c.ratio_cap ? nlohmann::json(*c.ratio_cap) : nlohmann::json(nullptr);
    j["seed"] = c.seed;
    return j;
}

nlohmann::json report_to_json(const EstimateReport& r) {
    nlohmann::json j;
    j["psi_hat"] = r.psi_hat;
    j["std_error"] = r.std_error;
    j["ci_low"] = r.ci_low;
    j["ci_high"] = r.ci_high;
    j["level"] = r.level;
    j["n"] = r.n;
    j["plugin_psi"] = r.plugin_psi;
    nlohmann::json folds = nlohmann::json::array();
    for (const FoldSummary& f : r.per_fold)
        folds.push_back({{"fold_id", f.fold_id}, {"psi_fold", f.psi_fold}, {"n_fold", f.n_fold}});
    j["per_fold"] = std::move(folds);
    j["diagnostics"] = r.diagnostics;
    return j;
}

// ---------------------------------------------------------------------------
// Nuisance assembly (the per-estimand recipes)
// ---------------------------------------------------------------------------

NuisanceSet fit_nuisances(const EstimandSpec& estimand, const TransitionDataset& train,
                          const EstimatorConfig& config, int fold_id) {
    const auto [S, A] = estimand_dims(
        estimand, config.n_states > 0 ? std::optional(std::pair{config.n_states, config.n_actions})
                                      : std::nullopt);
    const CellStats stats = tabulate(train, S, A);
    NuisanceSet nuis;
    nuis.fold_id = fold_id;
    std::tie(nuis.pi_n, nuis.r_n) = fit_behavior_policy(stats, config.smoothing_lambda);
    nuis.k_n = fit_kernel(stats, config.smoothing_alpha);
    nuis.rho0_hat = fit_initial_state(stats, config.smoothing_lambda);
    const FqiOptions fqi{config.fqi_iters, config.fqi_tol};

    if (const auto* pv = std::get_if<PolicyValueSpec>(&estimand)) {
        FittedQ q;
        q.table = fitted_q_iteration(stats, nuis.r_n, pv->pi, pv->gamma, fqi, nuis.k_n,
                                     &q.achieved_change);
        q.policy_tag = "pi";
        q.reward_tag = "r_n";
        q.gamma = pv->gamma;
        nuis.state_tables["V_pi_gamma"] = policy_average(pv->pi.probs, q.table.values);
        nuis.q_tables["q_pi_gamma"] = std::move(q);
        nuis.occupancy["pi_gamma"] = fit_occupancy_ratio(stats, nuis.k_n, nuis.pi_n,
                                                         nuis.rho0_hat, pv->pi, pv->gamma,
                                                         config.occupancy_mode);
        return nuis;
    }

    if (const auto* sv = std::get_if<SoftmaxValueSpec>(&estimand)) {
        FittedQ vstar;
        vstar.table = soft_q_iteration(stats, nuis.r_n, sv->tau_star, sv->action_set, sv->gamma,
                                       fqi, nuis.k_n, &vstar.achieved_change);
        vstar.policy_tag = "pi_star_softmax";
        vstar.reward_tag = "r_n";
        vstar.gamma = sv->gamma;

        const Matrix logits = nuis.r_n.values + sv->gamma * vstar.table.values;
        PolicyTable pi_star = softmax_policy(logits, sv->tau_star, sv->action_set);

        FittedQ qstar;
        qstar.table = fitted_q_iteration(stats, nuis.r_n, pi_star, sv->gamma, fqi, nuis.k_n,
                                         &qstar.achieved_change);
        qstar.policy_tag = "pi_star";
        qstar.reward_tag = "r_n";
        qstar.gamma = sv->gamma;

        nuis.state_tables["V_star"] = policy_average(pi_star.probs, qstar.table.values);
        Vector V_soft(S);
        for (int s = 0; s < S; ++s)
            V_soft(s) = sv->tau_star * logsumexp(Vector(logits.col(s) / sv->tau_star),
                                                 sv->action_set);
        nuis.state_tables["V_soft_star"] = std::move(V_soft);

        nuis.occupancy["star"] = fit_occupancy_ratio(stats, nuis.k_n, nuis.pi_n, nuis.rho0_hat,
                                                     pi_star, sv->gamma, config.occupancy_mode);

        // Advantage-weighted ratio: empirical average of the conditional
        // occupancy against the advantage-weighted occupancy measure.
        const Kernel rho_cond =
            conditional_occupancy(nuis.k_n, nuis.rho0_hat, pi_star, sv->gamma);
        const OccupancyFit& star = nuis.occupancy.at("star");
        const Vector& V_star = nuis.state_tables.at("V_star");
        Vector rho_tilde = Vector::Zero(S);
        for (const Transition& t : train.records) {
            const Real w = star.d(t.a, t.s) * (qstar.table.values(t.a, t.s) - V_star(t.s));
            rho_tilde += w * rho_cond[static_cast<std::size_t>(t.a)].row(t.s).transpose();
        }
        rho_tilde /= static_cast<Real>(train.n);
        nuis.state_tables["rho_tilde_star"] = std::move(rho_tilde);

        nuis.q_tables["v_star"] = std::move(vstar);
        nuis.q_tables["q_star"] = std::move(qstar);
        nuis.policies["pi_star"] = std::move(pi_star);
        return nuis;
    }

    const auto& npv = std::get<NormalizedPolicyValueSpec>(estimand);
    FittedQ qnu;
    qnu.table = fitted_q_iteration(stats, nuis.r_n, npv.nu, npv.gamma, fqi, nuis.k_n,
                                   &qnu.achieved_change);
    qnu.policy_tag = "nu";
    qnu.reward_tag = "r_n";
    qnu.gamma = npv.gamma;
    const Vector V_nu = policy_average(npv.nu.probs, qnu.table.values);
    const Matrix r_nu = qnu.table.values.rowwise() - V_nu.transpose();

    FittedQ qpi;
    qpi.table = fitted_q_iteration(stats, RewardTable{r_nu}, npv.pi, npv.gamma_prime, fqi,
                                   nuis.k_n, &qpi.achieved_change);
    qpi.policy_tag = "pi";
    qpi.reward_tag = "r_nu";
    qpi.gamma = npv.gamma_prime;
    nuis.state_tables["V_pi_prime_nu"] = policy_average(npv.pi.probs, qpi.table.values);
    nuis.state_tables["V_nu_gamma"] = V_nu;
    nuis.aux_tables["r_nu"] = r_nu;

    nuis.occupancy["pi_gamma_prime"] =
        fit_occupancy_ratio(stats, nuis.k_n, nuis.pi_n, nuis.rho0_hat, npv.pi, npv.gamma_prime,
                            config.occupancy_mode);

    // nu-chain propagation ratio: g~ = gamma (I - gamma K_nu^T)^{-1}
    // (K_pi^T - K_nu^T)(rho0 . rho^{pi,gamma'}) / rho0.
    const Matrix K_pi = policy_chain(nuis.k_n, npv.pi.probs);
    const Matrix K_nu = policy_chain(nuis.k_n, npv.nu.probs);
    const Vector m_occ = nuis.rho0_hat.cwiseProduct(nuis.occupancy.at("pi_gamma_prime").rho);
    const Matrix I = Matrix::Identity(S, S);
    const Vector w_tilde = (I - npv.gamma * K_nu.transpose())
                               .partialPivLu()
                               .solve(npv.gamma * ((K_pi - K_nu).transpose() * m_occ));
    nuis.state_tables["g_tilde"] = w_tilde.cwiseQuotient(nuis.rho0_hat);

    nuis.q_tables["q_nu_gamma"] = std::move(qnu);
    nuis.q_tables["q_pi_prime_nu"] = std::move(qpi);
    return nuis;
}

// ---------------------------------------------------------------------------
// Influence contributions
// ---------------------------------------------------------------------------

Real m_component(const EstimandSpec& estimand, const Transition& record,
                 const NuisanceSet& nuis) {
    if (std::holds_alternative<PolicyValueSpec>(estimand))
        return nuis.state("V_pi_gamma")(record.s);
    if (std::holds_alternative<SoftmaxValueSpec>(estimand))
        return nuis.state("V_star")(record.s);
    return nuis.state("V_pi_prime_nu")(record.s);
}

namespace {

Real correction_component(const EstimandSpec& estimand, const Transition& t,
                          const NuisanceSet& nuis, const EstimatorConfig& config,
                          long* cap_hits) {
    const int s = t.s, a = t.a, sp = t.s_next;

    if (const auto* pv = std::get_if<PolicyValueSpec>(&estimand)) {
        const Matrix& q = nuis.q("q_pi_gamma").table.values;
        const Vector& V = nuis.state("V_pi_gamma");
        const Vector& rho = nuis.occ("pi_gamma").rho;
        const Real w = capped(pv->pi.probs(a, s) / nuis.pi_n.probs(a, s), config.ratio_cap,
                              cap_hits);
        const Real td = nuis.r_n.values(a, s) + pv->gamma * V(sp) - q(a, s);
        return rho(s) * w * td + rho(s) * (w - 1.0);
    }

    if (const auto* sv = std::get_if<SoftmaxValueSpec>(&estimand)) {
        const Matrix& q_star = nuis.q("q_star").table.values;
        const Matrix& v_star = nuis.q("v_star").table.values;
        const Vector& V_star = nuis.state("V_star");
        const Vector& V_soft = nuis.state("V_soft_star");
        const Vector& rho_star = nuis.occ("star").rho;
        const Vector& rho_tilde = nuis.state("rho_tilde_star");
        const Matrix& pi_star = nuis.policy("pi_star").probs;
        const Real tau = sv->tau_star;
        const Real w = capped(pi_star(a, s) / nuis.pi_n.probs(a, s), config.ratio_cap, cap_hits);
        const Real d_star = rho_star(s) * w;
        const Real advantage = d_star * (q_star(a, s) - V_star(s)) / tau;
        const Real td_q = nuis.r_n.values(a, s) + sv->gamma * V_star(sp) - q_star(a, s);
        const Real td_v = V_soft(sp) - v_star(a, s);
        return (rho_tilde(s) / tau + rho_star(s)) * (w - 1.0) +
               (sv->gamma / tau) * rho_tilde(s) * w * td_v + d_star * td_q +
               advantage * (1.0 + sv->gamma * td_v);
    }

    const auto& npv = std::get<NormalizedPolicyValueSpec>(estimand);
    const Matrix& q_nu = nuis.q("q_nu_gamma").table.values;
    const Vector& V_nu = nuis.state("V_nu_gamma");
    const Matrix& r_nu = nuis.aux("r_nu");
    const Matrix& q_pi = nuis.q("q_pi_prime_nu").table.values;
    const Vector& V_pi = nuis.state("V_pi_prime_nu");
    const Vector& rho = nuis.occ("pi_gamma_prime").rho;
    const Vector& g_tilde = nuis.state("g_tilde");
    const Real w = capped(npv.pi.probs(a, s) / nuis.pi_n.probs(a, s), config.ratio_cap, cap_hits);
    const Real u = capped(npv.nu.probs(a, s) / nuis.pi_n.probs(a, s), config.ratio_cap, cap_hits);
    const Real td_nu = nuis.r_n.values(a, s) + npv.gamma * V_nu(sp) - q_nu(a, s);
    const Real td_pi = r_nu(a, s) + npv.gamma_prime * V_pi(sp) - q_pi(a, s);
    return rho(s) * w * td_pi + rho(s) * (w - u) * td_nu + rho(s) * (w - u) +
           g_tilde(s) * (u - 1.0) + g_tilde(s) * u * td_nu;
}

}  // namespace

Real eif_contribution(const EstimandSpec& estimand, const Transition& record,
                      const NuisanceSet& nuis, const EstimatorConfig& config) {
    return m_component(estimand, record, nuis) +
           correction_component(estimand, record, nuis, config, nullptr);
}

Real one_step_combine(const std::vector<Real>& m_values,
                      const std::vector<Real>& correction_values) {
    detail::require(!m_values.empty() && m_values.size() == correction_values.size(),
                    "one_step_combine needs equal-length nonempty inputs");
    return mean_of(m_values) + mean_of(correction_values);
}

Real plugin_estimate(const EstimandSpec& estimand, const TransitionDataset& data,
                     const NuisanceSet& nuis) {
    detail::require(data.n >= 1, "plugin_estimate needs data");
    Real acc = 0.0;
    for (const Transition& t : data.records) acc += m_component(estimand, t, nuis);
    return acc / static_cast<Real>(data.n);
}

Interval confidence_interval(const std::vector<Real>& contributions, Real psi_hat, Real level) {
    detail::require(contributions.size() >= 2, "confidence_interval needs n >= 2");
    detail::require(level > 0.0 && level < 1.0, "level must lie in (0, 1)");
    Interval out;
    out.std_error = sample_sd(contributions) / std::sqrt(static_cast<Real>(contributions.size()));
    const Real z = normal_quantile(0.5 * (1.0 + level));
    out.low = psi_hat - z * out.std_error;
    out.high = psi_hat + z * out.std_error;
    return out;
}

// ---------------------------------------------------------------------------
// Cross-fitted estimator
// ---------------------------------------------------------------------------

namespace {

nlohmann::json nuisance_dump_json(const NuisanceSet& nuis) {
    nlohmann::json j;
    j["fold_id"] = nuis.fold_id;
    j["pi_n"] = matrix_json(nuis.pi_n.probs);
    j["r_n"] = matrix_json(nuis.r_n.values);
    j["k_n"] = kernel_json(nuis.k_n);
    j["rho0_hat"] = vector_json(nuis.rho0_hat);
    for (const auto& [name, q] : nuis.q_tables) {
        j["q_tables"][name] = matrix_json(q.table.values);
        j["q_tags"][name] = {{"policy", q.policy_tag},
                             {"reward", q.reward_tag},
                             {"gamma", q.gamma},
                             {"achieved_change", q.achieved_change}};
    }
    for (const auto& [name, m] : nuis.aux_tables) j["aux_tables"][name] = matrix_json(m);
    for (const auto& [name, v] : nuis.state_tables) j["state_tables"][name] = vector_json(v);
    for (const auto& [name, occ] : nuis.occupancy) {
        j["occupancy"][name] = {{"rho", vector_json(occ.rho)},
                                {"d", matrix_json(occ.d)},
                                {"quadratic_fell_back", occ.quadratic_fell_back}};
    }
    for (const auto& [name, pol] : nuis.policies) j["policies"][name] = matrix_json(pol.probs);
    return j;
}

}  // namespace

EstimateReport estimate(const EstimandSpec& estimand, const TransitionDataset& data,
                        const EstimatorConfig& config) {
    validate_estimand(estimand);
    detail::require(config.K >= 2, "estimate requires K >= 2");
    detail::require(data.n >= 2 * config.K, "estimate requires n >= 2K");

    const FoldPlan plan = cross_fit(data, config.K, config.seed);
    EstimateReport report;
    report.n = data.n;
    report.level = config.level;
    report.m_values.resize(static_cast<std::size_t>(data.n));
    report.correction_values.resize(static_cast<std::size_t>(data.n));
    report.contributions.resize(static_cast<std::size_t>(data.n));

    nlohmann::json fold_diag = nlohmann::json::array();
    nlohmann::json dumps = nlohmann::json::array();
    long cap_hits = 0;
    for (int fold = 0; fold < config.K; ++fold) {
        NuisanceSet nuis;
        try {
            const TransitionDataset train =
                subset_dataset(data, plan.complement_indices(fold));
            nuis = fit_nuisances(estimand, train, config, fold);
        } catch (const ValidationError& e) {
            throw ValidationError("fold " + std::to_string(fold) +
                                  " nuisance fitting failed: " + e.what());
        } catch (const SolverError& e) {
            throw SolverError("fold " + std::to_string(fold) +
                                  " nuisance fitting failed: " + e.what(),
                              e.residual, e.iterations);
        }

        const std::vector<int> eval_idx = plan.fold_indices(fold);
        Real fold_sum = 0.0;
        for (int i : eval_idx) {
            const Transition& t = data.records[static_cast<std::size_t>(i)];
            const Real m = m_component(estimand, t, nuis);
            const Real corr = correction_component(estimand, t, nuis, config, &cap_hits);
            report.m_values[static_cast<std::size_t>(i)] = m;
            report.correction_values[static_cast<std::size_t>(i)] = corr;
            report.contributions[static_cast<std::size_t>(i)] = m + corr;
            fold_sum += m + corr;
        }
        report.per_fold.push_back(
            {fold, fold_sum / static_cast<Real>(eval_idx.size()),
             static_cast<int>(eval_idx.size())});

        nlohmann::json fd;
        fd["fold_id"] = fold;
        for (const auto& [name, q] : nuis.q_tables)
            fd["fqi_change"][name] = q.achieved_change;
        for (const auto& [name, occ] : nuis.occupancy)
            fd["occupancy_fallback"][name] = occ.quadratic_fell_back;
        if (auto it = nuis.state_tables.find("rho_tilde_star"); it != nuis.state_tables.end()) {
            // The advantage-weighted ratio may be negative; its range is
            // surfaced rather than stabilized.
            fd["rho_tilde_star_range"] = {it->second.minCoeff(), it->second.maxCoeff()};
        }
        fold_diag.push_back(std::move(fd));
        if (!config.dump_nuisances_path.empty()) dumps.push_back(nuisance_dump_json(nuis));
    }

    report.psi_hat = one_step_combine(report.m_values, report.correction_values);
    report.plugin_psi = mean_of(report.m_values);
    const Interval ci = confidence_interval(report.contributions, report.psi_hat, config.level);
    report.std_error = ci.std_error;
    report.ci_low = ci.low;
    report.ci_high = ci.high;

    report.diagnostics["smoothing_lambda"] = config.smoothing_lambda;
    report.diagnostics["smoothing_alpha"] = config.smoothing_alpha;
    report.diagnostics["occupancy_mode"] =
        config.occupancy_mode == OccupancyMode::plugin ? "plugin" : "quadratic_loss";
    report.diagnostics["folds"] = std::move(fold_diag);
    if (config.ratio_cap) {
        report.diagnostics["ratio_cap"] = *config.ratio_cap;
        report.diagnostics["ratio_cap_hits"] = cap_hits;
    }
    if (!config.dump_nuisances_path.empty()) {
        std::ofstream out(config.dump_nuisances_path);
        if (!out) throw ValidationError("cannot write " + config.dump_nuisances_path);
        out << nlohmann::json{{"folds", dumps}}.dump(2) << '\n';
        report.diagnostics["nuisance_dump"] = config.dump_nuisances_path;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Riesz transform under reward normalization
// ---------------------------------------------------------------------------

RieszPair riesz_transform_for_normalization(
    const Matrix& alpha_tilde, std::function<Real(int, int, int)> beta_tilde_over_k,
    const NuisanceSet& nuis, const PolicyTable& nu, Real gamma) {
    const int S = static_cast<int>(alpha_tilde.cols());
    const Matrix& pi0 = nuis.pi_n.probs;
    const Vector& rho0 = nuis.rho0_hat;
    const Matrix& q_nu = nuis.q("q_nu_gamma").table.values;
    const Vector V_nu = policy_average(nu.probs, q_nu);

    const Vector pi0_alpha = policy_average(pi0, alpha_tilde);
    // u_g = (I - nu)^* (rho0 pi0 alpha~), then pushed through the kernel
    // and the nu-chain resolvent.
    Matrix u_g = pi0.cwiseProduct(alpha_tilde) -
                 (nu.probs.array().rowwise() * pi0_alpha.transpose().array()).matrix();
    u_g.array().rowwise() *= rho0.transpose().array();
    Vector e = Vector::Zero(S);
    for (std::size_t a = 0; a < nuis.k_n.size(); ++a)
        e += nuis.k_n[a].transpose() * u_g.row(static_cast<Eigen::Index>(a)).transpose();
    const Matrix K_nu = policy_chain(nuis.k_n, nu.probs);
    const Vector w_tilde = (Matrix::Identity(S, S) - gamma * K_nu.transpose())
                               .partialPivLu()
                               .solve(gamma * e);

    const Matrix ratio_nu = (nu.probs.array() / pi0.array()).matrix();
    Matrix alpha = alpha_tilde -
                   (ratio_nu.array().rowwise() * pi0_alpha.transpose().array()).matrix();
    alpha += (ratio_nu.array().rowwise() *
              w_tilde.cwiseQuotient(rho0).transpose().array()).matrix();

    RieszPair out;
    const Vector pi0_alpha_full = policy_average(pi0, alpha);
    out.alpha_centered = alpha.rowwise() - pi0_alpha_full.transpose();
    out.beta_over_k = [alpha, beta_tilde_over_k = std::move(beta_tilde_over_k),
                       r0 = nuis.r_n.values, V_nu, q_nu, gamma](int s, int a, int sp) {
        return beta_tilde_over_k(s, a, sp) +
               alpha(a, s) * (r0(a, s) + gamma * V_nu(sp) - q_nu(a, s));
    };
    return out;
}

}  // namespace dirl
