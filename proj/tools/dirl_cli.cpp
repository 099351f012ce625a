// Command-line front end: MDP generation, agent simulation, debiased
// estimation, oracle checks, and Monte Carlo studies.
#include "dirl/agent_sim.hpp"
#include "dirl/json_util.hpp"
#include "dirl/mdp_core.hpp"
#include "dirl/mdp_io.hpp"
#include "dirl/montecarlo.hpp"
#include "dirl/oracle.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;
constexpr int kExitPartialFailure = 4;

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw dirl::ValidationError("cannot open " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw dirl::ValidationError("cannot write " + path);
    out << j.dump(2) << '\n';
}

dirl::MdpFile load_world(const std::string& path) {
    dirl::MdpFile f = dirl::load_mdp_json(path);
    if (!f.reward)
        throw dirl::ValidationError(path + " carries no reward table; one is required here");
    return f;
}

int run(int argc, char** argv) {
    CLI::App app{"Debiased inference for reward-dependent functionals in softmax IRL"};
    app.require_subcommand(1);

    // gen-mdp
    auto* gen = app.add_subcommand("gen-mdp", "Emit a random positivity-compliant MDP");
    int gen_states = 5, gen_actions = 3;
    double gen_gamma = 0.9, gen_floor = 0.05, gen_scale = 1.0;
    std::uint64_t gen_seed = 0;
    std::string gen_out = "mdp.json";
    gen->add_option("--n-states", gen_states);
    gen->add_option("--n-actions", gen_actions);
    gen->add_option("--gamma", gen_gamma);
    gen->add_option("--floor", gen_floor, "positivity floor for kernel rows and rho0");
    gen->add_option("--reward-scale", gen_scale);
    gen->add_option("--seed", gen_seed);
    gen->add_option("--out", gen_out);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Sample transitions from the soft-optimal agent");
    std::string sim_mdp, sim_out = "dataset.csv";
    long sim_n = 1000;
    std::uint64_t sim_seed = 0;
    sim->add_option("--mdp", sim_mdp)->required();
    sim->add_option("--n", sim_n);
    sim->add_option("--seed", sim_seed);
    sim->add_option("--out", sim_out);

    // estimate
    auto* est = app.add_subcommand("estimate", "Cross-fitted one-step estimate from a dataset");
    std::string est_data, est_estimand, est_config, est_out, est_dump;
    std::uint64_t est_seed = 0;
    bool est_seed_set = false;
    est->add_option("--data", est_data)->required();
    est->add_option("--estimand", est_estimand, "estimand JSON file")->required();
    est->add_option("--config", est_config, "estimator config JSON file");
    est->add_option("--out", est_out, "report JSON path");
    est->add_option("--dump-nuisances", est_dump);
    est->add_option("--seed", est_seed)->each([&](const std::string&) { est_seed_set = true; });

    // oracle-check
    auto* ora = app.add_subcommand("oracle-check",
                                   "Exact identification and influence-function report");
    std::string ora_mdp, ora_estimand, ora_out;
    ora->add_option("--mdp", ora_mdp)->required();
    ora->add_option("--estimand", ora_estimand, "estimand JSON file (optional)");
    ora->add_option("--out", ora_out);

    // montecarlo
    auto* mc = app.add_subcommand("montecarlo", "Coverage/RMSE study over a sample-size grid");
    std::string mc_config, mc_out;
    int mc_jobs = 0;
    mc->add_option("--config", mc_config)->required();
    mc->add_option("--out", mc_out, "output directory (overrides config)");
    mc->add_option("--jobs", mc_jobs);

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        const auto world = dirl::random_mdp(gen_states, gen_actions, gen_gamma, gen_seed,
                                            gen_floor, gen_scale);
        dirl::save_mdp_json(gen_out, world.mdp, &world.reward);
        std::cout << "wrote " << gen_out << "\n";
        return 0;
    }

    if (sim->parsed()) {
        const dirl::MdpFile f = load_world(sim_mdp);
        const auto data = dirl::sample_transitions(f.mdp, *f.reward, sim_n, sim_seed);
        dirl::save_dataset_csv(sim_out, data);
        std::cout << "wrote " << sim_out << " (+ sidecar)\n";
        return 0;
    }

    if (est->parsed()) {
        const auto data = dirl::load_dataset_csv(est_data);
        const auto estimand = dirl::estimand_from_json(read_json_file(est_estimand));
        dirl::EstimatorConfig config;
        if (!est_config.empty()) config = dirl::estimator_config_from_json(read_json_file(est_config));
        if (est_seed_set) config.seed = est_seed;
        if (!est_dump.empty()) config.dump_nuisances_path = est_dump;
        if (config.n_states == 0) {
            const auto j = read_json_file(est_estimand);
            if (j.contains("n_states")) config.n_states = j["n_states"].get<int>();
            if (j.contains("n_actions")) config.n_actions = j["n_actions"].get<int>();
        }
        const auto report = dirl::estimate(estimand, data, config);
        const auto j = dirl::report_to_json(report);
        if (!est_out.empty())
            write_json_file(est_out, j);
        else
            std::cout << j.dump(2) << '\n';
        return 0;
    }

    if (ora->parsed()) {
        const dirl::MdpFile f = load_world(ora_mdp);
        const dirl::PolicyTable nu = dirl::point_mass_policy(f.mdp.n_states, f.mdp.n_actions, 0);
        const std::vector<dirl::PolicyTable> policies = {
            dirl::uniform_policy(f.mdp.n_states, f.mdp.n_actions),
            dirl::point_mass_policy(f.mdp.n_states, f.mdp.n_actions,
                                    f.mdp.n_actions - 1)};
        const auto ident =
            dirl::check_identification(f.mdp, *f.reward, nu, policies, f.mdp.gamma);
        nlohmann::json out;
        out["identification"] = ident.to_json();
        if (!ora_estimand.empty()) {
            const auto estimand = dirl::estimand_from_json(read_json_file(ora_estimand));
            const auto truth = dirl::true_eif_and_bound(estimand, f.mdp, *f.reward);
            out["psi0"] = truth.psi0;
            out["sigma0_sq"] = truth.sigma0_sq;
            out["chi"] = dirl::kernel_json(truth.chi);
            const auto world = dirl::solve_world(f.mdp, *f.reward);
            nlohmann::json probes = nlohmann::json::array();
            for (std::uint64_t i = 0; i < 5; ++i) {
                const auto phi = dirl::random_score_direction(f.mdp, world.pi0, 1000 + i);
                const auto probe =
                    dirl::pathwise_probe(estimand, f.mdp, *f.reward, phi, 1e-4, truth);
                probes.push_back({{"derivative", probe.derivative},
                                  {"inner_product", probe.inner_product},
                                  {"rel_error", probe.rel_error}});
            }
            out["pathwise_probes"] = std::move(probes);
        }
        if (!ora_out.empty())
            write_json_file(ora_out, out);
        else
            std::cout << out.dump(2) << '\n';
        return 0;
    }

    // montecarlo
    auto config = dirl::experiment_config_from_json(read_json_file(mc_config));
    if (!mc_out.empty()) config.output_dir = mc_out;
    if (mc_jobs > 0) config.jobs = mc_jobs;
    const dirl::MdpFile f = load_world(config.mdp_path);
    const auto summary = dirl::run_montecarlo(config, f.mdp, *f.reward);
    std::cout << dirl::summary_to_json(summary).dump(2) << '\n';
    if (summary.total_failures > config.max_failures) return kExitPartialFailure;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const dirl::SolverError& e) {
        std::cerr << "solver failure: " << e.what() << '\n';
        return kExitSolver;
    } catch (const dirl::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
