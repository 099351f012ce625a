#include "dirl/mdp_io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace dirl {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (int a = 0; a < m.rows(); ++a) {
        json row = json::array();
        for (int s = 0; s < m.cols(); ++s) row.push_back(m(a, s));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw ValidationError(what + " must be a 2-d array");
    const auto rows = j.size();
    const auto cols = j[0].size();
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t a = 0; a < rows; ++a) {
        if (j[a].size() != cols) throw ValidationError(what + " is ragged");
        for (std::size_t s = 0; s < cols; ++s)
            m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s)) = j[a][s].get<Real>();
    }
    return m;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    json j;
    in >> j;
    return j;
}

}  // namespace

MdpFile load_mdp_json(const std::string& path) {
    const json j = read_json_file(path);
    MdpFile out;
    out.mdp.n_states = j.at("n_states").get<int>();
    out.mdp.n_actions = j.at("n_actions").get<int>();
    out.mdp.gamma = j.at("gamma").get<Real>();

    const json& k = j.at("kernel");
    if (!k.is_array() || static_cast<int>(k.size()) != out.mdp.n_actions)
        throw ValidationError("kernel must have n_actions slices");
    out.mdp.kernel.resize(static_cast<std::size_t>(out.mdp.n_actions));
    for (int a = 0; a < out.mdp.n_actions; ++a)
        out.mdp.kernel[static_cast<std::size_t>(a)] =
            matrix_from_json(k[static_cast<std::size_t>(a)], "kernel slice");

    const json& r0 = j.at("rho0");
    out.mdp.rho0.resize(static_cast<Eigen::Index>(r0.size()));
    for (std::size_t s = 0; s < r0.size(); ++s)
        out.mdp.rho0(static_cast<Eigen::Index>(s)) = r0[s].get<Real>();

    out.mdp.validate();
    if (j.contains("reward")) {
        RewardTable r{matrix_from_json(j["reward"], "reward")};
        detail::require_table_dims(r.values, out.mdp.n_actions, out.mdp.n_states, "reward");
        out.reward = std::move(r);
    }
    return out;
}

void save_mdp_json(const std::string& path, const TabularMDP& mdp, const RewardTable* reward) {
    json j;
    j["n_states"] = mdp.n_states;
    j["n_actions"] = mdp.n_actions;
    j["gamma"] = mdp.gamma;
    json kernel = json::array();
    for (const Matrix& slice : mdp.kernel) kernel.push_back(matrix_to_json(slice));
    j["kernel"] = std::move(kernel);
    json rho0 = json::array();
    for (int s = 0; s < mdp.n_states; ++s) rho0.push_back(mdp.rho0(s));
    j["rho0"] = std::move(rho0);
    if (reward) j["reward"] = matrix_to_json(reward->values);

    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << j.dump(2) << '\n';
}

void save_dataset_csv(const std::string& csv_path, const TransitionDataset& data) {
    std::ofstream out(csv_path);
    if (!out) throw ValidationError("cannot write " + csv_path);
    out << "s,a,s_next\n";
    for (const Transition& t : data.records)
        out << t.s << ',' << t.a << ',' << t.s_next << '\n';

    json meta;
    meta["n"] = data.n;
    meta["seed"] = data.seed;
    meta["mdp_fingerprint"] = fingerprint_hex(data.mdp_fingerprint);
    std::ofstream side(csv_path + ".json");
    if (!side) throw ValidationError("cannot write " + csv_path + ".json");
    side << meta.dump(2) << '\n';
}

TransitionDataset load_dataset_csv(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw ValidationError("cannot open " + csv_path);
    TransitionDataset data;
    std::string line;
    if (!std::getline(in, line) || line != "s,a,s_next")
        throw ValidationError(csv_path + " is missing the s,a,s_next header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Transition t{};
        char c1 = 0, c2 = 0;
        std::istringstream row(line);
        if (!(row >> t.s >> c1 >> t.a >> c2 >> t.s_next) || c1 != ',' || c2 != ',')
            throw ValidationError("bad dataset row: " + line);
        data.records.push_back(t);
    }
    data.n = static_cast<long>(data.records.size());

    std::ifstream side(csv_path + ".json");
    if (side) {
        json meta;
        side >> meta;
        if (meta.contains("seed")) data.seed = meta["seed"].get<std::uint64_t>();
        if (meta.contains("mdp_fingerprint"))
            data.mdp_fingerprint = parse_fingerprint_hex(meta["mdp_fingerprint"].get<std::string>());
        if (meta.contains("n") && meta["n"].get<long>() != data.n)
            throw ValidationError("sidecar n disagrees with the CSV row count");
    }
    return data;
}

std::string fingerprint_hex(std::uint64_t fp) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
    return std::string(buf);
}

std::uint64_t parse_fingerprint_hex(const std::string& hex) {
    return std::stoull(hex, nullptr, 16);
}

MdpFile ring2_fixture() {
    MdpFile f;
    f.mdp.n_states = 2;
    f.mdp.n_actions = 2;
    f.mdp.gamma = 0.9;
    f.mdp.rho0 = Vector::Constant(2, 0.5);
    Matrix stay(2, 2), swap(2, 2);
    stay << 0.9, 0.1,
            0.1, 0.9;
    swap << 0.1, 0.9,
            0.9, 0.1;
    f.mdp.kernel = {stay, swap};
    RewardTable r;
    r.values.resize(2, 2);
    r.values << 1.0, 0.0,
                0.0, 1.0;
    f.reward = r;
    return f;
}

MdpFile ring2n_fixture() {
    MdpFile f = ring2_fixture();
    f.reward->values << 0.0, 0.0,
                        1.0, -0.5;
    return f;
}

}  // namespace dirl
