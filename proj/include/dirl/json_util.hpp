#pragma once

#include "dirl/types.hpp"

#include <json.hpp>

namespace dirl {

inline nlohmann::json matrix_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int a = 0; a < m.rows(); ++a) {
        nlohmann::json row = nlohmann::json::array();
        for (int s = 0; s < m.cols(); ++s) row.push_back(m(a, s));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from(const nlohmann::json& j, const std::string& what) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw ValidationError(what + " must be a 2-d array");
    Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
    for (std::size_t a = 0; a < j.size(); ++a) {
        if (j[a].size() != j[0].size()) throw ValidationError(what + " is ragged");
        for (std::size_t s = 0; s < j[a].size(); ++s)
            m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s)) = j[a][s].get<Real>();
    }
    return m;
}

inline nlohmann::json vector_json(const Vector& v) {
    nlohmann::json out = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline nlohmann::json kernel_json(const Kernel& k) {
    nlohmann::json out = nlohmann::json::array();
    for (const Matrix& slice : k) out.push_back(matrix_json(slice));
    return out;
}

}  // namespace dirl
