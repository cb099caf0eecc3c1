#pragma once

// Instance file format (JSON):
//   { "num_types": k, "num_facilities": l, "lambda": [l1..lk], "loss_penalty": K,
//     "costs": [[r11..r1l], ...], "feasible": [[...], ...] (optional),
//     "kernels": { "a,j": [[p00,p01],[p10,p11]], ... },
//     "labels": { "types": [...], "facilities": [...] } (optional) }
// lambda_0, r[.][0] and P[a][0] are implicit.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <json.hpp>

#include "snfmdp/model.hpp"

namespace snfmdp {

using nlohmann::json;

namespace detail {

inline const json& require_field(const json& j, const char* name) {
    if (!j.contains(name)) throw InputError(std::string("instance: missing field \"") + name + "\"");
    return j.at(name);
}

template <class T>
T field_as(const json& value, const std::string& where) {
    try {
        return value.get<T>();
    } catch (const json::exception& e) {
        throw InputError("instance: field " + where + ": " + e.what());
    }
}

inline Mat2 parse_mat2(const json& value, const std::string& where) {
    if (!value.is_array() || value.size() != 2 || !value[0].is_array() || !value[1].is_array() ||
        value[0].size() != 2 || value[1].size() != 2)
        throw InputError("instance: field " + where + ": expected a 2x2 matrix");
    Mat2 m{};
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t t = 0; t < 2; ++t) m[s][t] = field_as<double>(value[s][t], where);
    return m;
}

inline std::pair<int, int> parse_kernel_key(const std::string& key) {
    const auto comma = key.find(',');
    if (comma == std::string::npos) throw InputError("instance: kernels key \"" + key + "\" is not of the form \"a,j\"");
    try {
        std::size_t used_a = 0;
        std::size_t used_j = 0;
        const std::string a_str = key.substr(0, comma);
        const std::string j_str = key.substr(comma + 1);
        const int a = std::stoi(a_str, &used_a);
        const int j = std::stoi(j_str, &used_j);
        if (used_a != a_str.size() || used_j != j_str.size()) throw std::invalid_argument(key);
        return {a, j};
    } catch (const std::logic_error&) {
        throw InputError("instance: kernels key \"" + key + "\" is not of the form \"a,j\"");
    }
}

}  // namespace detail

inline Instance instance_from_json(const json& j) {
    if (!j.is_object()) throw InputError("instance: top level must be a JSON object");
    InstanceData d;
    d.num_types = detail::field_as<int>(detail::require_field(j, "num_types"), "num_types");
    d.num_facilities = detail::field_as<int>(detail::require_field(j, "num_facilities"), "num_facilities");
    d.lambda = detail::field_as<std::vector<double>>(detail::require_field(j, "lambda"), "lambda");
    d.loss_penalty = detail::field_as<double>(detail::require_field(j, "loss_penalty"), "loss_penalty");
    d.costs = detail::field_as<std::vector<std::vector<double>>>(detail::require_field(j, "costs"), "costs");
    if (j.contains("feasible")) d.feasible = detail::field_as<std::vector<std::vector<int>>>(j.at("feasible"), "feasible");
    const json& kernels = detail::require_field(j, "kernels");
    if (!kernels.is_object()) throw InputError("instance: field kernels: expected an object keyed by \"a,j\"");
    for (const auto& [key, value] : kernels.items())
        d.kernels[detail::parse_kernel_key(key)] = detail::parse_mat2(value, "kernels[\"" + key + "\"]");
    if (j.contains("labels")) {
        const json& labels = j.at("labels");
        if (labels.contains("types"))
            d.type_labels = detail::field_as<std::vector<std::string>>(labels.at("types"), "labels.types");
        if (labels.contains("facilities"))
            d.facility_labels = detail::field_as<std::vector<std::string>>(labels.at("facilities"), "labels.facilities");
    }
    return Instance(std::move(d));
}

inline json instance_to_json(const Instance& inst) {
    const InstanceData& d = inst.data();
    json j;
    j["num_types"] = d.num_types;
    j["num_facilities"] = d.num_facilities;
    j["lambda"] = d.lambda;
    j["loss_penalty"] = d.loss_penalty;
    j["costs"] = d.costs;
    if (!d.feasible.empty()) j["feasible"] = d.feasible;
    json kernels = json::object();
    for (const auto& [key, m] : d.kernels)
        kernels[std::to_string(key.first) + "," + std::to_string(key.second)] =
            json::array({json::array({m[0][0], m[0][1]}), json::array({m[1][0], m[1][1]})});
    j["kernels"] = kernels;
    if (!d.type_labels.empty() || !d.facility_labels.empty()) {
        json labels = json::object();
        if (!d.type_labels.empty()) labels["types"] = d.type_labels;
        if (!d.facility_labels.empty()) labels["facilities"] = d.facility_labels;
        j["labels"] = labels;
    }
    return j;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
}

inline Instance load_instance(const std::string& path) {
    try {
        return instance_from_json(read_json_file(path));
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

/// FNV-1a over the canonical JSON dump; identifies a loaded instance.
inline std::string instance_hash(const Instance& inst) {
    const std::string text = instance_to_json(inst).dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

}  // namespace snfmdp
