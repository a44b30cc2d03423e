#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "poisimex/errors.hpp"
#include "poisimex/study.hpp"

namespace poisimex {

namespace detail {

using json = nlohmann::json;

inline void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                                const std::string& where) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw InvalidParameter("unknown key '" + item.key() + "' in " + where);
        }
    }
}

inline const json& require_key(const json& obj, const char* key, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw InvalidParameter("missing key '" + std::string(key) + "' in " + where);
    return *it;
}

inline double json_number(const json& v, const std::string& where) {
    if (!v.is_number()) throw InvalidParameter(where + " must be a number");
    return v.get<double>();
}

inline std::uint64_t json_uint(const json& v, const std::string& where) {
    if (!v.is_number_unsigned()) throw InvalidParameter(where + " must be a non-negative integer");
    return v.get<std::uint64_t>();
}

inline CoefficientVector parse_beta(const json& obj) {
    if (!obj.is_object()) throw InvalidParameter("generation.beta must be an object");
    reject_unknown_keys(obj, {"intercept", "beta_x", "beta_z"}, "generation.beta");
    CoefficientVector beta;
    beta.intercept = json_number(require_key(obj, "intercept", "generation.beta"),
                                 "generation.beta.intercept");
    beta.beta_x = json_number(require_key(obj, "beta_x", "generation.beta"),
                              "generation.beta.beta_x");
    if (obj.contains("beta_z")) {
        const json& bz = obj["beta_z"];
        if (!bz.is_array()) throw InvalidParameter("generation.beta.beta_z must be an array");
        for (const auto& v : bz) beta.beta_z.push_back(json_number(v, "generation.beta.beta_z[]"));
    }
    return beta;
}

inline GenerationConfig parse_generation(const json& obj) {
    if (!obj.is_object()) throw InvalidParameter("generation must be an object");
    reject_unknown_keys(
        obj, {"n", "beta", "sigma_eps", "x_shape", "x_scale", "z_low", "z_high", "area"},
        "generation");
    GenerationConfig g;
    g.beta = parse_beta(require_key(obj, "beta", "generation"));
    g.sigma_eps = json_number(require_key(obj, "sigma_eps", "generation"), "generation.sigma_eps");
    g.x_shape = json_number(require_key(obj, "x_shape", "generation"), "generation.x_shape");
    g.x_scale = json_number(require_key(obj, "x_scale", "generation"), "generation.x_scale");
    if (obj.contains("n")) g.n = json_uint(obj["n"], "generation.n"); // overridden per cell
    if (obj.contains("z_low")) g.z_low = json_number(obj["z_low"], "generation.z_low");
    if (obj.contains("z_high")) g.z_high = json_number(obj["z_high"], "generation.z_high");
    if (obj.contains("area")) {
        const json& a = obj["area"];
        if (a.is_number()) {
            g.area = {a.get<double>()};
        } else if (a.is_array()) {
            g.area.clear();
            for (const auto& v : a) g.area.push_back(json_number(v, "generation.area[]"));
        } else {
            throw InvalidParameter("generation.area must be a number or an array");
        }
    }
    return g;
}

inline SimexConfig parse_simex(const json& obj) {
    if (!obj.is_object()) throw InvalidParameter("simex must be an object");
    reject_unknown_keys(obj,
                        {"lambda_grid", "b_reps", "extrapolant", "variance_mode", "seed_path",
                         "perturb_scale", "keep_raw"},
                        "simex");
    SimexConfig sc;
    if (obj.contains("lambda_grid")) {
        const json& grid = obj["lambda_grid"];
        if (!grid.is_array()) throw InvalidParameter("simex.lambda_grid must be an array");
        sc.lambda_grid.clear();
        for (const auto& v : grid) sc.lambda_grid.push_back(json_number(v, "simex.lambda_grid[]"));
    }
    if (obj.contains("b_reps")) {
        sc.b_reps = static_cast<std::size_t>(json_uint(obj["b_reps"], "simex.b_reps"));
    }
    if (obj.contains("extrapolant")) {
        if (!obj["extrapolant"].is_string()) {
            throw InvalidParameter("simex.extrapolant must be a string");
        }
        sc.extrapolant = parse_extrapolant(obj["extrapolant"].get<std::string>());
    }
    if (obj.contains("variance_mode")) {
        const json& vm = obj["variance_mode"];
        if (vm.is_string() && vm.get<std::string>() == "estimated") {
            sc.variance_mode = VarianceMode::estimated();
        } else if (vm.is_object()) {
            reject_unknown_keys(vm, {"known"}, "simex.variance_mode");
            sc.variance_mode = VarianceMode::known(
                json_number(require_key(vm, "known", "simex.variance_mode"),
                            "simex.variance_mode.known"));
        } else {
            throw InvalidParameter(
                "simex.variance_mode must be \"estimated\" or {\"known\": <value>}");
        }
    }
    if (obj.contains("seed_path")) {
        const json& sp = obj["seed_path"];
        if (!sp.is_array()) throw InvalidParameter("simex.seed_path must be an array");
        for (const auto& v : sp) sc.seed_path.push_back(json_uint(v, "simex.seed_path[]"));
    }
    if (obj.contains("perturb_scale")) {
        if (!obj["perturb_scale"].is_string()) {
            throw InvalidParameter("simex.perturb_scale must be a string");
        }
        const std::string s = obj["perturb_scale"].get<std::string>();
        if (s == "density") {
            sc.perturb_scale = PerturbScale::density;
        } else if (s == "count") {
            sc.perturb_scale = PerturbScale::count;
        } else {
            throw InvalidParameter("simex.perturb_scale must be \"density\" or \"count\"");
        }
    }
    if (obj.contains("keep_raw")) {
        if (!obj["keep_raw"].is_boolean()) throw InvalidParameter("simex.keep_raw must be a bool");
        sc.keep_raw = obj["keep_raw"].get<bool>();
    }
    return sc;
}

} // namespace detail

/// Parses a study configuration. Keys mirror the StudyConfig fields in
/// lower_snake_case; unknown keys are rejected so grid typos cannot pass
/// silently.
inline StudyConfig parse_study_config(const std::string& text) {
    detail::json root;
    try {
        root = detail::json::parse(text);
    } catch (const detail::json::parse_error& e) {
        throw InvalidParameter(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw InvalidParameter("config root must be a JSON object");
    detail::reject_unknown_keys(root,
                                {"generation", "sample_sizes", "replicates", "simex", "estimators",
                                 "base_seed", "output_dir"},
                                "config");
    StudyConfig cfg;
    cfg.generation = detail::parse_generation(detail::require_key(root, "generation", "config"));
    const detail::json& sizes = detail::require_key(root, "sample_sizes", "config");
    if (!sizes.is_array()) throw InvalidParameter("sample_sizes must be an array");
    for (const auto& v : sizes) {
        cfg.sample_sizes.push_back(
            static_cast<std::size_t>(detail::json_uint(v, "sample_sizes[]")));
    }
    cfg.replicates = static_cast<std::size_t>(
        detail::json_uint(detail::require_key(root, "replicates", "config"), "replicates"));
    cfg.base_seed = detail::json_uint(detail::require_key(root, "base_seed", "config"), "base_seed");
    const detail::json& est = detail::require_key(root, "estimators", "config");
    if (!est.is_array()) throw InvalidParameter("estimators must be an array");
    for (const auto& v : est) {
        if (!v.is_string()) throw InvalidParameter("estimators[] must be strings");
        cfg.estimators.push_back(parse_estimator(v.get<std::string>()));
    }
    if (root.contains("simex")) cfg.simex = detail::parse_simex(root["simex"]);
    if (root.contains("output_dir")) {
        if (!root["output_dir"].is_string()) throw InvalidParameter("output_dir must be a string");
        cfg.output_dir = root["output_dir"].get<std::string>();
    }
    return cfg;
}

inline StudyConfig load_study_config(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read config file '" + path + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_study_config(buf.str());
}

} // namespace poisimex
