#pragma once

// Flat key/value configuration files:
//
//   # comment
//   surface = circle
//   gammas = 0.25, 0.75
//   reference_dt = 2^-14
//   coarse_levels = 4..7
//
// Numbers accept decimal notation or powers of two written `2^e`.
// Integer lists accept `a..b` ranges.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sfem/errors.hpp"
#include "sfem/harness.hpp"

namespace sfem {

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, sep)) {
        item = trim(item);
        if (!item.empty()) parts.push_back(item);
    }
    return parts;
}

}  // namespace detail

inline KeyValues parse_key_values(std::istream& in) {
    KeyValues kv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        if (kv.count(key)) throw ConfigError(key + ": specified more than once");
        kv[key] = value;
    }
    return kv;
}

inline KeyValues parse_key_values_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_key_values(in);
}

/// Parses a real number, accepting `2^e` for powers of two.
inline double parse_number(const std::string& field, const std::string& text) {
    const std::string t = detail::trim(text);
    char* end = nullptr;
    if (t.rfind("2^", 0) == 0) {
        const double e = std::strtod(t.c_str() + 2, &end);
        if (end == t.c_str() + 2 || *end != '\0') throw ConfigError(field + ": cannot parse '" + text + "'");
        return std::exp2(e);
    }
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || *end != '\0') throw ConfigError(field + ": cannot parse '" + text + "' as a number");
    return v;
}

inline long parse_integer(const std::string& field, const std::string& text) {
    const std::string t = detail::trim(text);
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (t.empty() || *end != '\0') throw ConfigError(field + ": cannot parse '" + text + "' as an integer");
    return v;
}

inline std::vector<double> parse_number_list(const std::string& field, const std::string& text) {
    std::vector<double> out;
    for (const auto& item : detail::split(text, ',')) out.push_back(parse_number(field, item));
    if (out.empty()) throw ConfigError(field + ": empty list");
    return out;
}

inline std::vector<int> parse_integer_list(const std::string& field, const std::string& text) {
    std::vector<int> out;
    for (const auto& item : detail::split(text, ',')) {
        if (const auto dots = item.find(".."); dots != std::string::npos) {
            const long lo = parse_integer(field, item.substr(0, dots));
            const long hi = parse_integer(field, item.substr(dots + 2));
            if (hi < lo) throw ConfigError(field + ": empty range '" + item + "'");
            for (long v = lo; v <= hi; ++v) out.push_back(static_cast<int>(v));
        } else {
            out.push_back(static_cast<int>(parse_integer(field, item)));
        }
    }
    if (out.empty()) throw ConfigError(field + ": empty list");
    return out;
}

/// Builds and validates a StudyConfig. Unknown keys are rejected.
inline StudyConfig study_config_from(const KeyValues& kv) {
    static const std::set<std::string> known = {
        "surface", "gammas", "k", "k_max", "reference_level", "reference_dt", "coarse_levels", "coarse_dts",
        "realizations", "seed", "t_final", "coupling", "fractional", "drift_field", "noise_field", "threads"};
    for (const auto& [key, value] : kv)
        if (!known.count(key)) throw ConfigError(key + ": unknown configuration key");

    StudyConfig c;
    auto get = [&](const std::string& key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto v = get("surface")) {
        try {
            c.surface = Surface::from_name(*v);
        } catch (const ParameterError& e) {
            throw ConfigError(std::string("surface: ") + e.what());
        }
    }
    if (auto v = get("gammas")) c.gammas = parse_number_list("gammas", *v);
    if (auto v = get("k")) {
        if (*v == "auto")
            c.k.reset();
        else
            c.k = parse_number("k", *v);
    }
    if (auto v = get("k_max")) c.k_max = parse_number("k_max", *v);
    if (auto v = get("reference_level")) c.reference_level = static_cast<int>(parse_integer("reference_level", *v));
    if (auto v = get("reference_dt")) c.reference_dt = parse_number("reference_dt", *v);
    if (auto v = get("coarse_levels")) c.coarse_levels = parse_integer_list("coarse_levels", *v);
    if (auto v = get("coarse_dts")) c.coarse_dts = parse_number_list("coarse_dts", *v);
    if (auto v = get("realizations")) c.realizations = static_cast<int>(parse_integer("realizations", *v));
    if (auto v = get("seed")) {
        const long s = parse_integer("seed", *v);
        if (s < 0) throw ConfigError("seed: must be non-negative");
        c.seed = static_cast<std::uint64_t>(s);
    }
    if (auto v = get("t_final")) c.t_final = parse_number("t_final", *v);
    if (auto v = get("coupling")) {
        if (*v == "coupled")
            c.coupling = CouplingMode::coupled;
        else if (*v == "independent")
            c.coupling = CouplingMode::independent;
        else
            throw ConfigError("coupling: expected 'coupled' or 'independent', got '" + *v + "'");
    }
    if (auto v = get("fractional")) {
        if (*v == "final")
            c.fractional = FractionalMode::final_time;
        else if (*v == "per_step")
            c.fractional = FractionalMode::per_step;
        else
            throw ConfigError("fractional: expected 'final' or 'per_step', got '" + *v + "'");
    }
    if (auto v = get("drift_field")) c.drift_field = *v;
    if (auto v = get("noise_field")) c.noise_field = *v;
    if (auto v = get("threads")) c.threads = static_cast<int>(parse_integer("threads", *v));
    c.validate();
    return c;
}

}  // namespace sfem
