// JSON reading and writing of SarConfig.

#include "esci/errors.hpp"
#include "esci/scenario.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace esci {

namespace {

using nlohmann::json;

std::string line_col(std::string_view text, std::size_t byte)
{
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where)
{
    for (const auto& [key, value] : obj.items()) {
        if (!known.count(key)) {
            throw ConfigError(where + key + ": unknown key");
        }
    }
}

double get_number(const json& j, const std::string& field)
{
    if (!j.is_number()) {
        throw ConfigError(field + ": expected a number");
    }
    return j.get<double>();
}

std::uint64_t get_unsigned(const json& j, const std::string& field)
{
    if (j.is_number_unsigned()) {
        return j.get<std::uint64_t>();
    }
    if (j.is_number_integer() && j.get<std::int64_t>() >= 0) {
        return std::uint64_t(j.get<std::int64_t>());
    }
    throw ConfigError(field + ": expected a non-negative integer");
}

std::string get_string(const json& j, const std::string& field)
{
    if (!j.is_string()) {
        throw ConfigError(field + ": expected a string");
    }
    return j.get<std::string>();
}

SarConfig from_json(const json& root)
{
    if (!root.is_object()) {
        throw ConfigError("config: top level must be an object");
    }
    reject_unknown(root,
                   {"satellites", "edges", "sigma_w", "sigma_m", "p0_scale", "horizon", "runs", "seed", "level",
                    "method", "omega"},
                   "");
    SarConfig cfg = default_sar_config();

    if (root.contains("satellites")) {
        const json& sats = root["satellites"];
        if (!sats.is_array()) {
            throw ConfigError("satellites: expected an array");
        }
        cfg.satellites.clear();
        for (std::size_t i = 0; i < sats.size(); ++i) {
            const std::string where = "satellites[" + std::to_string(i) + "]";
            const json& s = sats[i];
            if (!s.is_object() || !s.contains("azimuth_deg") || !s.contains("elevation_deg")) {
                throw ConfigError(where + ": expected {\"azimuth_deg\": ..., \"elevation_deg\": ...}");
            }
            reject_unknown(s, {"azimuth_deg", "elevation_deg"}, where + ".");
            cfg.satellites.push_back({get_number(s["azimuth_deg"], where + ".azimuth_deg"),
                                      get_number(s["elevation_deg"], where + ".elevation_deg")});
        }
    }
    if (root.contains("edges")) {
        const json& edges = root["edges"];
        if (!edges.is_array()) {
            throw ConfigError("edges: expected an array of [a, b] pairs");
        }
        cfg.edges.clear();
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const std::string where = "edges[" + std::to_string(e) + "]";
            if (!edges[e].is_array() || edges[e].size() != 2) {
                throw ConfigError(where + ": expected a pair [a, b]");
            }
            cfg.edges.push_back({std::size_t(get_unsigned(edges[e][0], where + "[0]")),
                                 std::size_t(get_unsigned(edges[e][1], where + "[1]"))});
        }
    }
    if (root.contains("sigma_w")) {
        cfg.sigma_w = get_number(root["sigma_w"], "sigma_w");
    }
    if (root.contains("sigma_m")) {
        cfg.sigma_m = get_number(root["sigma_m"], "sigma_m");
    }
    if (root.contains("p0_scale")) {
        cfg.p0_scale = get_number(root["p0_scale"], "p0_scale");
    }
    if (root.contains("horizon")) {
        cfg.horizon = std::size_t(get_unsigned(root["horizon"], "horizon"));
    }
    if (root.contains("runs")) {
        cfg.runs = std::size_t(get_unsigned(root["runs"], "runs"));
    }
    if (root.contains("seed")) {
        cfg.seed = get_unsigned(root["seed"], "seed");
    }
    if (root.contains("level")) {
        try {
            cfg.level = parse_level(get_string(root["level"], "level"));
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("level: ") + e.what());
        }
    }
    if (root.contains("method")) {
        const std::string m = get_string(root["method"], "method");
        if (m == "CENTRALIZED") {
            cfg.method.reset();
        } else {
            try {
                cfg.method = parse_method(m);
            } catch (const ConfigError& e) {
                throw ConfigError(std::string("method: ") + e.what() + " or CENTRALIZED");
            }
        }
    }
    if (root.contains("omega")) {
        const json& o = root["omega"];
        if (!o.is_object()) {
            throw ConfigError("omega: expected an object");
        }
        reject_unknown(o, {"policy", "grid_resolution", "max_refine_iters", "tol"}, "omega.");
        if (o.contains("policy")) {
            const std::string p = get_string(o["policy"], "omega.policy");
            if (p != "optimized" && p != "uniform") {
                throw ConfigError("omega.policy: expected \"optimized\" or \"uniform\"");
            }
            cfg.optimize_omega = p == "optimized";
        }
        if (o.contains("grid_resolution")) {
            cfg.omega.grid_resolution = int(get_unsigned(o["grid_resolution"], "omega.grid_resolution"));
        }
        if (o.contains("max_refine_iters")) {
            cfg.omega.max_refine_iters = int(get_unsigned(o["max_refine_iters"], "omega.max_refine_iters"));
        }
        if (o.contains("tol")) {
            cfg.omega.tol = get_number(o["tol"], "omega.tol");
        }
    }
    validate(cfg);
    return cfg;
}

}  // namespace

SarConfig parse_sar_config(std::string_view json_text)
{
    json root;
    try {
        root = json::parse(json_text.begin(), json_text.end());
    } catch (const json::parse_error& e) {
        throw ConfigError("config: syntax error at " + line_col(json_text, e.byte ? e.byte - 1 : 0));
    }
    return from_json(root);
}

SarConfig load_sar_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    try {
        return parse_sar_config(text.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string canonical_json(const SarConfig& cfg)
{
    json root;
    json sats = json::array();
    for (const auto& s : cfg.satellites) {
        sats.push_back({{"azimuth_deg", s.azimuth_deg}, {"elevation_deg", s.elevation_deg}});
    }
    json edges = json::array();
    for (const auto& [a, b] : cfg.edges) {
        edges.push_back({a, b});
    }
    root["satellites"] = sats;
    root["edges"] = edges;
    root["sigma_w"] = cfg.sigma_w;
    root["sigma_m"] = cfg.sigma_m;
    root["p0_scale"] = cfg.p0_scale;
    root["horizon"] = cfg.horizon;
    root["runs"] = cfg.runs;
    root["seed"] = cfg.seed;
    root["level"] = std::string(to_string(cfg.level));
    root["method"] = method_name(cfg);
    root["omega"] = {{"policy", cfg.optimize_omega ? "optimized" : "uniform"},
                     {"grid_resolution", cfg.omega.grid_resolution},
                     {"max_refine_iters", cfg.omega.max_refine_iters},
                     {"tol", cfg.omega.tol}};
    return root.dump(2);
}

}  // namespace esci
