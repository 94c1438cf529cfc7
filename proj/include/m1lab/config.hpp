#pragma once

#include "m1lab/errors.hpp"
#include "m1lab/hermite.hpp"
#include "m1lab/particle_system.hpp"
#include "m1lab/spde_limit.hpp"

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace m1lab {

struct NamedFunction {
    std::string name;
    TestFunction phi;
};

struct SpdeSettings {
    DensityGrid grid;
    std::vector<double> snapshots;   // output times; empty means T only
};

struct TightnessSettings {
    std::vector<double> lags;                    // time lags; empty means T * 2^-8 .. T * 2^-2
    std::size_t random_triples = 1000;
    std::vector<double> etas{0.0025, 0.005, 0.01, 0.02, 0.04};
    std::vector<double> deltas{0.2, 0.1, 0.05, 0.025};
    double endpoint_eta = 0.05;
    std::vector<std::size_t> ladder{32, 256};
};

struct ConvergeSettings {
    std::vector<std::size_t> ladder{32, 128, 512};
    std::size_t seeds = 20;
    double tol = 1e-3;
    std::size_t max_grid = 4096;
    std::string phi = "h1";
};

struct ExperimentConfig {
    ModelConfig model;
    std::size_t coordinates = 3;     // dual Hermite coordinates written per replicate (0 = none)
    std::vector<NamedFunction> phis{{"h0", TestFunction::hermite(0)},
                                    {"h1", TestFunction::hermite(1)},
                                    {"h2", TestFunction::hermite(2)}};
    SpdeSettings spde;
    TightnessSettings tightness;
    ConvergeSettings converge;

    [[nodiscard]] const TestFunction& phi(const std::string& name) const {
        for (const auto& f : phis) {
            if (f.name == name) return f.phi;
        }
        throw ConfigError("converge.phi", "no test function named '" + name + "'");
    }

    /// Lags in grid steps.
    [[nodiscard]] std::vector<std::size_t> lag_steps() const {
        std::vector<std::size_t> out;
        const std::size_t steps = model.steps();
        if (tightness.lags.empty()) {
            for (int k = 8; k >= 2; --k) {
                const double lag = model.horizon * std::ldexp(1.0, -k);
                const auto s = static_cast<std::size_t>(std::llround(lag / model.dt));
                if (s >= 1) out.push_back(s);
            }
            return out;
        }
        for (std::size_t i = 0; i < tightness.lags.size(); ++i) {
            const double s = tightness.lags[i] / model.dt;
            const double r = std::round(s);
            if (r < 1.0 || std::abs(s - r) > 1e-6 || static_cast<std::size_t>(r) > steps) {
                throw ConfigError("tightness.lags[" + std::to_string(i) + "]", "must be a positive multiple of dt within T");
            }
            out.push_back(static_cast<std::size_t>(r));
        }
        return out;
    }

    void validate() const {
        model.validate();
        spde.grid.validate();
        for (std::size_t i = 0; i < spde.snapshots.size(); ++i) {
            if (!(spde.snapshots[i] >= 0.0 && spde.snapshots[i] <= model.horizon)) {
                throw ConfigError("spde.snapshots[" + std::to_string(i) + "]", "must lie in [0, T]");
            }
        }
        std::set<std::string> names;
        for (std::size_t i = 0; i < phis.size(); ++i) {
            if (phis[i].name.empty()) throw ConfigError("phis[" + std::to_string(i) + "].name", "must not be empty");
            if (!names.insert(phis[i].name).second) throw ConfigError("phis[" + std::to_string(i) + "].name", "duplicate name");
        }
        for (std::size_t i = 0; i < tightness.etas.size(); ++i) {
            if (!(tightness.etas[i] > 0.0)) throw ConfigError("tightness.etas[" + std::to_string(i) + "]", "must be > 0");
        }
        for (std::size_t i = 0; i < tightness.deltas.size(); ++i) {
            const double d = tightness.deltas[i];
            if (!(d > 0.0 && d < model.horizon) || (i > 0 && !(d < tightness.deltas[i - 1]))) {
                throw ConfigError("tightness.deltas[" + std::to_string(i) + "]", "must decrease and lie in (0, T)");
            }
        }
        if (!(tightness.endpoint_eta > 0.0)) throw ConfigError("tightness.endpoint_eta", "must be > 0");
        for (std::size_t i = 0; i < tightness.ladder.size(); ++i) {
            if (tightness.ladder[i] < 1) throw ConfigError("tightness.ladder[" + std::to_string(i) + "]", "must be >= 1");
        }
        (void)lag_steps();
        if (converge.ladder.empty()) throw ConfigError("converge.ladder", "must not be empty");
        for (std::size_t i = 0; i < converge.ladder.size(); ++i) {
            if (converge.ladder[i] < 1) throw ConfigError("converge.ladder[" + std::to_string(i) + "]", "must be >= 1");
        }
        if (converge.seeds < 1) throw ConfigError("converge.seeds", "must be >= 1");
        if (!(converge.tol > 0.0)) throw ConfigError("converge.tol", "must be > 0");
        if (converge.max_grid < 16) throw ConfigError("converge.max_grid", "must be >= 16");
        (void)phi(converge.phi);
    }
};

// ---------------------------------------------------------------------------
// JSON schema

namespace detail {

using json = nlohmann::json;

class Reader {
public:
    Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected a table");
    }

    [[nodiscard]] std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    [[nodiscard]] bool has(const std::string& key) const {
        seen_.insert(key);
        return obj_.contains(key);
    }

    void number(const std::string& key, double& out) const {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (!v.is_number()) throw ConfigError(field(key), "expected a number");
        out = v.get<double>();
        if (!std::isfinite(out)) throw ConfigError(field(key), "must be finite");
    }

    void count(const std::string& key, std::size_t& out) const {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(field(key), "expected a nonnegative integer");
        out = v.get<std::size_t>();
    }

    void seed(const std::string& key, std::uint64_t& out) const {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (v.is_number_unsigned()) {
            out = v.get<std::uint64_t>();
        } else if (v.is_number_integer() && v.get<long long>() >= 0) {
            out = static_cast<std::uint64_t>(v.get<long long>());
        } else if (v.is_string()) {
            try {
                std::size_t used = 0;
                out = std::stoull(v.get<std::string>(), &used, 0);
                if (used != v.get<std::string>().size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw ConfigError(field(key), "expected an unsigned 64-bit integer");
            }
        } else {
            throw ConfigError(field(key), "expected an unsigned 64-bit integer");
        }
    }

    void text(const std::string& key, std::string& out) const {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (!v.is_string()) throw ConfigError(field(key), "expected a string");
        out = v.get<std::string>();
    }

    void numbers(const std::string& key, std::vector<double>& out) const {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (!v.is_array()) throw ConfigError(field(key), "expected an array of numbers");
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) throw ConfigError(field(key) + "[" + std::to_string(i) + "]", "expected a number");
            out.push_back(v[i].get<double>());
        }
    }

    void counts(const std::string& key, std::vector<std::size_t>& out) const {
        if (!has(key)) return;
        const auto& v = obj_.at(key);
        if (!v.is_array()) throw ConfigError(field(key), "expected an array of integers");
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number_integer() || v[i].get<long long>() < 0) {
                throw ConfigError(field(key) + "[" + std::to_string(i) + "]", "expected a nonnegative integer");
            }
            out.push_back(v[i].get<std::size_t>());
        }
    }

    [[nodiscard]] Reader table(const std::string& key) const {
        seen_.insert(key);
        return Reader(obj_.at(key), field(key));
    }

    [[nodiscard]] const json& raw(const std::string& key) const {
        seen_.insert(key);
        return obj_.at(key);
    }

    void reject_unknown() const {
        for (const auto& [k, v] : obj_.items()) {
            if (!seen_.count(k)) throw ConfigError(field(k), "unknown field");
        }
    }

    void allow(std::initializer_list<const char*> keys) const {
        for (const char* k : keys) seen_.insert(k);
    }

private:
    const json& obj_;
    std::string path_;
    mutable std::set<std::string> seen_;
};

inline InitialLaw parse_initial(const Reader& r) {
    std::string family = "shifted_exponential";
    r.text("family", family);
    InitialLaw law;
    if (family == "shifted_exponential") {
        law = InitialLaw::shifted_exponential(0.5, 1.0);
        r.number("shift", law.a);
        r.number("rate", law.b);
    } else if (family == "lognormal") {
        law = InitialLaw::lognormal(0.0, 0.5);
        r.number("mu", law.a);
        r.number("sigma", law.b);
    } else if (family == "uniform") {
        law = InitialLaw::uniform(1.0, 2.0);
        r.number("lower", law.a);
        r.number("upper", law.b);
    } else if (family == "point") {
        law = InitialLaw::point(1.0);
        r.number("x0", law.a);
    } else {
        throw ConfigError(r.field("family"), "unknown family '" + family + "' (shifted_exponential, lognormal, uniform, point)");
    }
    r.reject_unknown();
    return law;
}

}  // namespace detail

inline ExperimentConfig parse_config_json(const nlohmann::json& root) {
    using detail::Reader;
    ExperimentConfig cfg;
    const Reader r(root, "");
    r.count("N", cfg.model.particles);
    r.number("T", cfg.model.horizon);
    r.number("dt", cfg.model.dt);
    r.seed("seed", cfg.model.seed);
    std::string barrier = "grid";
    r.text("barrier", barrier);
    if (barrier == "grid") {
        cfg.model.barrier = BarrierMode::grid;
    } else if (barrier == "bridge") {
        cfg.model.barrier = BarrierMode::bridge;
    } else {
        throw ConfigError("barrier", "expected 'grid' or 'bridge'");
    }
    r.count("coordinates", cfg.coordinates);
    if (r.has("rho")) {
        const auto& v = r.raw("rho");
        if (v.is_number()) {
            const double c = v.get<double>();
            if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("rho", "value must lie in [0, 1]");
            cfg.model.rho = RhoTable::constant(c);
        } else {
            const Reader t(v, "rho");
            std::vector<double> nodes{0.0, 1.0};
            std::vector<double> values;
            t.numbers("nodes", nodes);
            t.numbers("values", values);
            t.reject_unknown();
            cfg.model.rho = RhoTable(nodes, values);
        }
    }
    if (r.has("initial")) cfg.model.initial = detail::parse_initial(r.table("initial"));
    if (r.has("spde")) {
        const auto t = r.table("spde");
        t.number("x_max", cfg.spde.grid.x_max);
        t.number("dx", cfg.spde.grid.dx);
        t.count("substeps", cfg.spde.grid.substeps);
        t.number("r_max", cfg.spde.grid.r_max);
        t.numbers("snapshots", cfg.spde.snapshots);
        t.reject_unknown();
    }
    if (r.has("tightness")) {
        const auto t = r.table("tightness");
        t.numbers("lags", cfg.tightness.lags);
        t.count("random_triples", cfg.tightness.random_triples);
        t.numbers("etas", cfg.tightness.etas);
        t.numbers("deltas", cfg.tightness.deltas);
        t.number("endpoint_eta", cfg.tightness.endpoint_eta);
        t.counts("ladder", cfg.tightness.ladder);
        t.reject_unknown();
    }
    if (r.has("converge")) {
        const auto t = r.table("converge");
        t.counts("ladder", cfg.converge.ladder);
        t.count("seeds", cfg.converge.seeds);
        t.number("tol", cfg.converge.tol);
        t.count("max_grid", cfg.converge.max_grid);
        t.text("phi", cfg.converge.phi);
        t.reject_unknown();
    }
    if (r.has("phis")) {
        const auto& arr = r.raw("phis");
        if (!arr.is_array()) throw ConfigError("phis", "expected an array of tables");
        cfg.phis.clear();
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string path = "phis[" + std::to_string(i) + "]";
            const Reader t(arr[i], path);
            NamedFunction f;
            t.text("name", f.name);
            std::vector<double> c;
            t.numbers("coefficients", c);
            if (c.empty()) throw ConfigError(path + ".coefficients", "must not be empty");
            t.reject_unknown();
            f.phi = TestFunction(std::move(c));
            cfg.phis.push_back(std::move(f));
        }
    }
    r.reject_unknown();
    cfg.validate();
    return cfg;
}

inline nlohmann::json toml_to_json(std::string_view text, const std::string& source) {
    try {
        const auto tbl = toml::parse(text, source);
        std::ostringstream os;
        os << toml::json_formatter(tbl);
        return nlohmann::json::parse(os.str());
    } catch (const toml::parse_error& e) {
        const auto& where = e.source().begin;
        throw ConfigError("<toml>", std::string(e.description()) + " at line " + std::to_string(where.line) + ", column " +
                                        std::to_string(where.column));
    }
}

/// Reads a TOML or JSON config file into JSON; JSON is recognised by a leading '{' or a .json suffix.
inline nlohmann::json load_config_json(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config " + file);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    const bool is_json = (first != std::string::npos && text[first] == '{') ||
                         (file.size() >= 5 && file.compare(file.size() - 5, 5, ".json") == 0);
    if (!is_json) return toml_to_json(text, file);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("<json>", e.what());
    }
}

inline ExperimentConfig load_config(const std::string& file) { return parse_config_json(load_config_json(file)); }

/// Canonical JSON form of a config (every field, defaults filled in).
inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    using json = nlohmann::json;
    json j;
    j["N"] = cfg.model.particles;
    j["T"] = cfg.model.horizon;
    j["dt"] = cfg.model.dt;
    j["seed"] = cfg.model.seed;
    j["barrier"] = cfg.model.barrier == BarrierMode::grid ? "grid" : "bridge";
    j["coordinates"] = cfg.coordinates;
    j["rho"] = {{"nodes", std::vector<double>(cfg.model.rho.nodes().begin(), cfg.model.rho.nodes().end())},
                {"values", std::vector<double>(cfg.model.rho.values().begin(), cfg.model.rho.values().end())}};
    const auto& law = cfg.model.initial;
    switch (law.family) {
        case InitialLaw::Family::shifted_exponential:
            j["initial"] = {{"family", "shifted_exponential"}, {"shift", law.a}, {"rate", law.b}};
            break;
        case InitialLaw::Family::lognormal: j["initial"] = {{"family", "lognormal"}, {"mu", law.a}, {"sigma", law.b}}; break;
        case InitialLaw::Family::uniform: j["initial"] = {{"family", "uniform"}, {"lower", law.a}, {"upper", law.b}}; break;
        case InitialLaw::Family::point: j["initial"] = {{"family", "point"}, {"x0", law.a}}; break;
    }
    j["spde"] = {{"x_max", cfg.spde.grid.x_max},
                 {"dx", cfg.spde.grid.dx},
                 {"substeps", cfg.spde.grid.substeps},
                 {"r_max", cfg.spde.grid.r_max},
                 {"snapshots", cfg.spde.snapshots}};
    json lags = json::array();
    for (std::size_t s : cfg.lag_steps()) lags.push_back(static_cast<double>(s) * cfg.model.dt);
    j["tightness"] = {{"lags", lags},
                      {"random_triples", cfg.tightness.random_triples},
                      {"etas", cfg.tightness.etas},
                      {"deltas", cfg.tightness.deltas},
                      {"endpoint_eta", cfg.tightness.endpoint_eta},
                      {"ladder", cfg.tightness.ladder}};
    j["converge"] = {{"ladder", cfg.converge.ladder},
                     {"seeds", cfg.converge.seeds},
                     {"tol", cfg.converge.tol},
                     {"max_grid", cfg.converge.max_grid},
                     {"phi", cfg.converge.phi}};
    json phis = json::array();
    for (const auto& f : cfg.phis) {
        phis.push_back({{"name", f.name},
                        {"coefficients", std::vector<double>(f.phi.coefficients().begin(), f.phi.coefficients().end())}});
    }
    j["phis"] = phis;
    return j;
}

namespace detail {

inline toml::table json_to_toml_table(const nlohmann::json& j);
inline toml::array json_to_toml_array(const nlohmann::json& j);

// Calls sink(value) with the toml value matching a JSON scalar, table, or array.
template <typename Sink>
void with_toml_value(const nlohmann::json& j, Sink&& sink) {
    if (j.is_object()) {
        sink(json_to_toml_table(j));
    } else if (j.is_array()) {
        sink(json_to_toml_array(j));
    } else if (j.is_boolean()) {
        sink(j.get<bool>());
    } else if (j.is_number_unsigned()) {
        const auto u = j.get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
            sink(std::to_string(u));
        } else {
            sink(static_cast<std::int64_t>(u));
        }
    } else if (j.is_number_integer()) {
        sink(j.get<std::int64_t>());
    } else if (j.is_number()) {
        sink(j.get<double>());
    } else {
        sink(j.get<std::string>());
    }
}

inline toml::table json_to_toml_table(const nlohmann::json& j) {
    toml::table t;
    for (const auto& [k, v] : j.items()) {
        with_toml_value(v, [&t, &k](auto&& node) { t.insert(k, std::forward<decltype(node)>(node)); });
    }
    return t;
}

inline toml::array json_to_toml_array(const nlohmann::json& j) {
    toml::array a;
    for (const auto& v : j) with_toml_value(v, [&a](auto&& node) { a.push_back(std::forward<decltype(node)>(node)); });
    return a;
}

}  // namespace detail

inline std::string config_to_toml(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << detail::json_to_toml_table(config_to_json(cfg)) << '\n';
    return os.str();
}

}  // namespace m1lab
