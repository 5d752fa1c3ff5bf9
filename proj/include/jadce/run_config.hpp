#pragma once

#include "harness.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace jadce {

inline constexpr const char* kVersion = "1.0.0";

class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class OutputFormat { csv, json };

struct RunConfig {
    ExperimentSpec spec;
    std::string output_dir = "results";
    OutputFormat format = OutputFormat::csv;
    std::optional<std::string> preset;
    /// active-device counts scanned by the fig3 preset
    std::vector<int> k_range;
    double success_target = 0.95;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline long long parse_int(const std::string& key, const std::string& v)
{
    std::size_t pos = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw config_error("'" + key + "': expected an integer, got '" + v + "'");
    return out;
}

inline double parse_real(const std::string& key, const std::string& v)
{
    std::size_t pos = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size() || !std::isfinite(out))
        throw config_error("'" + key + "': expected a finite number, got '" + v + "'");
    return out;
}

inline std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace detail

/// Integer list: "6", "2,4,8", "2:20" (inclusive) or a comma mix of both.
inline std::vector<int> parse_int_list(const std::string& key, const std::string& text)
{
    std::vector<int> out;
    for (const auto& part : detail::split(text, ',')) {
        const auto colon = part.find(':');
        if (colon == std::string::npos) {
            out.push_back(static_cast<int>(detail::parse_int(key, part)));
            continue;
        }
        const auto lo = detail::parse_int(key, detail::trim(part.substr(0, colon)));
        const auto hi = detail::parse_int(key, detail::trim(part.substr(colon + 1)));
        if (hi < lo) throw config_error("'" + key + "': empty range '" + part + "'");
        if (hi - lo > 100000) throw config_error("'" + key + "': range too large");
        for (auto v = lo; v <= hi; ++v) out.push_back(static_cast<int>(v));
    }
    if (out.empty()) throw config_error("'" + key + "': empty list");
    return out;
}

inline int int_range(int lo, int hi, std::vector<int>& out)
{
    out.clear();
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return static_cast<int>(out.size());
}

/// Figure presets: N = 30, K = 5, M = 2, 100 trials per point.
inline void apply_preset(RunConfig& cfg, const std::string& name)
{
    auto& s = cfg.spec;
    s.n_devices = 30;
    s.n_active = 5;
    s.n_antennas = 2;
    s.trials = 100;
    s.snr_db.reset();
    s.solvers = {SolverKind::group_lasso, SolverKind::reweighted, SolverKind::bnb};
    int_range(2, 20, s.pilot_lengths);
    cfg.k_range.clear();
    if (name == "fig1" || name == "fig2") {
    } else if (name == "fig3") {
        s.solvers = {SolverKind::bnb};
        int_range(1, 6, cfg.k_range);
        int_range(2, 12, s.pilot_lengths);
    } else if (name == "fig4") {
        s.snr_db = 30.0;
    } else {
        throw config_error("unknown preset '" + name + "' (expected fig1, fig2, fig3 or fig4)");
    }
    cfg.preset = name;
}

/// One configuration assignment; keys match the long command-line flags.
inline void apply_setting(RunConfig& cfg, const std::string& raw_key, const std::string& raw_value)
{
    std::string key = detail::trim(raw_key);
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string v = detail::trim(raw_value);
    auto& s = cfg.spec;
    auto positive = [&](long long x) {
        if (x < 1) throw config_error("'" + key + "' must be >= 1");
        return x;
    };
    if (key == "n") s.n_devices = static_cast<int>(positive(detail::parse_int(key, v)));
    else if (key == "k") {
        const auto k = detail::parse_int(key, v);
        if (k < 0) throw config_error("'k' must be >= 0");
        s.n_active = static_cast<int>(k);
    } else if (key == "m") s.n_antennas = static_cast<int>(positive(detail::parse_int(key, v)));
    else if (key == "l" || key == "l-range") {
        s.pilot_lengths = parse_int_list(key, v);
        for (int l : s.pilot_lengths)
            if (l < 1) throw config_error("pilot lengths must be >= 1");
    } else if (key == "k-range") {
        cfg.k_range = parse_int_list(key, v);
        for (int k : cfg.k_range)
            if (k < 0) throw config_error("'k-range' entries must be >= 0");
    } else if (key == "snr") {
        if (v == "none" || v == "inf" || v.empty()) s.snr_db.reset();
        else s.snr_db = detail::parse_real(key, v);
    } else if (key == "trials") s.trials = static_cast<int>(positive(detail::parse_int(key, v)));
    else if (key == "seed") {
        const auto x = detail::parse_int(key, v);
        if (x < 0) throw config_error("'seed' must be >= 0");
        s.base_seed = static_cast<std::uint64_t>(x);
    } else if (key == "solvers") {
        s.solvers.clear();
        try {
            for (const auto& name : detail::split(v, ',')) s.solvers.push_back(parse_solver(name));
        } catch (const argument_error& e) {
            throw config_error(e.what());
        }
        if (s.solvers.empty()) throw config_error("'solvers' is empty");
    } else if (key == "node-limit") s.node_limit = static_cast<long>(positive(detail::parse_int(key, v)));
    else if (key == "success-tol") {
        s.success_tol = detail::parse_real(key, v);
        if (!(s.success_tol > 0.0)) throw config_error("'success-tol' must be > 0");
    } else if (key == "success-target") {
        cfg.success_target = detail::parse_real(key, v);
        if (!(cfg.success_target > 0.0 && cfg.success_target <= 1.0))
            throw config_error("'success-target' must lie in (0, 1]");
    } else if (key == "gamma0-ratio") {
        s.gamma0.ratio = detail::parse_real(key, v);
        if (!(s.gamma0.ratio > 0.0)) throw config_error("'gamma0-ratio' must be > 0");
    } else if (key == "epsilon-headroom") {
        s.epsilon_rule.headroom = detail::parse_real(key, v);
        if (!(s.epsilon_rule.headroom >= 0.0)) throw config_error("'epsilon-headroom' must be >= 0");
    } else if (key == "outer-iters") s.reweight_outer_iters = static_cast<int>(positive(detail::parse_int(key, v)));
    else if (key == "threads") s.threads = static_cast<int>(positive(detail::parse_int(key, v)));
    else if (key == "out") {
        if (v.empty()) throw config_error("'out' must not be empty");
        cfg.output_dir = v;
    } else if (key == "format") {
        if (v == "csv") cfg.format = OutputFormat::csv;
        else if (v == "json") cfg.format = OutputFormat::json;
        else throw config_error("'format' must be csv or json");
    } else if (key == "preset") apply_preset(cfg, v);
    else throw config_error("unknown configuration key '" + raw_key + "'");
}

/// Flat "key = value" text; '#' starts a comment, blank lines are ignored.
inline KeyValues parse_config_text(const std::string& text)
{
    KeyValues out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("config line " + std::to_string(lineno) + ": expected key = value");
        const auto key = detail::trim(line.substr(0, eq));
        if (key.empty()) throw config_error("config line " + std::to_string(lineno) + ": empty key");
        out.emplace_back(key, detail::trim(line.substr(eq + 1)));
    }
    return out;
}

inline KeyValues read_config_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw config_error("cannot read config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

/// Layering: defaults < file < preset < flags. The preset is taken from the
/// flags if given there, otherwise from the file.
inline RunConfig build_config(const KeyValues& file, const KeyValues& flags)
{
    auto is_preset = [](const auto& kv) { return detail::trim(kv.first) == "preset"; };
    std::optional<std::string> preset;
    for (const auto& kv : file)
        if (is_preset(kv)) preset = detail::trim(kv.second);
    for (const auto& kv : flags)
        if (is_preset(kv)) preset = detail::trim(kv.second);

    RunConfig cfg;
    int_range(2, 20, cfg.spec.pilot_lengths);
    for (const auto& kv : file)
        if (!is_preset(kv)) apply_setting(cfg, kv.first, kv.second);
    if (preset) apply_preset(cfg, *preset);
    for (const auto& kv : flags)
        if (!is_preset(kv)) apply_setting(cfg, kv.first, kv.second);

    try {
        cfg.spec.validate();
    } catch (const argument_error& e) {
        throw config_error(e.what());
    }
    if (cfg.preset == std::string("fig3") && cfg.k_range.empty()) throw config_error("fig3 needs a k-range");
    return cfg;
}

// --- serialization ----------------------------------------------------------

/// Fixed-format number for tables; NaN prints as "nan".
inline std::string format_number(double v, int digits = 6)
{
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

/// Column-ordered table, emitted as CSV (header row) or as a JSON array of
/// objects with the same columns.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::string to_csv() const
    {
        std::string out;
        auto emit = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i) out += ',';
                const auto& c = cells[i];
                if (c.find_first_of(",\"\n") != std::string::npos) {
                    out += '"';
                    for (char ch : c) {
                        if (ch == '"') out += '"';
                        out += ch;
                    }
                    out += '"';
                } else {
                    out += c;
                }
            }
            out += "\r\n";
        };
        emit(columns);
        for (const auto& r : rows) emit(r);
        return out;
    }

    std::string to_json() const;
};

inline Table success_table(const SweepResult& res, const std::vector<int>& pilot_lengths, SolverKind kind)
{
    Table t{{"L", "success_rate", "trials"}, {}};
    for (int l : pilot_lengths)
        if (const auto* p = res.find(l, kind))
            t.rows.push_back({std::to_string(l), format_number(p->success_rate, 4), std::to_string(p->trials)});
    return t;
}

inline Table nmse_table(const SweepResult& res, const std::vector<int>& pilot_lengths, SolverKind kind)
{
    Table t{{"L", "nmse_db", "trials"}, {}};
    for (int l : pilot_lengths)
        if (const auto* p = res.find(l, kind))
            t.rows.push_back({std::to_string(l), format_number(p->nmse_db, 4), std::to_string(p->trials)});
    return t;
}

inline Table min_pilot_table(const std::vector<MinPilotEntry>& entries)
{
    Table t{{"K", "L_min"}, {}};
    for (const auto& e : entries)
        t.rows.push_back({std::to_string(e.n_active), e.min_pilot_len ? std::to_string(*e.min_pilot_len) : ""});
    return t;
}

inline Table trials_table(const SweepResult& res)
{
    Table t{{"L", "trial", "seed", "solver", "status", "success", "nmse_db", "error_fro", "detect_miss",
             "detect_false", "support_size", "nodes"},
            {}};
    for (const auto& r : res.records)
        t.rows.push_back({std::to_string(r.pilot_len), std::to_string(r.trial), std::to_string(r.seed),
                          to_string(r.solver), r.status, r.success ? "1" : "0", format_number(r.nmse_db, 4),
                          format_number(std::sqrt(r.error_sq), 12), std::to_string(r.detect_miss),
                          std::to_string(r.detect_false), std::to_string(r.support_size), std::to_string(r.nodes)});
    return t;
}

inline Table summary_table(const SweepResult& res)
{
    Table t{{"L", "solver", "trials", "success_rate", "nmse_db", "mean_miss", "mean_false", "optimal_rate"}, {}};
    for (const auto& p : res.summaries)
        t.rows.push_back({std::to_string(p.pilot_len), to_string(p.solver), std::to_string(p.trials),
                          format_number(p.success_rate, 4), format_number(p.nmse_db, 4),
                          format_number(p.mean_miss, 4), format_number(p.mean_false, 4),
                          format_number(p.optimal_rate, 4)});
    return t;
}

inline nlohmann::json cell_to_json(const std::string& c)
{
    if (c.empty() || c == "nan") return nullptr;
    char* end = nullptr;
    const double v = std::strtod(c.c_str(), &end);
    if (end == c.c_str() + c.size() && std::isfinite(v)) {
        if (c.find_first_of(".eE") == std::string::npos) {
            long long i = 0;
            unsigned long long u = 0;
            const char* e = c.data() + c.size();
            if (auto r = std::from_chars(c.data(), e, i); r.ec == std::errc{} && r.ptr == e) return i;
            if (auto r = std::from_chars(c.data(), e, u); r.ec == std::errc{} && r.ptr == e) return u;
        }
        return v;
    }
    return c;
}

inline std::string Table::to_json() const
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json obj = nlohmann::json::object();
        for (std::size_t i = 0; i < columns.size() && i < r.size(); ++i) obj[columns[i]] = cell_to_json(r[i]);
        arr.push_back(std::move(obj));
    }
    return arr.dump(2) + "\n";
}

}  // namespace jadce
