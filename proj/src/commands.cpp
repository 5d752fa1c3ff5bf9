#include "commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace jadce::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_file(const fs::path& path, const std::string& content)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open '" + path.string() + "' for writing");
    f << content;
    f.close();
    if (!f) throw io_error("write to '" + path.string() + "' failed");
}

json config_echo(const RunConfig& cfg)
{
    const auto& s = cfg.spec;
    json j;
    j["preset"] = cfg.preset ? json(*cfg.preset) : json(nullptr);
    j["n"] = s.n_devices;
    j["k"] = s.n_active;
    j["m"] = s.n_antennas;
    j["l"] = s.pilot_lengths;
    j["snr_db"] = s.snr_db ? json(*s.snr_db) : json(nullptr);
    j["trials"] = s.trials;
    j["seed"] = s.base_seed;
    std::vector<std::string> solvers;
    for (auto k : s.solvers) solvers.emplace_back(to_string(k));
    j["solvers"] = solvers;
    j["node_limit"] = s.node_limit;
    j["success_tol"] = s.success_tol;
    j["gamma0_ratio"] = s.gamma0.ratio;
    j["gamma0_floor"] = s.gamma0.floor;
    j["epsilon_headroom"] = s.epsilon_rule.headroom;
    j["outer_iters"] = s.reweight_outer_iters;
    if (!cfg.k_range.empty()) j["k_range"] = cfg.k_range;
    j["success_target"] = cfg.success_target;
    j["format"] = cfg.format == OutputFormat::csv ? "csv" : "json";
    return j;
}

json seed_lists(const ExperimentSpec& spec, const std::vector<int>& pilot_lengths)
{
    json seeds = json::object();
    for (int l : pilot_lengths) {
        std::vector<std::uint64_t> list;
        for (int t = 0; t < spec.trials; ++t) list.push_back(trial_seed(spec.base_seed, l, t));
        seeds[std::to_string(l)] = list;
    }
    return seeds;
}

json point_info(const std::vector<PointSummary>& summaries)
{
    json arr = json::array();
    for (const auto& p : summaries)
        arr.push_back({{"L", p.pilot_len},
                       {"solver", to_string(p.solver)},
                       {"trials", p.trials},
                       {"optimal_rate", p.optimal_rate},
                       {"mean_runtime_ms", p.mean_runtime_ms}});
    return arr;
}

}  // namespace

int cmd_run(const RunConfig& cfg, std::ostream& out, std::ostream& err)
{
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir(cfg.output_dir);
    try {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec || !fs::is_directory(dir))
            throw io_error("cannot create output directory '" + dir.string() + "'");

        const std::string ext = cfg.format == OutputFormat::csv ? ".csv" : ".json";
        auto emit = [&](const Table& t) { return cfg.format == OutputFormat::csv ? t.to_csv() : t.to_json(); };
        std::vector<std::string> files;
        auto put = [&](const std::string& stem, const Table& t) {
            write_file(dir / (stem + ext), emit(t));
            files.push_back(stem + ext);
        };

        json manifest;
        manifest["tool"] = "jadce";
        manifest["version"] = kVersion;
        manifest["config"] = config_echo(cfg);

        const std::string preset = cfg.preset.value_or("");
        if (preset == "fig3") {
            const auto entries = min_pilot_length(cfg.spec, cfg.k_range, cfg.success_target);
            put("fig3", min_pilot_table(entries));
            json scans = json::array();
            std::vector<int> scanned_l;
            for (const auto& e : entries) {
                json pts = json::array();
                for (const auto& [l, rate] : e.scanned) {
                    pts.push_back({{"L", l}, {"success_rate", rate}, {"trials", cfg.spec.trials}});
                    if (std::find(scanned_l.begin(), scanned_l.end(), l) == scanned_l.end()) scanned_l.push_back(l);
                }
                scans.push_back({{"K", e.n_active}, {"points", pts}});
            }
            std::sort(scanned_l.begin(), scanned_l.end());
            manifest["points"] = scans;
            manifest["seeds"] = seed_lists(cfg.spec, scanned_l);
        } else {
            const auto res = run_sweep(cfg.spec);
            const auto& ls = cfg.spec.pilot_lengths;
            for (SolverKind kind : cfg.spec.solvers) {
                if (preset == "fig1") put(std::string("fig1_") + to_string(kind), success_table(res, ls, kind));
                else if (preset == "fig2" || preset == "fig4")
                    put(preset + "_" + to_string(kind), nmse_table(res, ls, kind));
            }
            if (preset.empty()) put("trials", trials_table(res));
            put("summary", summary_table(res));
            manifest["points"] = point_info(res.summaries);
            manifest["seeds"] = seed_lists(cfg.spec, ls);
        }

        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        manifest["files"] = files;
        manifest["wall_time_s"] = secs;
        write_file(dir / "manifest.json", manifest.dump(2) + "\n");
        for (const auto& f : files) out << (dir / f).string() << "\n";
        out << (dir / "manifest.json").string() << "\n";
        return 0;
    } catch (const io_error& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const config_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const argument_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

int cmd_solve(const SolveRequest& req, std::ostream& out, std::ostream& err)
{
    Scenario sc;
    try {
        if (req.solver == SolverKind::oracle && req.n > 20)
            throw argument_error("the enumeration oracle handles at most 20 devices");
        if (req.node_limit < 1) throw argument_error("node limit must be >= 1");
        sc = generate_scenario(req.n, req.m, req.l, req.k, req.snr_db, req.seed);
    } catch (const argument_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    ExperimentSpec spec;
    spec.n_devices = req.n;
    spec.n_antennas = req.m;
    spec.n_active = req.k;
    spec.pilot_lengths = {req.l};
    spec.snr_db = req.snr_db;
    spec.node_limit = req.node_limit;
    spec.solvers = {req.solver};
    const double eps = calibrate_epsilon(sc.noise_var, req.l, req.m, spec.epsilon_rule);

    const auto t0 = std::chrono::steady_clock::now();
    const SolveOutcome sol = run_solver(req.solver, sc, eps, spec);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const TrialRecord rec = evaluate_trial(sc, req.solver, sol, spec);

    const bool exact = req.solver == SolverKind::bnb || req.solver == SolverKind::oracle;
    DeviceSet support;
    if (exact) {
        for (int i = 0; i < sc.n_devices; ++i)
            if (sol.estimate.row(i).squaredNorm() > 0.0) support.push_back(i);
    } else {
        support = rows_at_least(sol.estimate, spec.gamma0(sol.estimate));
    }
    const double residual = (sc.observation - sc.pilots * sol.estimate).norm();
    std::string note;
    if (req.l <= req.k)
        note = "pilot length L=" + std::to_string(req.l) + " <= K=" + std::to_string(req.k) +
               ": exact recovery needs at least L=K+1=" + std::to_string(req.k + 1) + " pilot symbols";

    if (req.json) {
        json j;
        j["solver"] = to_string(req.solver);
        j["status"] = sol.status;
        j["objective"] = support.size();
        j["support"] = support;
        j["true_support"] = sc.support();
        j["nmse_db"] = std::isnan(rec.nmse_db) ? json(nullptr) : json(rec.nmse_db);
        j["error_fro"] = std::sqrt(rec.error_sq);
        j["success"] = rec.success;
        j["residual_fro"] = residual;
        j["epsilon"] = eps;
        j["nodes"] = sol.nodes;
        j["runtime_ms"] = ms;
        j["scenario"] = {{"n", req.n}, {"k", req.k}, {"m", req.m}, {"l", req.l},
                         {"snr_db", req.snr_db ? json(*req.snr_db) : json(nullptr)}, {"seed", req.seed}};
        if (!note.empty()) j["note"] = note;
        out << j.dump(2) << "\n";
        return 0;
    }

    auto list = [](const DeviceSet& s) {
        std::string o = "{";
        for (std::size_t i = 0; i < s.size(); ++i) o += (i ? "," : "") + std::to_string(s[i]);
        return o + "}";
    };
    out << "solver        " << to_string(req.solver) << "\n"
        << "status        " << sol.status << "\n"
        << "objective     " << support.size() << "\n"
        << "support       " << list(support) << "\n"
        << "true support  " << list(sc.support()) << "\n"
        << "nmse_db       " << format_number(rec.nmse_db, 2) << "\n"
        << "error_fro     " << std::sqrt(rec.error_sq) << "\n"
        << "success       " << (rec.success ? "true" : "false") << "\n"
        << "residual_fro  " << residual << " (epsilon " << eps << ")\n"
        << "nodes         " << sol.nodes << "\n"
        << "runtime_ms    " << format_number(ms, 2) << "\n";
    if (!note.empty()) out << "note: " << note << "\n";
    return 0;
}

}  // namespace jadce::cli
