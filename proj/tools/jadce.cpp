// jadce command-line front end: run | solve | oracle
#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct RunFlags {
    std::optional<std::string> config, preset, n, k, m, l, l_range, k_range, snr, trials, seed, solvers, node_limit,
        out, format, success_tol, outer_iters, threads;
};

jadce::KeyValues collect(const RunFlags& f)
{
    jadce::KeyValues kv;
    auto add = [&](const char* key, const std::optional<std::string>& v) {
        if (v) kv.emplace_back(key, *v);
    };
    add("preset", f.preset);
    add("n", f.n);
    add("k", f.k);
    add("m", f.m);
    add("l", f.l);
    add("l-range", f.l_range);
    add("k-range", f.k_range);
    add("snr", f.snr);
    add("trials", f.trials);
    add("seed", f.seed);
    add("solvers", f.solvers);
    add("node-limit", f.node_limit);
    add("out", f.out);
    add("format", f.format);
    add("success-tol", f.success_tol);
    add("outer-iters", f.outer_iters);
    add("threads", f.threads);
    return kv;
}

void add_solve_options(CLI::App* cmd, jadce::cli::SolveRequest& req, std::optional<double>& snr,
                       std::optional<std::string>* solver)
{
    cmd->add_option("--n", req.n, "devices N")->capture_default_str();
    cmd->add_option("--k", req.k, "active devices K")->capture_default_str();
    cmd->add_option("--m", req.m, "antennas M")->capture_default_str();
    cmd->add_option("--l", req.l, "pilot length L")->capture_default_str();
    cmd->add_option("--snr", snr, "SNR in dB (omit for noiseless)");
    cmd->add_option("--seed", req.seed, "scenario seed")->capture_default_str();
    cmd->add_option("--node-limit", req.node_limit, "branch-and-bound node limit")->capture_default_str();
    cmd->add_flag("--json", req.json, "print JSON instead of text");
    if (solver) cmd->add_option("--solver,--solvers", *solver, "grouplasso | reweighted | bnb | oracle");
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Joint activity detection and channel estimation: solvers and Monte-Carlo sweeps"};
    app.set_version_flag("--version", jadce::kVersion);
    app.require_subcommand(1);

    RunFlags rf;
    auto* run = app.add_subcommand("run", "run a sweep or a figure preset, writing curve files");
    run->add_option("--config", rf.config, "flat key = value config file");
    run->add_option("--preset", rf.preset, "fig1 | fig2 | fig3 | fig4");
    run->add_option("--n", rf.n, "devices N");
    run->add_option("--k", rf.k, "active devices K");
    run->add_option("--m", rf.m, "antennas M");
    run->add_option("--l", rf.l, "pilot length(s), e.g. 6 or 2,4,6 or 2:20");
    run->add_option("--l-range", rf.l_range, "pilot length range lo:hi");
    run->add_option("--k-range", rf.k_range, "K values scanned by fig3");
    run->add_option("--snr", rf.snr, "SNR in dB, or 'none'");
    run->add_option("--trials", rf.trials, "trials per point");
    run->add_option("--seed", rf.seed, "base seed");
    run->add_option("--solvers", rf.solvers, "comma list of grouplasso, reweighted, bnb, oracle");
    run->add_option("--node-limit", rf.node_limit, "branch-and-bound node limit");
    run->add_option("--out", rf.out, "output directory");
    run->add_option("--format", rf.format, "csv | json");
    run->add_option("--success-tol", rf.success_tol, "success threshold on ||X_hat - X*||_F");
    run->add_option("--outer-iters", rf.outer_iters, "reweighting rounds");
    run->add_option("--threads", rf.threads, "worker threads (default GS_THREADS or all cores)");

    jadce::cli::SolveRequest sreq;
    std::optional<double> ssnr;
    std::optional<std::string> ssolver;
    auto* solve = app.add_subcommand("solve", "solve one generated instance and print a summary");
    add_solve_options(solve, sreq, ssnr, &ssolver);

    jadce::cli::SolveRequest oreq;
    oreq.n = 10;
    oreq.k = 2;
    oreq.l = 4;
    std::optional<double> osnr;
    auto* oracle = app.add_subcommand("oracle", "brute-force minimum support of one generated instance");
    add_solve_options(oracle, oreq, osnr, nullptr);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (run->parsed()) {
            const jadce::KeyValues file = rf.config ? jadce::read_config_file(*rf.config) : jadce::KeyValues{};
            const auto cfg = jadce::build_config(file, collect(rf));
            return jadce::cli::cmd_run(cfg, std::cout, std::cerr);
        }
        if (solve->parsed()) {
            sreq.snr_db = ssnr;
            if (ssolver) sreq.solver = jadce::parse_solver(*ssolver);
            return jadce::cli::cmd_solve(sreq, std::cout, std::cerr);
        }
        oreq.snr_db = osnr;
        oreq.solver = jadce::SolverKind::oracle;
        return jadce::cli::cmd_solve(oreq, std::cout, std::cerr);
    } catch (const jadce::config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const jadce::argument_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
