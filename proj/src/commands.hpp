#pragma once

#include <jadce/run_config.hpp>

#include <iosfwd>

namespace jadce::cli {

/// Sweep or figure preset; writes curve files and manifest.json into
/// cfg.output_dir. Returns the process exit code.
int cmd_run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

struct SolveRequest {
    int n = 30;
    int k = 5;
    int m = 2;
    int l = 6;
    std::optional<double> snr_db;
    std::uint64_t seed = 1;
    SolverKind solver = SolverKind::bnb;
    long node_limit = 200000;
    bool json = false;
};

/// One generated instance, one solver; prints a summary.
int cmd_solve(const SolveRequest& req, std::ostream& out, std::ostream& err);

}  // namespace jadce::cli
