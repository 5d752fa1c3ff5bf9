#pragma once

#include "core_model.hpp"
#include "exact_solver.hpp"
#include "prox_solvers.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>

namespace jadce {

inline constexpr double kNmseFloorDb = -320.0;

inline double ratio_to_db(double ratio)
{
    if (!(ratio > 0.0)) return kNmseFloorDb;
    return std::max(kNmseFloorDb, 10.0 * std::log10(ratio));
}

/// 10 log10(||X_hat - X*||_F^2 / ||X*||_F^2), floored at -320 dB.
inline double nmse_db(const ComplexMatrix& estimate, const ComplexMatrix& truth)
{
    if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
        throw argument_error("nmse_db: dimension mismatch");
    const double den = truth.squaredNorm();
    if (!(den > 0.0)) throw argument_error("nmse_db: truth must be nonzero");
    return ratio_to_db((estimate - truth).squaredNorm() / den);
}

inline std::vector<int> detect_activity(const ComplexMatrix& estimate, double gamma0)
{
    if (!(gamma0 > 0.0)) throw argument_error("detect_activity: gamma0 must be > 0");
    std::vector<int> a(estimate.rows(), 0);
    const RealVector nrm = row_group_norms(estimate);
    for (Eigen::Index i = 0; i < nrm.size(); ++i) a[i] = nrm(i) >= gamma0 ? 1 : 0;
    return a;
}

struct EpsilonRule {
    double headroom = 0.1;
};

/// Residual budget: sqrt(sigma^2 L M) (1 + headroom), 0 when noiseless.
inline double calibrate_epsilon(double noise_var, int pilot_len, int n_antennas, EpsilonRule rule = {})
{
    if (noise_var <= 0.0) return 0.0;
    return std::sqrt(noise_var * pilot_len * n_antennas) * (1.0 + rule.headroom);
}

struct Gamma0Rule {
    double ratio = 0.05;
    double floor = 1e-6;
    double operator()(const ComplexMatrix& estimate) const
    {
        const double mx = estimate.size() ? row_group_norms(estimate).maxCoeff() : 0.0;
        return std::max(floor, ratio * mx);
    }
};

enum class SolverKind { group_lasso, reweighted, bnb, oracle };

inline const char* to_string(SolverKind s)
{
    switch (s) {
    case SolverKind::group_lasso: return "grouplasso";
    case SolverKind::reweighted: return "reweighted";
    case SolverKind::bnb: return "bnb";
    case SolverKind::oracle: return "oracle";
    }
    return "unknown";
}

inline SolverKind parse_solver(const std::string& s)
{
    if (s == "grouplasso" || s == "group-lasso") return SolverKind::group_lasso;
    if (s == "reweighted") return SolverKind::reweighted;
    if (s == "bnb") return SolverKind::bnb;
    if (s == "oracle") return SolverKind::oracle;
    throw argument_error("unknown solver '" + s + "'");
}

struct ExperimentSpec {
    int n_devices = 30;
    int n_antennas = 2;
    int n_active = 5;
    std::vector<int> pilot_lengths;
    std::optional<double> snr_db;
    int trials = 100;
    std::uint64_t base_seed = 1;
    std::vector<SolverKind> solvers{SolverKind::group_lasso, SolverKind::reweighted, SolverKind::bnb};
    double success_tol = 1e-5;
    Gamma0Rule gamma0;
    EpsilonRule epsilon_rule;
    long node_limit = 200000;
    int reweight_outer_iters = 8;
    ProxConfig prox;
    /// 0 = take GS_THREADS or the hardware concurrency
    int threads = 0;

    void validate() const
    {
        if (trials < 1) throw argument_error("ExperimentSpec: trials must be >= 1");
        if (pilot_lengths.empty()) throw argument_error("ExperimentSpec: pilot_lengths must be nonempty");
        for (int l : pilot_lengths)
            if (l < 1) throw argument_error("ExperimentSpec: pilot lengths must be positive");
        if (n_devices < 1 || n_antennas < 1) throw argument_error("ExperimentSpec: dimensions must be positive");
        if (n_active < 0 || n_active > n_devices) throw argument_error("ExperimentSpec: n_active out of range");
        if (!(success_tol > 0.0)) throw argument_error("ExperimentSpec: success_tol must be > 0");
        if (node_limit < 1) throw argument_error("ExperimentSpec: node_limit must be >= 1");
        if (solvers.empty()) throw argument_error("ExperimentSpec: no solvers selected");
    }
};

struct TrialRecord {
    int pilot_len = 0;
    int trial = 0;
    std::uint64_t seed = 0;
    SolverKind solver = SolverKind::bnb;
    double nmse_db = 0.0;  // NaN when the ground truth is zero
    bool success = false;
    int detect_miss = 0;
    int detect_false = 0;
    double runtime_ms = 0.0;
    std::string status;
    double error_sq = 0.0;
    double truth_sq = 0.0;
    int support_size = 0;
    long nodes = 0;
};

struct PointSummary {
    int pilot_len = 0;
    SolverKind solver = SolverKind::bnb;
    int trials = 0;
    double success_rate = 0.0;
    /// 10 log10 of the trial-averaged ratio ||X_hat - X*||^2 / ||X*||^2
    double nmse_db = 0.0;
    double mean_miss = 0.0;
    double mean_false = 0.0;
    double optimal_rate = 0.0;
    double mean_runtime_ms = 0.0;
};

struct SweepResult {
    std::vector<TrialRecord> records;
    std::vector<PointSummary> summaries;

    const PointSummary* find(int pilot_len, SolverKind solver) const
    {
        for (const auto& s : summaries)
            if (s.pilot_len == pilot_len && s.solver == solver) return &s;
        return nullptr;
    }
};

inline std::uint64_t trial_seed(std::uint64_t base_seed, int pilot_len, int trial)
{
    return derive_seed(base_seed, static_cast<std::uint64_t>(pilot_len), static_cast<std::uint64_t>(trial));
}

inline int worker_count(int requested = 0)
{
    if (requested > 0) return requested;
    if (const char* env = std::getenv("GS_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, count) on up to `workers` threads.
inline void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& body)
{
    workers = std::max(1, std::min<int>(workers, static_cast<int>(count)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(failure_mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Estimate and status of one solver on one scenario.
struct SolveOutcome {
    ComplexMatrix estimate;
    std::string status;
    long nodes = 0;
    bool optimal = false;
};

inline SolveOutcome run_solver(SolverKind kind, const Scenario& sc, double epsilon, const ExperimentSpec& spec)
{
    SolveOutcome out;
    const auto& s = sc.pilots;
    const auto& y = sc.observation;
    auto debiased = [&](const ComplexMatrix& raw) {
        return debias(s, y, raw, spec.gamma0(raw)).estimate;
    };
    try {
        switch (kind) {
        case SolverKind::group_lasso: {
            auto r = solve_constrained(s, y, epsilon, spec.prox);
            out.estimate = debiased(r.raw_estimate);
            out.status = r.converged ? "converged" : "max-iter";
            break;
        }
        case SolverKind::reweighted: {
            auto r = solve_reweighted(s, y, epsilon, spec.reweight_outer_iters, spec.prox);
            out.estimate = debiased(r.raw_estimate);
            out.status = r.converged ? "converged" : "max-iter";
            break;
        }
        case SolverKind::bnb: {
            auto r = bnb_solve(make_instance(s, y, epsilon), spec.node_limit);
            out.estimate = r.estimate;
            out.status = to_string(r.status);
            out.nodes = r.nodes_explored;
            out.optimal = r.status == ExactStatus::optimal;
            break;
        }
        case SolverKind::oracle: {
            auto r = brute_force_min_support(make_instance(s, y, epsilon));
            out.estimate = r.estimate;
            out.status = to_string(r.status);
            out.nodes = r.nodes_explored;
            out.optimal = r.status == ExactStatus::optimal;
            break;
        }
        }
    } catch (const convergence_error& e) {
        out.estimate = debiased(e.best().raw_estimate);
        out.status = "convergence-error";
    } catch (const std::exception& e) {
        out.estimate = ComplexMatrix::Zero(sc.n_devices, sc.n_antennas);
        out.status = std::string("error: ") + e.what();
    }
    return out;
}

inline TrialRecord evaluate_trial(const Scenario& sc, SolverKind kind, const SolveOutcome& out,
                                  const ExperimentSpec& spec)
{
    TrialRecord rec;
    rec.pilot_len = sc.pilot_len;
    rec.seed = sc.seed;
    rec.solver = kind;
    rec.status = out.status;
    rec.nodes = out.nodes;
    rec.error_sq = (out.estimate - sc.ground_truth).squaredNorm();
    rec.truth_sq = sc.ground_truth.squaredNorm();
    rec.success = std::sqrt(rec.error_sq) <= spec.success_tol;
    rec.nmse_db = rec.truth_sq > 0.0 ? nmse_db(out.estimate, sc.ground_truth)
                                     : std::numeric_limits<double>::quiet_NaN();
    const auto detected = detect_activity(out.estimate, spec.gamma0(out.estimate));
    for (int i = 0; i < sc.n_devices; ++i) {
        rec.detect_miss += sc.activity[i] && !detected[i];
        rec.detect_false += !sc.activity[i] && detected[i];
        rec.support_size += detected[i];
    }
    return rec;
}

/// All solvers of the spec on trial t at pilot length L.
inline std::vector<TrialRecord> run_trial(const ExperimentSpec& spec, int pilot_len, int trial)
{
    const auto seed = trial_seed(spec.base_seed, pilot_len, trial);
    const Scenario sc =
        generate_scenario(spec.n_devices, spec.n_antennas, pilot_len, spec.n_active, spec.snr_db, seed);
    const double eps = calibrate_epsilon(sc.noise_var, pilot_len, spec.n_antennas, spec.epsilon_rule);
    std::vector<TrialRecord> recs;
    for (SolverKind kind : spec.solvers) {
        const auto t0 = std::chrono::steady_clock::now();
        const SolveOutcome out = run_solver(kind, sc, eps, spec);
        const auto t1 = std::chrono::steady_clock::now();
        TrialRecord rec = evaluate_trial(sc, kind, out, spec);
        rec.trial = trial;
        rec.runtime_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        recs.push_back(std::move(rec));
    }
    return recs;
}

inline std::vector<PointSummary> summarize(const std::vector<TrialRecord>& records,
                                           const std::vector<int>& pilot_lengths,
                                           const std::vector<SolverKind>& solvers)
{
    std::vector<PointSummary> out;
    for (int l : pilot_lengths)
        for (SolverKind kind : solvers) {
            PointSummary p;
            p.pilot_len = l;
            p.solver = kind;
            double ratio_sum = 0.0;
            int ratio_count = 0;
            int optimal = 0;
            for (const auto& r : records) {
                if (r.pilot_len != l || r.solver != kind) continue;
                ++p.trials;
                p.success_rate += r.success;
                p.mean_miss += r.detect_miss;
                p.mean_false += r.detect_false;
                p.mean_runtime_ms += r.runtime_ms;
                optimal += r.status == "optimal";
                if (r.truth_sq > 0.0) {
                    ratio_sum += r.error_sq / r.truth_sq;
                    ++ratio_count;
                }
            }
            if (p.trials > 0) {
                p.success_rate /= p.trials;
                p.mean_miss /= p.trials;
                p.mean_false /= p.trials;
                p.mean_runtime_ms /= p.trials;
                p.optimal_rate = static_cast<double>(optimal) / p.trials;
            }
            p.nmse_db = ratio_count > 0 ? ratio_to_db(ratio_sum / ratio_count)
                                        : std::numeric_limits<double>::quiet_NaN();
            out.push_back(p);
        }
    return out;
}

/// Seeded Monte-Carlo sweep. Each (L, trial) scenario is shared by all
/// solvers; record order is (L, trial, solver) regardless of thread count.
inline SweepResult run_sweep(const ExperimentSpec& spec)
{
    spec.validate();
    const std::size_t per_l = static_cast<std::size_t>(spec.trials);
    const std::size_t units = spec.pilot_lengths.size() * per_l;
    std::vector<std::vector<TrialRecord>> slots(units);
    parallel_for(units, worker_count(spec.threads), [&](std::size_t u) {
        const int l = spec.pilot_lengths[u / per_l];
        const int t = static_cast<int>(u % per_l);
        slots[u] = run_trial(spec, l, t);
    });
    SweepResult res;
    for (auto& s : slots)
        for (auto& r : s) res.records.push_back(std::move(r));
    res.summaries = summarize(res.records, spec.pilot_lengths, spec.solvers);
    return res;
}

struct MinPilotEntry {
    int n_active = 0;
    std::optional<int> min_pilot_len;
    /// success rate at each scanned L, in scan order
    std::vector<std::pair<int, double>> scanned;
};

/// For each K, the smallest L in spec.pilot_lengths (scanned ascending)
/// at which the exact solver's success rate reaches success_target.
inline std::vector<MinPilotEntry> min_pilot_length(const ExperimentSpec& base, const std::vector<int>& k_range,
                                                   double success_target)
{
    if (!(success_target > 0.0 && success_target <= 1.0))
        throw argument_error("min_pilot_length: success_target must lie in (0, 1]");
    ExperimentSpec spec = base;
    SolverKind kind = SolverKind::bnb;
    for (SolverKind s : base.solvers)
        if (s == SolverKind::oracle) kind = SolverKind::oracle;
    spec.solvers = {kind};
    std::sort(spec.pilot_lengths.begin(), spec.pilot_lengths.end());

    std::vector<MinPilotEntry> out;
    for (int k : k_range) {
        MinPilotEntry e;
        e.n_active = k;
        spec.n_active = k;
        for (int l : spec.pilot_lengths) {
            ExperimentSpec one = spec;
            one.pilot_lengths = {l};
            const auto res = run_sweep(one);
            const double rate = res.summaries.front().success_rate;
            e.scanned.emplace_back(l, rate);
            if (rate >= success_target) {
                e.min_pilot_len = l;
                break;
            }
        }
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace jadce
