#pragma once

#include "core_model.hpp"
#include "least_squares.hpp"

#include <limits>
#include <stdexcept>
#include <utility>

namespace jadce {

struct ProxConfig {
    int max_iter = 3000;
    /// stop when the relative objective decrease of an accepted step falls below tol
    double tol = 1e-11;
    double lambda = 0.0;
    /// per-group weights; empty means all ones
    std::vector<double> weights;

    // lambda search used by the constrained and reweighted solvers
    double lambda_min_ratio = 1e-8;
    int path_steps_per_decade = 4;
    int max_bisection_steps = 50;
    double residual_window = 0.05;

    // reweighting
    double reweight_delta = 1e-3;
    double reweight_delta_floor = 1e-8;
    bool stop_on_stable_support = true;

    void validate(int n_groups) const
    {
        if (max_iter < 1) throw argument_error("ProxConfig: max_iter must be >= 1");
        if (!(tol >= 0.0)) throw argument_error("ProxConfig: tol must be >= 0");
        if (!(lambda >= 0.0)) throw argument_error("ProxConfig: lambda must be >= 0");
        if (!weights.empty()) {
            if (static_cast<int>(weights.size()) != n_groups)
                throw argument_error("ProxConfig: weights length must equal the number of devices");
            for (double w : weights)
                if (!(w >= 0.0) || !std::isfinite(w))
                    throw argument_error("ProxConfig: weights must be finite and >= 0");
        }
    }
};

struct ProxResult {
    ComplexMatrix estimate;
    int iterations = 0;
    double final_objective = 0.0;
    double residual_fro = 0.0;
    bool converged = false;
    double lambda = 0.0;
    /// estimate before the least-squares refit (equal to estimate when no refit ran)
    ComplexMatrix raw_estimate;
};

class convergence_error : public std::runtime_error {
public:
    convergence_error(const std::string& what, ProxResult best)
        : std::runtime_error(what), best_(std::move(best))
    {}
    const ProxResult& best() const noexcept { return best_; }

private:
    ProxResult best_;
};

/// Block soft-thresholding, one group per row: g -> max(0, 1 - t/||g||) g.
inline RealMatrix group_prox(const RealMatrix& groups, double threshold)
{
    if (!(threshold >= 0.0)) throw argument_error("group_prox: threshold must be >= 0");
    RealMatrix out = groups;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double nrm = out.row(r).norm();
        const double scale = nrm > threshold ? 1.0 - threshold / nrm : 0.0;
        out.row(r) *= scale;
    }
    return out;
}

/// Activity threshold used for support detection and debiasing:
/// gamma0 = max(1e-6, 0.05 * max_i ||X_i||_2).
inline double default_gamma0(const ComplexMatrix& estimate)
{
    const double mx = estimate.size() ? row_group_norms(estimate).maxCoeff() : 0.0;
    return std::max(1e-6, 0.05 * mx);
}

inline DeviceSet rows_at_least(const ComplexMatrix& estimate, double gamma0)
{
    DeviceSet s;
    const RealVector nrm = row_group_norms(estimate);
    for (Eigen::Index i = 0; i < nrm.size(); ++i)
        if (nrm(i) >= gamma0) s.push_back(static_cast<int>(i));
    return s;
}

/// Least-squares refit on the rows the estimate declares active.
inline SupportFit debias(const ComplexMatrix& pilots, const ComplexMatrix& observation,
                         const ComplexMatrix& estimate, double gamma0)
{
    return least_squares_on_support(pilots, observation, rows_at_least(estimate, gamma0));
}

namespace detail {

/// Weighted group lasso on the lifted system,
///   minimize 1/2 ||B - A X||_F^2 + lambda * sum_i w_i ||X_{i,N+i}||,
/// by FISTA with function-value restart.
class GroupLassoProblem {
public:
    GroupLassoProblem(const ComplexMatrix& pilots, const ComplexMatrix& observation)
        : pilots_(pilots), observation_(observation), sys_(realify(pilots, observation))
    {
        n_ = sys_.n_groups;
        at_b_ = sys_.design.transpose() * sys_.observation;
        lipschitz_ = 1.02 * squared_spectral_norm(sys_.design);
    }

    int n_groups() const { return n_; }
    const RealifiedSystem& system() const { return sys_; }
    const ComplexMatrix& pilots() const { return pilots_; }
    const ComplexMatrix& observation() const { return observation_; }
    double lipschitz() const { return lipschitz_; }

    /// Smallest lambda with the all-zero solution: max_i ||(A^T B)_i|| / w_i.
    double lambda_max(const std::vector<double>& w) const
    {
        const RealVector g = real_group_norms(at_b_);
        double mx = 0.0;
        for (int i = 0; i < n_; ++i) {
            const double wi = w.empty() ? 1.0 : w[i];
            if (wi > 0.0) mx = std::max(mx, g(i) / wi);
        }
        return mx;
    }

    double residual(const RealMatrix& x) const { return (sys_.design * x - sys_.observation).norm(); }

    double penalty(const RealMatrix& x, const std::vector<double>& w) const
    {
        const RealVector g = real_group_norms(x);
        double p = 0.0;
        for (int i = 0; i < n_; ++i) p += (w.empty() ? 1.0 : w[i]) * g(i);
        return p;
    }

    double objective(const RealMatrix& x, double lambda, const std::vector<double>& w) const
    {
        const double r = residual(x);
        return 0.5 * r * r + lambda * penalty(x, w);
    }

    RealMatrix gradient(const RealMatrix& x) const
    {
        return sys_.design.transpose() * (sys_.design * x) - at_b_;
    }

    void prox_inplace(RealMatrix& x, double t, const std::vector<double>& w) const
    {
        for (int i = 0; i < n_; ++i) {
            const double thr = t * (w.empty() ? 1.0 : w[i]);
            const double nrm = std::sqrt(x.row(i).squaredNorm() + x.row(n_ + i).squaredNorm());
            const double scale = nrm > thr ? 1.0 - thr / nrm : 0.0;
            x.row(i) *= scale;
            x.row(n_ + i) *= scale;
        }
    }

    struct Fit {
        RealMatrix x;
        int iterations = 0;
        double objective = 0.0;
        bool converged = false;
    };

    Fit solve(double lambda, const std::vector<double>& w, const RealMatrix& warm, int max_iter,
              double tol) const
    {
        const double step = 1.0 / lipschitz_;
        Fit f;
        f.x = warm;
        f.objective = objective(f.x, lambda, w);
        if (lipschitz_ <= 0.0) {
            f.converged = true;
            return f;
        }
        RealMatrix y = f.x;
        RealMatrix x_new(f.x.rows(), f.x.cols());
        double t = 1.0;
        for (int k = 0; k < max_iter; ++k) {
            ++f.iterations;
            x_new = y - step * gradient(y);
            prox_inplace(x_new, step * lambda, w);
            const double obj_new = objective(x_new, lambda, w);
            if (obj_new > f.objective) {
                // momentum overshoot: restart from the current iterate
                if (t == 1.0) {
                    f.converged = true;
                    break;
                }
                t = 1.0;
                y = f.x;
                continue;
            }
            const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            y = x_new + ((t - 1.0) / t_new) * (x_new - f.x);
            const double rel = (f.objective - obj_new) / std::max(f.objective, 1e-300);
            f.x.swap(x_new);
            f.objective = obj_new;
            t = t_new;
            if (rel <= tol) {
                f.converged = true;
                break;
            }
        }
        return f;
    }

    ProxResult to_result(const Fit& f, double lambda) const
    {
        ProxResult r;
        r.estimate = derealify(f.x);
        r.raw_estimate = r.estimate;
        r.iterations = f.iterations;
        r.final_objective = f.objective;
        r.residual_fro = residual(f.x);
        r.converged = f.converged;
        r.lambda = lambda;
        return r;
    }

    static double squared_spectral_norm(const RealMatrix& a)
    {
        if (a.size() == 0) return 0.0;
        std::mt19937_64 rng(0x5eedULL);
        std::normal_distribution<double> normal(0.0, 1.0);
        RealVector v(a.cols());
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
        double est = 0.0;
        for (int k = 0; k < 30; ++k) {
            const double nv = v.norm();
            if (nv == 0.0) return 0.0;
            v /= nv;
            RealVector w = a.transpose() * (a * v);
            est = v.dot(w);
            v.swap(w);
        }
        return est;
    }

private:
    ComplexMatrix pilots_;
    ComplexMatrix observation_;
    RealifiedSystem sys_;
    int n_ = 0;
    RealMatrix at_b_;
    double lipschitz_ = 0.0;
};

inline void check_inputs(const ComplexMatrix& pilots, const ComplexMatrix& observation)
{
    if (pilots.rows() != observation.rows())
        throw argument_error("solver: pilots and observation row counts differ");
    if (!all_finite(pilots) || !all_finite(observation))
        throw argument_error("solver: non-finite input");
}

inline ProxResult zero_result(const GroupLassoProblem& p, double lambda)
{
    ProxResult r;
    r.estimate = ComplexMatrix::Zero(p.n_groups(), p.observation().cols());
    r.raw_estimate = r.estimate;
    r.residual_fro = p.observation().norm();
    r.final_objective = 0.5 * r.residual_fro * r.residual_fro;
    r.converged = true;
    r.lambda = lambda;
    return r;
}

/// Residual-targeted lambda search shared by the constrained and reweighted
/// solvers. Walks lambda down a geometric path from lambda_max with warm
/// starts; for epsilon > 0 it stops once the residual drops to the target
/// window and bisects (in log lambda) inside the last bracket.
inline ProxResult constrained_search(const GroupLassoProblem& p, double epsilon, const ProxConfig& cfg,
                                     RealMatrix* warm_out = nullptr)
{
    const auto& w = cfg.weights;
    const double lmax = p.lambda_max(w);
    const double ynorm = p.observation().norm();
    const RealMatrix zero = RealMatrix::Zero(2 * p.n_groups(), p.observation().cols());
    if (epsilon >= ynorm || lmax <= 0.0) {
        if (warm_out) *warm_out = zero;
        return zero_result(p, lmax);
    }
    const double lmin = cfg.lambda_min_ratio * lmax;
    const double ratio = std::pow(10.0, -1.0 / std::max(1, cfg.path_steps_per_decade));
    const double hi_target = epsilon * (1.0 + cfg.residual_window);
    const double lo_target = epsilon * (1.0 - cfg.residual_window);

    int total_iters = 0;
    auto run = [&](double lambda, const RealMatrix& warm) {
        auto f = p.solve(lambda, w, warm, cfg.max_iter, cfg.tol);
        total_iters += f.iterations;
        return f;
    };

    // descend the path until the residual reaches the target (or lambda_min)
    double lam_hi = lmax;
    GroupLassoProblem::Fit fit_hi{zero, 0, 0.5 * ynorm * ynorm, true};
    double lam = lmax;
    GroupLassoProblem::Fit fit = fit_hi;
    bool reached = false;
    while (lam > lmin) {
        lam = std::max(lmin, lam * ratio);
        fit = run(lam, fit.x);
        if (p.residual(fit.x) <= hi_target) {
            reached = true;
            break;
        }
        lam_hi = lam;
        fit_hi = fit;
    }

    auto finish = [&](const GroupLassoProblem::Fit& f, double lambda) {
        ProxResult r = p.to_result(f, lambda);
        r.iterations = total_iters;
        if (warm_out) *warm_out = f.x;
        return r;
    };

    if (epsilon == 0.0) return finish(fit, lam);
    if (!reached) {
        ProxResult best = finish(fit, lam);
        throw convergence_error("constrained solve: residual target below the reachable range", best);
    }
    double lam_lo = lam;
    GroupLassoProblem::Fit fit_lo = fit;
    if (p.residual(fit_lo.x) >= lo_target) return finish(fit_lo, lam_lo);

    // residual(lam_lo) < lo_target <= hi_target < residual(lam_hi)
    for (int step = 0; step < cfg.max_bisection_steps; ++step) {
        const double mid = std::sqrt(lam_lo * lam_hi);
        auto f = run(mid, fit_lo.x);
        const double res = p.residual(f.x);
        if (res >= lo_target && res <= hi_target) return finish(f, mid);
        if (res > hi_target) {
            lam_hi = mid;
            fit_hi = std::move(f);
        } else {
            lam_lo = mid;
            fit_lo = std::move(f);
        }
    }
    // the low end is always feasible for ||Y - SX|| <= epsilon
    ProxResult best = finish(fit_lo, lam_lo);
    if (best.residual_fro <= epsilon) return best;
    throw convergence_error("constrained solve: bisection did not bracket the residual target", best);
}

}  // namespace detail

inline ProxResult solve_group_lasso(const ComplexMatrix& pilots, const ComplexMatrix& observation,
                                    const ProxConfig& config,
                                    const ComplexMatrix* warm_start = nullptr)
{
    detail::check_inputs(pilots, observation);
    config.validate(static_cast<int>(pilots.cols()));
    if (!(config.lambda > 0.0)) throw argument_error("solve_group_lasso: lambda must be > 0");
    detail::GroupLassoProblem p(pilots, observation);
    RealMatrix warm = warm_start ? stack_real(*warm_start)
                                 : RealMatrix::Zero(2 * p.n_groups(), observation.cols());
    auto f = p.solve(config.lambda, config.weights, warm, config.max_iter, config.tol);
    return p.to_result(f, config.lambda);
}

/// Group lasso with the residual constraint ||Y - SX||_F <= epsilon enforced
/// through the regularization weight. epsilon = 0 runs the full path down to
/// lambda_min and refits least squares on the detected rows.
inline ProxResult solve_constrained(const ComplexMatrix& pilots, const ComplexMatrix& observation,
                                    double epsilon, const ProxConfig& config)
{
    detail::check_inputs(pilots, observation);
    config.validate(static_cast<int>(pilots.cols()));
    if (!(epsilon >= 0.0)) throw argument_error("solve_constrained: epsilon must be >= 0");
    detail::GroupLassoProblem p(pilots, observation);
    ProxResult r = detail::constrained_search(p, epsilon, config);
    if (epsilon == 0.0) {
        const auto fit = debias(pilots, observation, r.estimate, default_gamma0(r.estimate));
        r.estimate = fit.estimate;
        r.residual_fro = fit.residual_fro;
    }
    return r;
}

/// Iteratively reweighted group lasso: w_i = 1 initially, then
/// w_i <- 1 / (||X_i|| + delta) with delta = 1e-3 * max_i ||X_i|| (floored).
inline ProxResult solve_reweighted(const ComplexMatrix& pilots, const ComplexMatrix& observation,
                                   double epsilon, int outer_iters, const ProxConfig& config)
{
    detail::check_inputs(pilots, observation);
    config.validate(static_cast<int>(pilots.cols()));
    if (outer_iters < 1) throw argument_error("solve_reweighted: outer_iters must be >= 1");
    if (!(epsilon >= 0.0)) throw argument_error("solve_reweighted: epsilon must be >= 0");

    detail::GroupLassoProblem p(pilots, observation);
    const int n = p.n_groups();
    ProxConfig cfg = config;
    cfg.weights.assign(n, 1.0);

    ProxResult r;
    DeviceSet prev_support;
    int total_iters = 0;
    for (int outer = 0; outer < outer_iters; ++outer) {
        r = detail::constrained_search(p, epsilon, cfg);
        total_iters += r.iterations;
        const DeviceSet support = rows_at_least(r.estimate, default_gamma0(r.estimate));
        if (outer > 0 && cfg.stop_on_stable_support && support == prev_support) break;
        prev_support = support;

        const RealVector nrm = row_group_norms(r.estimate);
        const double mx = nrm.size() ? nrm.maxCoeff() : 0.0;
        const double delta = std::max(cfg.reweight_delta_floor, cfg.reweight_delta * mx);
        for (int i = 0; i < n; ++i) cfg.weights[i] = 1.0 / (nrm(i) + delta);
    }
    r.iterations = total_iters;
    if (epsilon == 0.0) {
        const auto fit = debias(pilots, observation, r.estimate, default_gamma0(r.estimate));
        r.estimate = fit.estimate;
        r.residual_fro = fit.residual_fro;
    }
    return r;
}

/// Weight update of the reweighting loop, exposed for inspection.
inline std::vector<double> reweight(const RealVector& row_norms, double delta)
{
    std::vector<double> w(row_norms.size());
    for (Eigen::Index i = 0; i < row_norms.size(); ++i) w[i] = 1.0 / (row_norms(i) + delta);
    return w;
}

}  // namespace jadce
