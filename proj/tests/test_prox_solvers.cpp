#include <jadce/prox_solvers.hpp>

#include <gtest/gtest.h>

using namespace jadce;

namespace {

double prox_objective(const RealVector& x, const RealVector& g, double t)
{
    return 0.5 * (x - g).squaredNorm() + t * x.norm();
}

// the minimizer lies on the ray through g; bisect the derivative of the
// one-dimensional objective s -> (s - |g|)^2 / 2 + t s on [0, |g|]
RealVector prox_by_search(const RealVector& g, double t)
{
    const double gn = g.norm();
    auto slope = [&](double s) { return (s - gn) + t; };
    if (slope(0.0) >= 0.0) return RealVector::Zero(g.size());
    double a = 0.0, b = gn;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b);
        (slope(mid) < 0.0 ? a : b) = mid;
    }
    return 0.5 * (a + b) * g / gn;
}

struct KktReport {
    double zero_ratio = 0.0;     // max ||g_i|| / (lambda w_i) over zero groups
    double nonzero_resid = 0.0;  // max ||g_i + lambda w_i x_i/||x_i|| || / lambda
};

KktReport kkt(const ComplexMatrix& s, const ComplexMatrix& y, const ComplexMatrix& x, double lambda)
{
    const auto sys = realify(s, y);
    const RealMatrix xr = stack_real(x);
    const RealMatrix g = sys.design.transpose() * (sys.design * xr - sys.observation);
    const int n = sys.n_groups;
    KktReport rep;
    for (int i = 0; i < n; ++i) {
        RealVector gi(2 * g.cols()), xi(2 * g.cols());
        gi << g.row(i).transpose(), g.row(n + i).transpose();
        xi << xr.row(i).transpose(), xr.row(n + i).transpose();
        if (xi.norm() == 0.0) {
            rep.zero_ratio = std::max(rep.zero_ratio, gi.norm() / lambda);
        } else {
            rep.nonzero_resid = std::max(rep.nonzero_resid, (gi + lambda * xi.normalized()).norm() / lambda);
        }
    }
    return rep;
}

}  // namespace

TEST(GroupProx, Examples)
{
    RealMatrix g(1, 2);
    g << 3, 4;
    EXPECT_EQ(group_prox(g, 5.0).norm(), 0.0);
    EXPECT_EQ(group_prox(g, 0.0), g);
    RealMatrix h(1, 2);
    h << 6, 8;
    const RealMatrix p = group_prox(h, 5.0);
    EXPECT_NEAR(p(0, 0), 3.0, 1e-15);
    EXPECT_NEAR(p(0, 1), 4.0, 1e-15);
    EXPECT_EQ(group_prox(RealMatrix::Zero(2, 3), 1.0).norm(), 0.0);
    EXPECT_THROW(group_prox(g, -1.0), argument_error);
}

TEST(GroupProx, AgreesWithNumericalMinimization)
{
    RealVector g(2);
    g << 6, 8;
    const RealVector ref = prox_by_search(g, 5.0);
    RealMatrix h(1, 2);
    h << 6, 8;
    const RealMatrix p = group_prox(h, 5.0);
    EXPECT_NEAR(p(0, 0), ref(0), 1e-8);
    EXPECT_NEAR(p(0, 1), ref(1), 1e-8);

    // no random perturbation does better
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    const RealVector pv = p.row(0).transpose();
    const double best = prox_objective(pv, g, 5.0);
    for (int k = 0; k < 1000; ++k) {
        RealVector d(2);
        d << nd(rng), nd(rng);
        EXPECT_GE(prox_objective(pv + 1e-3 * d, g, 5.0), best - 1e-12);
    }
}

TEST(GroupProx, Nonexpansive)
{
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.0, 3.0);
    int violations = 0;
    for (int k = 0; k < 500; ++k) {
        const int rows = 1 + k % 6, cols = 1 + k % 4;
        RealMatrix a(rows, cols), b(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) {
                a(i, j) = 2.0 * nd(rng);
                b(i, j) = 2.0 * nd(rng);
            }
        const double t = ud(rng);
        if ((group_prox(a, t) - group_prox(b, t)).norm() > (a - b).norm() * (1.0 + 1e-12)) ++violations;
    }
    EXPECT_EQ(violations, 0);
}

TEST(SolveGroupLasso, HugeLambdaGivesZero)
{
    const auto sc = generate_scenario(20, 2, 8, 3, std::nullopt, 1);
    const double lmax = (sc.pilots.adjoint() * sc.observation).rowwise().norm().maxCoeff();
    ProxConfig cfg;
    cfg.lambda = lmax * 1.0001;
    const auto r = solve_group_lasso(sc.pilots, sc.observation, cfg);
    EXPECT_EQ(r.estimate.norm(), 0.0);
    EXPECT_DOUBLE_EQ(r.residual_fro, sc.observation.norm());
}

TEST(SolveGroupLasso, SmallLambdaOnSquareSystem)
{
    const auto sc = generate_scenario(6, 2, 6, 3, std::nullopt, 8);
    ProxConfig cfg;
    cfg.lambda = 1e-7;
    cfg.max_iter = 200000;
    cfg.tol = 0.0;
    const auto r = solve_group_lasso(sc.pilots, sc.observation, cfg);
    const ComplexMatrix exact = sc.pilots.fullPivLu().solve(sc.observation);
    EXPECT_LT(r.residual_fro, 1e-4 * sc.observation.norm());
    EXPECT_LT((r.estimate - exact).norm(), 1e-3 * exact.norm());
}

TEST(SolveGroupLasso, RejectsBadInput)
{
    const auto sc = generate_scenario(6, 1, 4, 2, std::nullopt, 8);
    ProxConfig cfg;
    cfg.lambda = 0.0;
    EXPECT_THROW(solve_group_lasso(sc.pilots, sc.observation, cfg), argument_error);
    cfg.lambda = 0.1;
    ComplexMatrix y = sc.observation;
    y(0, 0) = Complex(std::numeric_limits<double>::quiet_NaN(), 0.0);
    EXPECT_THROW(solve_group_lasso(sc.pilots, y, cfg), argument_error);
    cfg.weights = {1.0, 2.0};
    EXPECT_THROW(solve_group_lasso(sc.pilots, sc.observation, cfg), argument_error);
    EXPECT_THROW(solve_group_lasso(sc.pilots, ComplexMatrix::Zero(3, 1), ProxConfig{}), argument_error);
}

TEST(SolveGroupLasso, KktCertificates)
{
    for (int k = 0; k < 20; ++k) {
        const auto sc = generate_scenario(30, 2, 12, 5, k % 2 ? std::optional<double>(20.0) : std::nullopt, 500 + k);
        const double lmax = (sc.pilots.adjoint() * sc.observation).rowwise().norm().maxCoeff();
        ProxConfig cfg;
        cfg.lambda = (0.02 + 0.01 * k) * lmax;
        const auto r = solve_group_lasso(sc.pilots, sc.observation, cfg);
        const auto rep = kkt(sc.pilots, sc.observation, r.estimate, cfg.lambda);
        EXPECT_LE(rep.zero_ratio, 1.0 + 1e-3) << "instance " << k;
        EXPECT_LE(rep.nonzero_resid, 1e-3) << "instance " << k;
        EXPECT_LE(r.iterations, cfg.max_iter);
        EXPECT_GE(r.residual_fro, 0.0);
    }
}

TEST(SolveGroupLasso, MatchesLongRunReference)
{
    for (int k = 0; k < 20; ++k) {
        const auto sc = generate_scenario(30, 2, 10, 5, std::nullopt, 900 + k);
        const double lmax = (sc.pilots.adjoint() * sc.observation).rowwise().norm().maxCoeff();
        ProxConfig cfg;
        cfg.lambda = 0.05 * lmax;
        const auto r = solve_group_lasso(sc.pilots, sc.observation, cfg);
        ProxConfig longer = cfg;
        longer.max_iter = 10 * cfg.max_iter;
        longer.tol = 0.0;
        const auto ref = solve_group_lasso(sc.pilots, sc.observation, longer);
        EXPECT_LE(r.final_objective - ref.final_objective, 1e-6 * std::abs(ref.final_objective)) << k;
    }
}

TEST(SolveGroupLasso, WarmStartReachesSameObjective)
{
    const auto sc = generate_scenario(30, 2, 10, 5, std::nullopt, 41);
    const double lmax = (sc.pilots.adjoint() * sc.observation).rowwise().norm().maxCoeff();
    ProxConfig cfg;
    cfg.lambda = 0.1 * lmax;
    const auto cold = solve_group_lasso(sc.pilots, sc.observation, cfg);
    cfg.lambda = 0.05 * lmax;
    const auto a = solve_group_lasso(sc.pilots, sc.observation, cfg);
    const auto b = solve_group_lasso(sc.pilots, sc.observation, cfg, &cold.estimate);
    EXPECT_NEAR(a.final_objective, b.final_objective, 1e-8 * a.final_objective);
}

TEST(SolveConstrained, LargeEpsilonGivesZero)
{
    const auto sc = generate_scenario(20, 2, 8, 3, std::nullopt, 4);
    const auto r = solve_constrained(sc.pilots, sc.observation, sc.observation.norm(), ProxConfig{});
    EXPECT_EQ(r.estimate.norm(), 0.0);
}

TEST(SolveConstrained, NoiselessDrivesResidualDown)
{
    const auto sc = generate_scenario(30, 2, 20, 5, std::nullopt, 12);
    const auto r = solve_constrained(sc.pilots, sc.observation, 0.0, ProxConfig{});
    EXPECT_LE(r.residual_fro, 1e-6 * sc.observation.norm());
    const auto direct = least_squares_on_support(sc.pilots, sc.observation, sc.support());
    EXPECT_LT((r.estimate - direct.estimate).norm(), 1e-6);
}

TEST(SolveConstrained, NoisyResidualWithinWindow)
{
    for (int k = 0; k < 10; ++k) {
        const auto sc = generate_scenario(30, 2, 12, 5, 30.0, 70 + k);
        const double eps = std::sqrt(sc.noise_var * 12 * 2) * 1.1;
        const auto r = solve_constrained(sc.pilots, sc.observation, eps, ProxConfig{});
        EXPECT_LE(r.residual_fro, eps * 1.05) << k;
        EXPECT_GE(r.residual_fro, eps * 0.95) << k;
    }
}

TEST(SolveConstrained, UnreachableTargetCarriesBestIterate)
{
    // L > N with noise: the residual floor is positive, so a tiny epsilon cannot be met
    const auto sc = generate_scenario(3, 1, 8, 2, 10.0, 5);
    const auto ls = least_squares_on_support(sc.pilots, sc.observation, {0, 1, 2});
    try {
        solve_constrained(sc.pilots, sc.observation, 0.5 * ls.residual_fro, ProxConfig{});
        FAIL() << "expected convergence_error";
    } catch (const convergence_error& e) {
        EXPECT_EQ(e.best().estimate.rows(), 3);
        EXPECT_GT(e.best().residual_fro, 0.5 * ls.residual_fro);
    }
}

TEST(SolveReweighted, OneOuterIterationIsConstrained)
{
    const auto sc = generate_scenario(30, 2, 12, 5, 30.0, 31);
    const double eps = std::sqrt(sc.noise_var * 12 * 2) * 1.1;
    const auto a = solve_reweighted(sc.pilots, sc.observation, eps, 1, ProxConfig{});
    const auto b = solve_constrained(sc.pilots, sc.observation, eps, ProxConfig{});
    EXPECT_EQ(a.estimate, b.estimate);
}

TEST(SolveReweighted, ZeroTruthLargeEpsilon)
{
    const auto sc = generate_scenario(10, 2, 5, 0, 20.0, 3);
    const auto r = solve_reweighted(sc.pilots, sc.observation, sc.observation.norm() * 1.01, 5, ProxConfig{});
    EXPECT_EQ(r.estimate.norm(), 0.0);
}

TEST(SolveReweighted, RejectsZeroOuterIterations)
{
    const auto sc = generate_scenario(10, 2, 5, 2, std::nullopt, 3);
    EXPECT_THROW(solve_reweighted(sc.pilots, sc.observation, 0.0, 0, ProxConfig{}), argument_error);
}

TEST(SolveReweighted, WeightUpdate)
{
    RealVector nrm(2);
    nrm << 2.0, 0.0;
    const auto w = reweight(nrm, 1e-3);
    EXPECT_DOUBLE_EQ(w[0], 1.0 / 2.001);
    EXPECT_DOUBLE_EQ(w[1], 1000.0);
}

TEST(SolveReweighted, BeatsPlainAtModerateLength)
{
    int plain = 0, rw = 0;
    for (int k = 0; k < 20; ++k) {
        const auto sc = generate_scenario(30, 2, 10, 5, std::nullopt, 1000 + k);
        const auto a = solve_constrained(sc.pilots, sc.observation, 0.0, ProxConfig{});
        const auto b = solve_reweighted(sc.pilots, sc.observation, 0.0, 8, ProxConfig{});
        plain += (a.estimate - sc.ground_truth).norm() <= 1e-5;
        rw += (b.estimate - sc.ground_truth).norm() <= 1e-5;
    }
    EXPECT_GE(rw, plain);
}

TEST(Debias, RefitsDetectedRows)
{
    const auto sc = generate_scenario(30, 2, 14, 5, std::nullopt, 55);
    ComplexMatrix shrunk = 0.7 * sc.ground_truth;
    shrunk(sc.support().front() == 0 ? 1 : 0, 0) = Complex(1e-4, 0);  // spurious small row
    const auto fit = debias(sc.pilots, sc.observation, shrunk, default_gamma0(shrunk));
    EXPECT_LT((fit.estimate - sc.ground_truth).norm(), 1e-9);
}
