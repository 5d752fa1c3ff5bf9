#include <jadce/exact_solver.hpp>
#include <jadce/harness.hpp>

#include <gtest/gtest.h>

using namespace jadce;

namespace {

MiqcpInstance noiseless_instance(const Scenario& sc) { return make_instance(sc.pilots, sc.observation, 0.0); }

MiqcpInstance noisy_instance(const Scenario& sc)
{
    return make_instance(sc.pilots, sc.observation, calibrate_epsilon(sc.noise_var, sc.pilot_len, sc.n_antennas));
}

BnbNode root_node(int n)
{
    BnbNode node;
    node.undecided.resize(n);
    std::iota(node.undecided.begin(), node.undecided.end(), 0);
    return node;
}

}  // namespace

TEST(ComputeBeta, ThreeSigmaRule)
{
    const auto sc = generate_scenario(30, 2, 8, 5, std::nullopt, 1);
    EXPECT_NEAR(compute_beta(sc.pilots, sc.observation, 0.0), 6.0 / std::sqrt(2.0), 1e-12);
    const auto zero = generate_scenario(10, 2, 4, 0, std::nullopt, 1);
    EXPECT_NEAR(compute_beta(zero.pilots, zero.observation, 0.0), 4.2426406871, 1e-9);
}

TEST(ComputeBeta, CoversGeneratedChannels)
{
    int covered = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto sc = generate_scenario(30, 2, 4, 5, std::nullopt, seed);
        covered += max_abs_component(sc.ground_truth) < compute_beta(sc.pilots, sc.observation, 0.0);
    }
    EXPECT_GE(covered, 990);
}

TEST(MiqcpInstance, Validation)
{
    const auto sc = generate_scenario(6, 1, 3, 1, std::nullopt, 1);
    EXPECT_THROW(make_instance(sc.pilots, sc.observation, 0.0, 0.0), argument_error);
    EXPECT_THROW(make_instance(sc.pilots, sc.observation, -1.0), argument_error);
}

TEST(BigBeta, IndicatorFromRowsSatisfiesBounds)
{
    // constructed b meets the box and counts the nonzero rows;
    // every b meeting the box has at least that many ones
    std::mt19937_64 rng(3);
    int violations = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const int n = 8, s = rep % (n + 1);
        auto sc = generate_scenario(n, 2, 2, s, std::nullopt, 300 + rep);
        const ComplexMatrix& x = sc.ground_truth;
        const double beta = std::max(1e-3, 1.01 * max_abs_component(x));
        const auto b = indicator_from_rows(x);
        violations += !satisfies_big_beta(x, b, beta);
        violations += std::accumulate(b.begin(), b.end(), 0) != s;
        violations += group_l0(x) != s;
        for (int mask = 0; mask < (1 << n); ++mask) {
            std::vector<int> c(n);
            for (int i = 0; i < n; ++i) c[i] = (mask >> i) & 1;
            if (satisfies_big_beta(x, c, beta) && std::accumulate(c.begin(), c.end(), 0) < s) ++violations;
        }
    }
    EXPECT_EQ(violations, 0);
}

TEST(BruteForce, Examples)
{
    const auto empty = generate_scenario(8, 2, 4, 0, std::nullopt, 1);
    auto r = brute_force_min_support(noiseless_instance(empty));
    EXPECT_EQ(r.objective, 0);
    EXPECT_EQ(r.status, ExactStatus::optimal);

    const auto sc = generate_scenario(8, 2, 4, 2, std::nullopt, 9);
    r = brute_force_min_support(noiseless_instance(sc));
    EXPECT_EQ(r.objective, 2);
    EXPECT_LT((r.estimate - sc.ground_truth).norm(), 1e-9);

    r = brute_force_min_support(make_instance(sc.pilots, sc.observation, sc.observation.norm()));
    EXPECT_EQ(r.objective, 0);

    const auto big = generate_scenario(21, 1, 4, 2, std::nullopt, 1);
    EXPECT_THROW(brute_force_min_support(noiseless_instance(big)), argument_error);
}

TEST(BruteForce, LexicographicallySmallestMinimum)
{
    // L = 2, K = 3: every pair interpolates Y, so the first pair wins
    const auto sc = generate_scenario(7, 1, 2, 3, std::nullopt, 4);
    const auto r = brute_force_min_support(make_instance(sc.pilots, sc.observation, 0.0, 1e6));
    EXPECT_EQ(r.objective, 2);
    EXPECT_EQ(r.support, (DeviceSet{0, 1}));
}

TEST(NodeLowerBound, TrueSupportLeaf)
{
    const auto sc = generate_scenario(12, 2, 6, 3, std::nullopt, 5);
    BnbNode node;
    node.forced_one = sc.support();
    for (int i = 0; i < 12; ++i)
        if (!sc.activity[i]) node.forced_zero.push_back(i);
    const auto nb = node_lower_bound(noiseless_instance(sc), node);
    EXPECT_TRUE(nb.feasible);
    EXPECT_DOUBLE_EQ(nb.lower_bound, 3.0);
}

TEST(NodeLowerBound, ExcludedTrueDeviceIsInfeasible)
{
    // forced_zero holds an active device and the remaining columns cannot span C^L
    const auto sc = generate_scenario(12, 2, 6, 3, std::nullopt, 5);
    const auto support = sc.support();
    BnbNode node;
    node.forced_zero.push_back(support[0]);
    int kept = 0;
    for (int i = 0; i < 12; ++i) {
        if (i == support[0]) continue;
        if (sc.activity[i] || kept < 2) {
            node.undecided.push_back(i);
            kept += !sc.activity[i];
        } else {
            node.forced_zero.push_back(i);
        }
    }
    std::sort(node.forced_zero.begin(), node.forced_zero.end());
    ASSERT_LT(node.undecided.size(), 6u);
    EXPECT_FALSE(node_lower_bound(noiseless_instance(sc), node).feasible);
}

TEST(NodeLowerBound, RootWithLargeEpsilon)
{
    const auto sc = generate_scenario(12, 2, 6, 3, std::nullopt, 5);
    const auto nb = node_lower_bound(make_instance(sc.pilots, sc.observation, sc.observation.norm()), root_node(12));
    EXPECT_TRUE(nb.feasible);
    EXPECT_DOUBLE_EQ(nb.lower_bound, 0.0);
    EXPECT_EQ(nb.probe.norm(), 0.0);
}

TEST(NodeLowerBound, RejectsNonPartition)
{
    const auto sc = generate_scenario(6, 1, 3, 1, std::nullopt, 5);
    BnbNode node;
    node.undecided = {0, 1, 2};
    EXPECT_THROW(node_lower_bound(noiseless_instance(sc), node), argument_error);
}

TEST(NodeLowerBound, NeverExceedsBestCompletion)
{
    // the bound of a node must not exceed the cheapest feasible support inside it
    std::mt19937_64 rng(17);
    int violations = 0, checked = 0;
    for (int rep = 0; rep < 60; ++rep) {
        const bool noisy = rep % 2;
        const auto sc = generate_scenario(10, 1 + rep % 2, 4 + rep % 3, 1 + rep % 3,
                                          noisy ? std::optional<double>(30.0) : std::nullopt, 700 + rep);
        const auto inst = noisy ? noisy_instance(sc) : noiseless_instance(sc);
        BnbNode node;
        for (int i = 0; i < 10; ++i) {
            const int r = static_cast<int>(rng() % 3);
            (r == 0 ? node.forced_zero : r == 1 ? node.forced_one : node.undecided).push_back(i);
        }
        const auto nb = node_lower_bound(inst, node);
        // enumerate completions forced_one + subset of undecided
        detail::NodeEvaluator ev(inst);
        int best = std::numeric_limits<int>::max();
        const int nu = static_cast<int>(node.undecided.size());
        for (int mask = 0; mask < (1 << nu); ++mask) {
            DeviceSet s = node.forced_one;
            for (int k = 0; k < nu; ++k)
                if ((mask >> k) & 1) s.push_back(node.undecided[k]);
            if (static_cast<int>(s.size()) < best && ev.feasible_fit(s)) best = static_cast<int>(s.size());
        }
        if (best == std::numeric_limits<int>::max()) continue;
        ++checked;
        violations += !nb.feasible || std::ceil(nb.lower_bound - 1e-9) > best;
    }
    EXPECT_GT(checked, 10);
    EXPECT_EQ(violations, 0);
}

TEST(BnbSolve, PaperSettingAtMinimumLength)
{
    const auto sc = generate_scenario(30, 2, 6, 5, std::nullopt, 11);
    const auto r = bnb_solve(noiseless_instance(sc), 200000);
    EXPECT_EQ(r.status, ExactStatus::optimal);
    EXPECT_EQ(r.objective, 5);
    EXPECT_LE((r.estimate - sc.ground_truth).norm(), 1e-5);
    EXPECT_EQ(r.support, sc.support());
}

TEST(BnbSolve, FailsWhenPilotsTooShort)
{
    const auto sc = generate_scenario(30, 2, 5, 5, std::nullopt, 11);
    const auto r = bnb_solve(noiseless_instance(sc), 200000);
    EXPECT_LE(r.objective, 5);
    EXPECT_GT((r.estimate - sc.ground_truth).norm(), 1e-5);
}

TEST(BnbSolve, RowsOutsideSupportAreZero)
{
    const auto sc = generate_scenario(20, 2, 6, 3, 30.0, 13);
    const auto r = bnb_solve(noisy_instance(sc), 200000);
    for (int i = 0; i < 20; ++i)
        if (!std::binary_search(r.support.begin(), r.support.end(), i)) EXPECT_EQ(r.estimate.row(i).norm(), 0.0);
    EXPECT_EQ(static_cast<int>(r.support.size()), r.objective);
}

TEST(BnbSolve, MatchesOracleOnSmallInstances)
{
    for (int rep = 0; rep < 60; ++rep) {
        const int n = 6 + rep % 5, k = rep % 4, m = 1 + rep % 2, l = 2 + rep % 5;
        const bool noisy = (rep / 2) % 2;
        const auto sc = generate_scenario(n, m, l, k, noisy ? std::optional<double>(30.0) : std::nullopt, 4000 + rep);
        const auto inst = noisy ? noisy_instance(sc) : noiseless_instance(sc);
        const auto a = bnb_solve(inst, 200000);
        const auto b = brute_force_min_support(inst);
        ASSERT_EQ(a.status, ExactStatus::optimal) << rep;
        EXPECT_EQ(a.objective, b.objective) << rep;
        if (!noisy && l >= k + 1) EXPECT_EQ(a.support, b.support) << rep;
    }
}

TEST(BnbSolve, SearchInvariants)
{
    for (int rep = 0; rep < 10; ++rep) {
        const auto sc = generate_scenario(30, 2, 6, 5, rep % 2 ? std::optional<double>(30.0) : std::nullopt, 60 + rep);
        const auto inst = rep % 2 ? noisy_instance(sc) : noiseless_instance(sc);
        const auto r = bnb_solve(inst, 200000);
        for (std::size_t i = 1; i < r.popped_bounds.size(); ++i)
            EXPECT_GE(r.popped_bounds[i], r.popped_bounds[i - 1]) << rep;
        for (std::size_t i = 1; i < r.incumbent_history.size(); ++i) {
            EXPECT_GE(r.incumbent_history[i].first, r.incumbent_history[i - 1].first);
            EXPECT_LT(r.incumbent_history[i].second, r.incumbent_history[i - 1].second);
        }
        ASSERT_FALSE(r.incumbent_history.empty());
        EXPECT_EQ(r.incumbent_history.back().second, r.objective);
    }
}

TEST(BnbSolve, Deterministic)
{
    const auto sc = generate_scenario(30, 2, 7, 5, 30.0, 3);
    const auto inst = noisy_instance(sc);
    const auto a = bnb_solve(inst, 200000);
    const auto b = bnb_solve(inst, 200000);
    EXPECT_EQ(a.support, b.support);
    EXPECT_EQ(a.nodes_explored, b.nodes_explored);
    EXPECT_EQ(a.incumbent_history, b.incumbent_history);
    EXPECT_EQ(a.popped_bounds, b.popped_bounds);
    EXPECT_TRUE(a.estimate == b.estimate);
}

TEST(BnbSolve, NodeLimitReported)
{
    const auto sc = generate_scenario(30, 2, 6, 5, std::nullopt, 11);
    const auto r = bnb_solve(noiseless_instance(sc), 1);
    EXPECT_LE(r.nodes_explored, 1);
    EXPECT_NE(r.status, ExactStatus::infeasible);
    EXPECT_THROW(bnb_solve(noiseless_instance(sc), 0), argument_error);
}

TEST(BnbSolve, InfeasibleRoot)
{
    // noisy L > N: even the full support leaves a positive residual
    const auto sc = generate_scenario(3, 1, 8, 2, 10.0, 5);
    const auto full = least_squares_on_support(sc.pilots, sc.observation, {0, 1, 2});
    const auto r = bnb_solve(make_instance(sc.pilots, sc.observation, 0.5 * full.residual_fro), 1000);
    EXPECT_EQ(r.status, ExactStatus::infeasible);
    EXPECT_EQ(to_string(r.status), std::string("infeasible"));
}

TEST(BnbSolve, BetaDoublingWhenBoxBinds)
{
    // channels scaled far beyond the default beta force the box to bind
    auto sc = generate_scenario(10, 1, 6, 2, std::nullopt, 5);
    sc.observation *= 3.0;
    const auto inst = make_instance(sc.pilots, sc.observation, 0.0, 0.5);
    const auto r = bnb_solve(inst, 200000);
    EXPECT_TRUE(r.beta_doubled);
    EXPECT_DOUBLE_EQ(r.beta_used, 1.0);
}

TEST(BnbSolve, NodeCountRegressionGuard)
{
    // L >= K + 2: at most 10 N K nodes in at least 90% of trials
    int within = 0;
    for (int t = 0; t < 100; ++t) {
        const auto sc = generate_scenario(30, 2, 7, 5, std::nullopt, trial_seed(1, 7, t));
        const auto r = bnb_solve(noiseless_instance(sc), 200000);
        within += r.nodes_explored <= 10 * 30 * 5;
    }
    EXPECT_GE(within, 90);
}
