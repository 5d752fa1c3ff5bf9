#pragma once

#include "core_model.hpp"
#include "least_squares.hpp"

#include <cstdint>
#include <memory>
#include <queue>
#include <tuple>

namespace jadce {

/// Big-beta mixed-integer model of the group-l0 problem:
///   minimize sum_i b_i
///   s.t. ||Y - S X||_F <= epsilon,  -beta b_i <= X_ij <= beta b_i,  b in {0,1}^N
/// (X_ij ranging over the real and imaginary parts). epsilon = 0 is the
/// noiseless equality-constrained case.
struct MiqcpInstance {
    RealifiedSystem system;
    double epsilon = 0.0;
    double beta = 1.0;
    int n_groups = 0;

    void validate() const
    {
        if (!(beta > 0.0)) throw argument_error("MiqcpInstance: beta must be > 0");
        if (!(epsilon >= 0.0)) throw argument_error("MiqcpInstance: epsilon must be >= 0");
        if (n_groups != system.n_groups) throw argument_error("MiqcpInstance: n_groups mismatch");
    }
};

/// Big-beta from the 3-sigma rule on Re/Im parts of CN(0, channel_var) entries
/// (sigma = sqrt(channel_var / 2)), widened by a factor 2.
inline double compute_beta(const ComplexMatrix& /*pilots*/, const ComplexMatrix& /*observation*/,
                           double /*epsilon*/, double channel_var = 1.0)
{
    const double sigma = std::sqrt(channel_var / 2.0);
    return std::max(1e-3, 2.0 * 3.0 * sigma);
}

inline MiqcpInstance make_instance(const ComplexMatrix& pilots, const ComplexMatrix& observation,
                                   double epsilon, std::optional<double> beta = std::nullopt)
{
    MiqcpInstance inst;
    inst.system = realify(pilots, observation);
    inst.epsilon = epsilon;
    inst.beta = beta ? *beta : compute_beta(pilots, observation, epsilon);
    inst.n_groups = static_cast<int>(pilots.cols());
    inst.validate();
    return inst;
}

/// Residual level accepted as ||Y - SX||_F <= epsilon. The absolute floor
/// makes the noiseless case decidable in floating point.
inline double feasibility_threshold(double epsilon, double observation_norm)
{
    return std::max(epsilon * (1.0 + 1e-9), 1e-9 * observation_norm);
}

// Lemma-style helpers on the indicator vector -------------------------------

inline std::vector<int> indicator_from_rows(const ComplexMatrix& x)
{
    std::vector<int> b(x.rows(), 0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) b[i] = x.row(i).squaredNorm() > 0.0 ? 1 : 0;
    return b;
}

inline int group_l0(const ComplexMatrix& x)
{
    int s = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) s += x.row(i).squaredNorm() > 0.0 ? 1 : 0;
    return s;
}

/// Checks -beta b_i <= X_ij <= beta b_i on every real and imaginary part.
inline bool satisfies_big_beta(const ComplexMatrix& x, const std::vector<int>& b, double beta)
{
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double lim = beta * b[i];
            if (std::abs(x(i, j).real()) > lim || std::abs(x(i, j).imag()) > lim) return false;
        }
    return true;
}

inline double max_abs_component(const ComplexMatrix& x)
{
    double m = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            m = std::max({m, std::abs(x(i, j).real()), std::abs(x(i, j).imag())});
    return m;
}

// ---------------------------------------------------------------------------

struct BnbNode {
    DeviceSet forced_zero;
    DeviceSet forced_one;
    DeviceSet undecided;
    double lower_bound = 0.0;
    int depth = 0;
};

enum class ExactStatus { optimal, node_limit, infeasible };

inline const char* to_string(ExactStatus s)
{
    switch (s) {
    case ExactStatus::optimal: return "optimal";
    case ExactStatus::node_limit: return "node-limit";
    case ExactStatus::infeasible: return "infeasible";
    }
    return "unknown";
}

struct ExactResult {
    ComplexMatrix estimate;
    DeviceSet support;
    int objective = 0;
    ExactStatus status = ExactStatus::infeasible;
    long nodes_explored = 0;
    std::vector<std::pair<long, int>> incumbent_history;
    double residual_fro = 0.0;
    double beta_used = 0.0;
    bool beta_doubled = false;
    /// lower bounds in the order nodes were popped
    std::vector<double> popped_bounds;
};

struct NodeBound {
    bool feasible = false;
    double lower_bound = 0.0;
    /// least-squares probe used for branching and rounding (N x M)
    ComplexMatrix probe;
    /// true when forced_one alone meets the residual budget
    bool leaf = false;
    /// cheapest completion found by the one/two-device lookahead, if any
    std::optional<DeviceSet> completion;
};

namespace detail {

inline bool sorted_contains(const DeviceSet& s, int v) { return std::binary_search(s.begin(), s.end(), v); }

inline DeviceSet set_union(const DeviceSet& a, const DeviceSet& b)
{
    DeviceSet out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

/// Per-instance workspace: complex form of the lifted system plus node
/// evaluation and incumbent heuristics.
class NodeEvaluator {
public:
    explicit NodeEvaluator(const MiqcpInstance& inst) : inst_(inst)
    {
        std::tie(s_, y_) = complex_system(inst.system);
        ynorm_ = y_.norm();
        thr_ = feasibility_threshold(inst.epsilon, ynorm_);
        // bounds may only err on the permissive side
        thr_bound_ = thr_ * (1.0 + 1e-6);
    }

    const ComplexMatrix& pilots() const { return s_; }
    const ComplexMatrix& observation() const { return y_; }
    double threshold() const { return thr_; }
    int n() const { return static_cast<int>(s_.cols()); }

    /// Feasibility of a support in the Big-beta model: min over the box of
    /// the residual, compared against the budget. Shared with the oracle.
    std::optional<SupportFit> feasible_fit(DeviceSet support) const
    {
        std::sort(support.begin(), support.end());
        auto fit = box_least_squares_on_support(s_, y_, support, inst_.beta);
        if (fit.residual_fro <= thr_) return fit;
        return std::nullopt;
    }

    NodeBound evaluate(const DeviceSet& forced_one, const DeviceSet& undecided, double beta) const
    {
        NodeBound nb;
        const int n_one = static_cast<int>(forced_one.size());

        if (auto fit = feasible_fit(forced_one)) {
            nb.feasible = true;
            nb.leaf = true;
            nb.lower_bound = n_one;
            nb.probe = std::move(fit->estimate);
            nb.completion = DeviceSet{};
            return nb;
        }

        const DeviceSet allowed = set_union(forced_one, undecided);
        auto probe = least_squares_on_support(s_, y_, allowed);
        if (probe.residual_fro > thr_bound_ || undecided.empty()) return nb;
        nb.feasible = true;
        nb.probe = std::move(probe.estimate);

        // residual after projecting out span(S[:, forced_one])
        ComplexMatrix q1;
        if (n_one > 0) {
            Eigen::HouseholderQR<ComplexMatrix> qr(select_columns(s_, forced_one));
            const int rank = std::min<int>(n_one, static_cast<int>(s_.rows()));
            q1 = qr.householderQ() * ComplexMatrix::Identity(s_.rows(), rank);
        }
        auto project_out = [&](const ComplexMatrix& v) -> ComplexMatrix {
            if (q1.cols() == 0) return v;
            return v - q1 * (q1.adjoint() * v);
        };
        const ComplexMatrix r = project_out(y_);
        const double r2 = r.squaredNorm();
        // r2 - (captured energy) cancels; widen by a rounding allowance relative to r2
        const double thr2 = thr_bound_ * thr_bound_ + 1e-10 * r2;

        // Eckart-Young: k new columns remove at most the top-k singular energy of r
        int k_lb = 0;
        {
            Eigen::JacobiSVD<ComplexMatrix> svd(r);
            const RealVector sv = svd.singularValues();
            double tail = r2;
            while (k_lb < sv.size() && tail > thr2) {
                tail -= sv(k_lb) * sv(k_lb);
                ++k_lb;
            }
        }

        // projected, normalized candidate columns
        const int nu = static_cast<int>(undecided.size());
        ComplexMatrix qu(s_.rows(), nu);
        std::vector<char> usable(nu, 0);
        {
            const ComplexMatrix pu = project_out(select_columns(s_, undecided));
            for (int k = 0; k < nu; ++k) {
                const double nrm = pu.col(k).norm();
                if (nrm > 1e-10 * std::max(1.0, s_.col(undecided[k]).norm())) {
                    qu.col(k) = pu.col(k) / nrm;
                    usable[k] = 1;
                } else {
                    qu.col(k).setZero();
                }
            }
        }
        const ComplexMatrix c = qu.adjoint() * r;  // nu x M
        const RealVector c2 = c.rowwise().squaredNorm();

        int k_exact = -1;
        DeviceSet best_completion;
        if (k_lb <= 1) {
            double best = std::numeric_limits<double>::infinity();
            for (int k = 0; k < nu; ++k) {
                if (!usable[k]) continue;
                const double res2 = r2 - c2(k);
                if (res2 <= thr2 && res2 < best) {
                    best = res2;
                    best_completion = {undecided[k]};
                }
            }
            if (!best_completion.empty()) k_exact = 1;
        }
        k_lb = std::max(k_lb, 2);
        if (k_exact < 0 && k_lb <= 2 && nu >= 2) {
            const ComplexMatrix g = qu.adjoint() * qu;
            double best = std::numeric_limits<double>::infinity();
            for (int a = 0; a < nu; ++a) {
                if (!usable[a]) continue;
                for (int b = a + 1; b < nu; ++b) {
                    if (!usable[b]) continue;
                    const Complex gab = g(a, b);
                    const double denom = 1.0 - std::norm(gab);
                    if (denom <= 1e-12) continue;
                    const double extra = (c.row(b) - std::conj(gab) * c.row(a)).squaredNorm() / denom;
                    const double res2 = r2 - c2(a) - extra;
                    if (res2 <= thr2 && res2 < best) {
                        best = res2;
                        best_completion = {undecided[a], undecided[b]};
                    }
                }
            }
            if (!best_completion.empty()) k_exact = 2;
        }
        if (k_exact < 0) k_lb = std::max(k_lb, 3);

        const int k_card = k_exact > 0 ? k_exact : std::min(k_lb, nu);
        if (k_exact > 0) nb.completion = best_completion;

        // Dual bound of the continuous Big-beta relaxation, multiplier = c * r.
        double relax = 0.0;
        {
            const ComplexMatrix sr = select_columns(s_, undecided).adjoint() * r;
            double mx = 0.0;
            for (int k = 0; k < nu; ++k) {
                double l1 = 0.0;
                for (Eigen::Index m = 0; m < sr.cols(); ++m)
                    l1 += std::abs(sr(k, m).real()) + std::abs(sr(k, m).imag());
                mx = std::max(mx, l1);
            }
            const double rn = std::sqrt(r2);
            if (mx > 0.0) relax = std::max(0.0, rn * rn - inst_.epsilon * rn) / (beta * mx);
        }

        nb.lower_bound = n_one + std::max<double>(k_card, relax);
        return nb;
    }

    /// Forward greedy completion of forced_one with columns from candidates,
    /// adding the column with the largest residual reduction until feasible.
    std::optional<SupportFit> greedy_completion(const DeviceSet& forced_one, const DeviceSet& candidates,
                                                int max_size, DeviceSet& chosen) const
    {
        const int nc = static_cast<int>(candidates.size());
        ComplexMatrix q(s_.rows(), 0);
        ComplexMatrix p = select_columns(s_, candidates);
        ComplexMatrix r = y_;
        auto add_direction = [&](const Eigen::VectorXcd& v) {
            const double nrm = v.norm();
            if (nrm <= 1e-12) return;
            const Eigen::VectorXcd u = v / nrm;
            r -= u * (u.adjoint() * r);
            p -= u * (u.adjoint() * p);
        };
        // orthogonalize against forced columns
        if (!forced_one.empty()) {
            Eigen::HouseholderQR<ComplexMatrix> qr(select_columns(s_, forced_one));
            const int rank = std::min<int>(static_cast<int>(forced_one.size()), static_cast<int>(s_.rows()));
            const ComplexMatrix q1 = qr.householderQ() * ComplexMatrix::Identity(s_.rows(), rank);
            r -= q1 * (q1.adjoint() * r);
            p -= q1 * (q1.adjoint() * p);
        }
        chosen = forced_one;
        std::vector<char> used(nc, 0);
        while (static_cast<int>(chosen.size()) < max_size) {
            if (r.norm() <= thr_) break;
            int best = -1;
            double best_score = -1.0;
            for (int k = 0; k < nc; ++k) {
                if (used[k]) continue;
                const double pn2 = p.col(k).squaredNorm();
                if (pn2 <= 1e-20) continue;
                const double score = (p.col(k).adjoint() * r).squaredNorm() / pn2;
                // near-ties resolve to the smallest index
                if (score > best_score * (1.0 + 1e-9) + 1e-300) {
                    best_score = score;
                    best = k;
                }
            }
            if (best < 0) break;
            used[best] = 1;
            chosen.push_back(candidates[best]);
            add_direction(p.col(best));
        }
        std::sort(chosen.begin(), chosen.end());
        return feasible_fit(chosen);
    }

private:
    const MiqcpInstance& inst_;
    ComplexMatrix s_;
    ComplexMatrix y_;
    double ynorm_ = 0.0;
    double thr_ = 0.0;
    double thr_bound_ = 0.0;
};

}  // namespace detail

/// Lower bound for a branch-and-bound node: |forced_one| plus the number of
/// further devices provably needed (residual rank / one- and two-device
/// lookahead), or the Big-beta relaxation dual bound if larger.
inline NodeBound node_lower_bound(const MiqcpInstance& instance, const BnbNode& node)
{
    instance.validate();
    const int n = instance.n_groups;
    if (node.forced_zero.size() + node.forced_one.size() + node.undecided.size() != static_cast<std::size_t>(n))
        throw argument_error("node_lower_bound: node sets must partition the devices");
    detail::NodeEvaluator ev(instance);
    DeviceSet one = node.forced_one, und = node.undecided;
    std::sort(one.begin(), one.end());
    std::sort(und.begin(), und.end());
    return ev.evaluate(one, und, instance.beta);
}

struct BnbOptions {
    long node_limit = 200000;
    double rounding_ratio = 0.05;
    bool allow_beta_doubling = true;
};

namespace detail {

inline ExactResult bnb_run(const MiqcpInstance& instance, const BnbOptions& opt)
{
    NodeEvaluator ev(instance);
    const int n = ev.n();
    const double beta = instance.beta;

    ExactResult res;
    res.beta_used = beta;
    int incumbent = std::numeric_limits<int>::max();
    DeviceSet incumbent_support;

    auto offer = [&](DeviceSet support, long at_node) {
        std::sort(support.begin(), support.end());
        const int size = static_cast<int>(support.size());
        if (size >= incumbent) return;
        if (!ev.feasible_fit(support)) return;
        incumbent = size;
        incumbent_support = std::move(support);
        res.incumbent_history.emplace_back(at_node, incumbent);
    };

    auto prunable = [&](double lb) {
        return incumbent != std::numeric_limits<int>::max() && std::ceil(lb - 1e-9) >= incumbent;
    };

    struct Entry {
        BnbNode node;
        NodeBound bound;
        std::uint64_t seq;
    };
    struct Order {
        bool operator()(const Entry* a, const Entry* b) const
        {
            // min lower bound first, then deeper, then older
            if (a->node.lower_bound != b->node.lower_bound) return a->node.lower_bound > b->node.lower_bound;
            if (a->node.depth != b->node.depth) return a->node.depth < b->node.depth;
            return a->seq > b->seq;
        }
    };
    std::vector<std::unique_ptr<Entry>> storage;
    std::priority_queue<Entry*, std::vector<Entry*>, Order> queue;
    std::uint64_t seq = 0;

    auto push = [&](BnbNode node, double parent_lb, long at_node) {
        NodeBound nb = ev.evaluate(node.forced_one, node.undecided, beta);
        if (!nb.feasible) return;
        node.lower_bound = std::max(nb.lower_bound, parent_lb);
        if (nb.leaf) {
            offer(node.forced_one, at_node);
            return;
        }
        if (nb.completion) offer(set_union(node.forced_one, *nb.completion), at_node);
        if (prunable(node.lower_bound)) return;
        auto e = std::make_unique<Entry>(Entry{std::move(node), std::move(nb), seq++});
        queue.push(e.get());
        storage.push_back(std::move(e));
    };

    BnbNode root;
    root.undecided.resize(n);
    std::iota(root.undecided.begin(), root.undecided.end(), 0);
    {
        NodeBound nb = ev.evaluate({}, root.undecided, beta);
        if (!nb.feasible) {
            res.status = ExactStatus::infeasible;
            res.estimate = ComplexMatrix::Zero(n, ev.observation().cols());
            res.residual_fro = ev.observation().norm();
            return res;
        }
        DeviceSet greedy;
        ev.greedy_completion({}, root.undecided, n, greedy);
        offer(greedy, 0);
        // multi-start: greedy seeded with each single device
        for (int i = 0; i < n && incumbent > 1; ++i) {
            DeviceSet rest;
            for (int j : root.undecided)
                if (j != i) rest.push_back(j);
            ev.greedy_completion({i}, rest, incumbent - 1, greedy);
            offer(greedy, 0);
        }
    }
    push(root, 0.0, 0);

    while (!queue.empty()) {
        if (res.nodes_explored >= opt.node_limit) break;
        Entry* top = queue.top();
        queue.pop();
        const BnbNode& node = top->node;
        if (prunable(node.lower_bound)) continue;
        ++res.nodes_explored;
        res.popped_bounds.push_back(node.lower_bound);
        const NodeBound& nb = top->bound;

        // rounding heuristic on the probe
        {
            const RealVector norms = row_group_norms(nb.probe);
            const double cut = opt.rounding_ratio * norms.maxCoeff();
            DeviceSet rounded = node.forced_one;
            for (int i : node.undecided)
                if (norms(i) >= cut && norms(i) > 0.0) rounded.push_back(i);
            offer(rounded, res.nodes_explored);
        }
        if (incumbent != std::numeric_limits<int>::max()) {
            DeviceSet chosen;
            const int cap = incumbent - 1;
            if (static_cast<int>(node.forced_one.size()) < cap) {
                ev.greedy_completion(node.forced_one, node.undecided, cap, chosen);
                offer(chosen, res.nodes_explored);
            }
        }
        if (prunable(node.lower_bound)) continue;

        // branch on the undecided device with the largest probe row
        int pick = -1;
        double best = -1.0;
        for (int i : node.undecided) {
            const double v = nb.probe.row(i).norm();
            if (v > best) {
                best = v;
                pick = i;
            }
        }
        if (pick < 0) continue;

        BnbNode one = node, zero = node;
        one.undecided.erase(std::find(one.undecided.begin(), one.undecided.end(), pick));
        zero.undecided = one.undecided;
        one.forced_one.insert(std::upper_bound(one.forced_one.begin(), one.forced_one.end(), pick), pick);
        zero.forced_zero.insert(std::upper_bound(zero.forced_zero.begin(), zero.forced_zero.end(), pick), pick);
        one.depth = zero.depth = node.depth + 1;
        const double lb = node.lower_bound;
        const long at = res.nodes_explored;
        push(std::move(one), lb, at);
        push(std::move(zero), lb, at);
    }

    res.status = queue.empty() ? ExactStatus::optimal : ExactStatus::node_limit;
    if (incumbent == std::numeric_limits<int>::max()) {
        res.status = ExactStatus::infeasible;
        res.estimate = ComplexMatrix::Zero(n, ev.observation().cols());
        res.residual_fro = ev.observation().norm();
        return res;
    }
    auto fit = *ev.feasible_fit(incumbent_support);
    res.support = incumbent_support;
    res.objective = incumbent;
    res.estimate = std::move(fit.estimate);
    res.residual_fro = fit.residual_fro;
    return res;
}

}  // namespace detail

/// Best-first branch-and-bound over the device indicators b. The returned
/// estimate is the Big-beta constrained least-squares fit on the incumbent
/// support.
inline ExactResult bnb_solve(const MiqcpInstance& instance, long node_limit, BnbOptions options = {})
{
    instance.validate();
    if (node_limit < 1) throw argument_error("bnb_solve: node_limit must be >= 1");
    options.node_limit = node_limit;
    ExactResult res = detail::bnb_run(instance, options);
    if (options.allow_beta_doubling && res.status != ExactStatus::infeasible &&
        max_abs_component(res.estimate) >= instance.beta * (1.0 - 1e-9)) {
        MiqcpInstance widened = instance;
        widened.beta *= 2.0;
        const long explored = res.nodes_explored;
        res = detail::bnb_run(widened, options);
        res.nodes_explored += explored;
        res.beta_doubled = true;
    }
    return res;
}

/// Support enumeration in increasing cardinality, lexicographic within a
/// cardinality. Exponential; intended as a verification oracle.
inline ExactResult brute_force_min_support(const MiqcpInstance& instance)
{
    instance.validate();
    const int n = instance.n_groups;
    if (n > 20) throw argument_error("brute_force_min_support: at most 20 devices supported");
    detail::NodeEvaluator ev(instance);
    ExactResult res;
    res.beta_used = instance.beta;
    for (int k = 0; k <= n; ++k) {
        std::vector<int> idx(k);
        std::iota(idx.begin(), idx.end(), 0);
        while (true) {
            ++res.nodes_explored;
            if (auto fit = ev.feasible_fit(idx)) {
                res.status = ExactStatus::optimal;
                res.support = idx;
                res.objective = k;
                res.estimate = std::move(fit->estimate);
                res.residual_fro = fit->residual_fro;
                res.incumbent_history.emplace_back(res.nodes_explored, k);
                return res;
            }
            // next k-combination in lexicographic order
            int pos = k - 1;
            while (pos >= 0 && idx[pos] == n - k + pos) --pos;
            if (pos < 0) break;
            ++idx[pos];
            for (int j = pos + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
    res.status = ExactStatus::infeasible;
    res.estimate = ComplexMatrix::Zero(n, ev.observation().cols());
    res.residual_fro = ev.observation().norm();
    return res;
}

}  // namespace jadce
