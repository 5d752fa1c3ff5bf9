#pragma once

#include "core_model.hpp"

namespace jadce {

struct SupportFit {
    ComplexMatrix estimate;  // N x M, zero off support
    double residual_fro = 0.0;
};

inline ComplexMatrix select_columns(const ComplexMatrix& s, const DeviceSet& support)
{
    ComplexMatrix sub(s.rows(), static_cast<Eigen::Index>(support.size()));
    for (std::size_t k = 0; k < support.size(); ++k) sub.col(k) = s.col(support[k]);
    return sub;
}

/// min ||Y - S[:,support] X_sub||_F. Rank-deficient systems get the
/// minimum-norm solution.
inline SupportFit least_squares_on_support(const ComplexMatrix& pilots, const ComplexMatrix& observation,
                                           const DeviceSet& support)
{
    const auto n = pilots.cols();
    SupportFit fit;
    fit.estimate = ComplexMatrix::Zero(n, observation.cols());
    if (support.empty()) {
        fit.residual_fro = observation.norm();
        return fit;
    }
    for (int i : support)
        if (i < 0 || i >= n) throw argument_error("least_squares_on_support: index out of range");

    const ComplexMatrix sub = select_columns(pilots, support);
    Eigen::CompleteOrthogonalDecomposition<ComplexMatrix> cod(sub);
    const ComplexMatrix x_sub = cod.solve(observation);
    for (std::size_t k = 0; k < support.size(); ++k) fit.estimate.row(support[k]) = x_sub.row(k);
    fit.residual_fro = (observation - sub * x_sub).norm();
    return fit;
}

/// Bounded-variable least squares, min ||b - A x|| s.t. lo <= x <= hi,
/// by an active-set method (free variables solved exactly, bound
/// variables released on KKT violation).
inline RealVector bounded_least_squares(const RealMatrix& a, const RealVector& b, double lo, double hi)
{
    const auto n = a.cols();
    RealVector x = RealVector::Zero(n);
    if (n == 0) return x;
    enum State : signed char { at_lower = -1, free_var = 0, at_upper = 1 };
    std::vector<signed char> state(n, free_var);

    {
        Eigen::CompleteOrthogonalDecomposition<RealMatrix> cod(a);
        x = cod.solve(b);
        for (Eigen::Index j = 0; j < n; ++j) {
            if (x(j) <= lo) { x(j) = lo; state[j] = at_lower; }
            else if (x(j) >= hi) { x(j) = hi; state[j] = at_upper; }
        }
    }
    const double scale = std::max(1e-300, a.norm() * std::max(b.norm(), 1.0));
    const double gtol = 1e-13 * scale;
    const int max_outer = static_cast<int>(10 * n + 50);
    int last_released = -1;

    for (int outer = 0; outer < max_outer; ++outer) {
        for (int inner = 0; inner <= n; ++inner) {
            std::vector<Eigen::Index> fr;
            for (Eigen::Index j = 0; j < n; ++j)
                if (state[j] == free_var) fr.push_back(j);
            if (fr.empty()) break;
            RealVector rhs = b;
            for (Eigen::Index j = 0; j < n; ++j)
                if (state[j] != free_var) rhs -= a.col(j) * x(j);
            RealMatrix af(a.rows(), static_cast<Eigen::Index>(fr.size()));
            for (std::size_t k = 0; k < fr.size(); ++k) af.col(k) = a.col(fr[k]);
            Eigen::CompleteOrthogonalDecomposition<RealMatrix> cod(af);
            const RealVector z = cod.solve(rhs);

            double alpha = 1.0;
            for (std::size_t k = 0; k < fr.size(); ++k) {
                const double xj = x(fr[k]), zj = z(k);
                if (zj > hi) alpha = std::min(alpha, (hi - xj) / (zj - xj));
                else if (zj < lo) alpha = std::min(alpha, (lo - xj) / (zj - xj));
            }
            alpha = std::clamp(alpha, 0.0, 1.0);
            bool moved_to_bound = false;
            for (std::size_t k = 0; k < fr.size(); ++k) {
                const auto j = fr[k];
                if (alpha >= 1.0) {
                    x(j) = z(k);
                } else {
                    x(j) += alpha * (z(k) - x(j));
                }
                const double tol = 1e-12 * (hi - lo);
                if (alpha < 1.0 && (x(j) >= hi - tol) && z(k) > hi) {
                    x(j) = hi;
                    state[j] = at_upper;
                    moved_to_bound = true;
                } else if (alpha < 1.0 && (x(j) <= lo + tol) && z(k) < lo) {
                    x(j) = lo;
                    state[j] = at_lower;
                    moved_to_bound = true;
                }
            }
            if (alpha >= 1.0 || !moved_to_bound) break;
        }

        const RealVector g = a.transpose() * (a * x - b);
        Eigen::Index pick = -1;
        double worst = gtol;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == last_released) continue;
            // moving inward from the bound must lower the objective
            const double v = state[j] == at_lower ? -g(j) : state[j] == at_upper ? g(j) : 0.0;
            if (v > worst) {
                worst = v;
                pick = j;
            }
        }
        if (pick < 0) break;
        state[pick] = free_var;
        last_released = static_cast<int>(pick);
    }
    return x;
}

/// Least squares on a support with every real and imaginary part of the
/// fitted rows confined to [-beta, beta]. Columns of Y are independent.
inline SupportFit box_least_squares_on_support(const ComplexMatrix& pilots, const ComplexMatrix& observation,
                                               const DeviceSet& support, double beta)
{
    SupportFit fit = least_squares_on_support(pilots, observation, support);
    if (support.empty()) return fit;
    bool inside = true;
    for (int i : support)
        for (Eigen::Index m = 0; m < fit.estimate.cols() && inside; ++m)
            inside = std::abs(fit.estimate(i, m).real()) <= beta && std::abs(fit.estimate(i, m).imag()) <= beta;
    if (inside) return fit;

    const auto l = pilots.rows();
    const auto k = static_cast<Eigen::Index>(support.size());
    RealMatrix a(2 * l, 2 * k);
    for (Eigen::Index c = 0; c < k; ++c) {
        const auto s = pilots.col(support[c]);
        a.col(c) << s.real(), s.imag();
        a.col(k + c) << -s.imag(), s.real();
    }
    ComplexMatrix x_sub(k, observation.cols());
    for (Eigen::Index m = 0; m < observation.cols(); ++m) {
        RealVector b(2 * l);
        b << observation.col(m).real(), observation.col(m).imag();
        const RealVector z = bounded_least_squares(a, b, -beta, beta);
        for (Eigen::Index c = 0; c < k; ++c) x_sub(c, m) = Complex(z(c), z(k + c));
    }
    fit.estimate.setZero();
    for (Eigen::Index c = 0; c < k; ++c) fit.estimate.row(support[c]) = x_sub.row(c);
    fit.residual_fro = (observation - pilots * fit.estimate).norm();
    return fit;
}

inline SupportFit least_squares_on_support(const RealifiedSystem& sys, const DeviceSet& support)
{
    const auto [s, y] = complex_system(sys);
    return least_squares_on_support(s, y, support);
}

}  // namespace jadce
