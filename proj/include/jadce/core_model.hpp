#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace jadce {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using DeviceSet = std::vector<int>;

class argument_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <class Derived>
inline bool all_finite(const Eigen::MatrixBase<Derived>& m)
{
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            if (!std::isfinite(std::abs(m(i, j)))) return false;
    return true;
}

/// SplitMix64 finalizer. Used to derive independent stream seeds from
/// (base seed, coordinates) so that trials are reproducible in any order.
inline std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0)
{
    return mix64(mix64(mix64(base) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

/// One synthetic grant-free uplink instance: Y = S X* + Z with X* = diag(a) H.
struct Scenario {
    int n_devices = 0;
    int n_antennas = 0;
    int pilot_len = 0;
    int n_active = 0;
    ComplexMatrix pilots;        // L x N
    ComplexMatrix channels;      // N x M
    std::vector<int> activity;   // length N, entries 0/1
    ComplexMatrix ground_truth;  // N x M
    ComplexMatrix observation;   // L x M
    double noise_var = 0.0;      // per complex entry
    std::uint64_t seed = 0;

    DeviceSet support() const
    {
        DeviceSet s;
        for (int i = 0; i < n_devices; ++i)
            if (activity[i]) s.push_back(i);
        return s;
    }
};

/// Noise variance per complex entry for a requested SNR, where
/// SNR = E||S X*||_F^2 / E||Z||_F^2 and each entry of S X* has variance K.
inline double noise_variance_for_snr(int n_active, double snr_db)
{
    return n_active * std::pow(10.0, -snr_db / 10.0);
}

inline Scenario generate_scenario(int n_devices, int n_antennas, int pilot_len, int n_active,
                                  std::optional<double> snr_db, std::uint64_t seed)
{
    if (n_devices < 1 || n_antennas < 1 || pilot_len < 1)
        throw argument_error("generate_scenario: dimensions must be positive");
    if (n_active < 0 || n_active > n_devices)
        throw argument_error("generate_scenario: n_active must lie in [0, n_devices]");
    if (snr_db && !std::isfinite(*snr_db))
        throw argument_error("generate_scenario: snr_db must be finite");

    std::mt19937_64 rng(mix64(seed));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double unit = std::sqrt(0.5);
    auto cn = [&](double scale) { return Complex(scale * normal(rng), scale * normal(rng)); };

    Scenario sc;
    sc.n_devices = n_devices;
    sc.n_antennas = n_antennas;
    sc.pilot_len = pilot_len;
    sc.n_active = n_active;
    sc.seed = seed;

    sc.pilots.resize(pilot_len, n_devices);
    for (int j = 0; j < n_devices; ++j)
        for (int l = 0; l < pilot_len; ++l) sc.pilots(l, j) = cn(unit);

    sc.channels.resize(n_devices, n_antennas);
    for (int i = 0; i < n_devices; ++i)
        for (int m = 0; m < n_antennas; ++m) sc.channels(i, m) = cn(unit);

    // partial Fisher-Yates: first K slots form a uniform K-subset
    std::vector<int> perm(n_devices);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 0; i < n_active; ++i) {
        std::uniform_int_distribution<int> pick(i, n_devices - 1);
        std::swap(perm[i], perm[pick(rng)]);
    }
    sc.activity.assign(n_devices, 0);
    for (int i = 0; i < n_active; ++i) sc.activity[perm[i]] = 1;

    sc.ground_truth = ComplexMatrix::Zero(n_devices, n_antennas);
    for (int i = 0; i < n_devices; ++i)
        if (sc.activity[i]) sc.ground_truth.row(i) = sc.channels.row(i);

    sc.observation = sc.pilots * sc.ground_truth;
    if (snr_db) {
        sc.noise_var = noise_variance_for_snr(n_active, *snr_db);
        const double s = std::sqrt(sc.noise_var / 2.0);
        for (int m = 0; m < n_antennas; ++m)
            for (int l = 0; l < pilot_len; ++l) sc.observation(l, m) += cn(s);
    }
    return sc;
}

/// Real-valued lifting of Y = S X:
///   design = [[Re S, -Im S], [Im S, Re S]]  (2L x 2N)
///   observation = [Re Y; Im Y]               (2L x M)
/// Device i owns real rows {i, N+i} of the lifted unknown.
struct RealifiedSystem {
    RealMatrix design;
    RealMatrix observation;
    int n_groups = 0;

    int group_dim() const { return 2 * static_cast<int>(observation.cols()); }
    std::pair<int, int> group_rows(int i) const { return {i, n_groups + i}; }
};

/// Stacks [Re X; Im X].
inline RealMatrix stack_real(const ComplexMatrix& x)
{
    const auto n = x.rows();
    RealMatrix out(2 * n, x.cols());
    out.topRows(n) = x.real();
    out.bottomRows(n) = x.imag();
    return out;
}

inline ComplexMatrix derealify(const RealMatrix& x_real)
{
    if (x_real.rows() % 2 != 0)
        throw argument_error("derealify: row count must be even");
    const auto n = x_real.rows() / 2;
    ComplexMatrix out(n, x_real.cols());
    out.real() = x_real.topRows(n);
    out.imag() = x_real.bottomRows(n);
    return out;
}

inline RealifiedSystem realify(const ComplexMatrix& pilots, const ComplexMatrix& observation)
{
    if (pilots.rows() != observation.rows())
        throw argument_error("realify: pilots and observation must have the same row count");
    const auto l = pilots.rows();
    const auto n = pilots.cols();
    RealifiedSystem sys;
    sys.n_groups = static_cast<int>(n);
    sys.design.resize(2 * l, 2 * n);
    sys.design.topLeftCorner(l, n) = pilots.real();
    sys.design.topRightCorner(l, n) = -pilots.imag();
    sys.design.bottomLeftCorner(l, n) = pilots.imag();
    sys.design.bottomRightCorner(l, n) = pilots.real();
    sys.observation = stack_real(observation);
    return sys;
}

/// Inverse of realify: recovers (S, Y) from the lifted system.
inline std::pair<ComplexMatrix, ComplexMatrix> complex_system(const RealifiedSystem& sys)
{
    const auto l = sys.design.rows() / 2;
    const auto n = sys.n_groups;
    ComplexMatrix s(l, n);
    s.real() = sys.design.topLeftCorner(l, n);
    s.imag() = sys.design.bottomLeftCorner(l, n);
    return {s, derealify(sys.observation)};
}

inline RealVector row_group_norms(const ComplexMatrix& x)
{
    return x.rowwise().norm();
}

/// Group norms of a lifted 2N x M matrix, group i = rows {i, N+i}.
inline RealVector real_group_norms(const RealMatrix& x_real)
{
    const auto n = x_real.rows() / 2;
    return (x_real.topRows(n).rowwise().squaredNorm() + x_real.bottomRows(n).rowwise().squaredNorm())
        .cwiseSqrt();
}

}  // namespace jadce
