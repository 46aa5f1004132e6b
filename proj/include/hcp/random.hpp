#pragma once

// Counter-based deterministic randomness. Every draw is a pure function of
// (seed, stream, index), so results are bit-identical across runs and thread
// schedules. Streams keep calibration draws, test draws, labels and splits
// statistically independent of each other.

#include <cmath>
#include <cstdint>
#include <vector>

#include "hcp/errors.hpp"

namespace hcp {

namespace rng {

inline constexpr std::uint64_t kCalibrationStream = 0x43414c4942ull;  // "CALIB"
inline constexpr std::uint64_t kTestStream = 0x54455354ull;           // "TEST"
inline constexpr std::uint64_t kRowStream = 0x524f57ull;              // "ROW"
inline constexpr std::uint64_t kLabelStream = 0x4c41424cull;          // "LABL"
inline constexpr std::uint64_t kSplitStream = 0x53504c49ull;          // "SPLI"
inline constexpr std::uint64_t kResampleStream = 0x52455341ull;       // "RESA"

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

// Uniform in [0, 1).
inline double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Uniform in (0, 1); never returns an exact endpoint.
inline double to_open_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return to_unit(mix(seed, stream, index));
}

// Small counter-based substream for samplers that need a variable number of
// draws (rejection loops).
class Substream {
public:
    explicit Substream(std::uint64_t key) : key_(key) {}
    double next_open_unit() { return to_open_unit(splitmix64(key_ + counter_++)); }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Standard normal via the polar (Marsaglia) method.
inline double standard_normal(Substream& s) {
    for (;;) {
        const double a = 2.0 * s.next_open_unit() - 1.0;
        const double b = 2.0 * s.next_open_unit() - 1.0;
        const double q = a * a + b * b;
        if (q > 0.0 && q < 1.0) return a * std::sqrt(-2.0 * std::log(q) / q);
    }
}

// Gamma(shape, 1) via Marsaglia-Tsang, with the usual boost for shape < 1.
inline double gamma_sample(double shape, Substream& s) {
    if (shape <= 0.0) throw usage_error("gamma_sample: shape must be positive");
    if (shape < 1.0) {
        const double u = s.next_open_unit();
        return gamma_sample(shape + 1.0, s) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        const double x = standard_normal(s);
        const double t = 1.0 + c * x;
        if (t <= 0.0) continue;
        const double v = t * t * t;
        const double u = s.next_open_unit();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

// Symmetric Dirichlet(concentration) row of length k.
inline std::vector<double> dirichlet_row(int k, double concentration, std::uint64_t key) {
    if (k < 1) throw usage_error("dirichlet_row: k must be >= 1");
    if (concentration <= 0.0) throw usage_error("dirichlet_row: concentration must be positive");
    Substream s(key);
    std::vector<double> row(static_cast<std::size_t>(k));
    double total = 0.0;
    for (double& x : row) {
        x = gamma_sample(concentration, s);
        total += x;
    }
    for (double& x : row) x /= total;
    return row;
}

// Fisher-Yates with keyed draws; deterministic for a given key.
inline std::vector<int> shuffled_indices(int n, std::uint64_t key) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    Substream s(key);
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(s.next_open_unit() * (i + 1));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(std::min(j, i))]);
    }
    return idx;
}

}  // namespace rng

}  // namespace hcp
