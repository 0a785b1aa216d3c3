// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cupmu {

using Vec = std::vector<double>;

enum class ErrorCode {
    Config,
    DimensionMismatch,
    EmptyDataset,
    NonFinite,
    DegenerateFrame,
    Io,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::Config: return "config";
        case ErrorCode::DimensionMismatch: return "dimension_mismatch";
        case ErrorCode::EmptyDataset: return "empty_dataset";
        case ErrorCode::NonFinite: return "non_finite";
        case ErrorCode::DegenerateFrame: return "degenerate_frame";
        case ErrorCode::Io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) throw Error(code, what);
}

// splitmix64 finalizer; stable across platforms.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent child seed from (master, stream).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
    return mix64(mix64(master) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

// FNV-1a 64
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---- small dense-vector helpers -------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorCode::DimensionMismatch, "dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(std::span<const double> a) {
    for (double x : a)
        if (!std::isfinite(x)) return false;
    return true;
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    require(x.size() == y.size(), ErrorCode::DimensionMismatch, "axpy: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vec scaled(std::span<const double> x, double alpha) {
    Vec out(x.begin(), x.end());
    for (double& v : out) v *= alpha;
    return out;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

}  // namespace cupmu
