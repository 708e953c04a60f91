// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace rita {

/// One embedding row: N finite coordinates describing a single video frame.
class HyperparamVector {
public:
    HyperparamVector() = default;
    explicit HyperparamVector(std::vector<double> values);
    HyperparamVector(std::initializer_list<double> values);

    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const double> values() const noexcept { return values_; }

    friend bool operator==(const HyperparamVector&, const HyperparamVector&) = default;

private:
    std::vector<double> values_;
};

struct SimilarityDistance {
    double value = 0.0;

    friend auto operator<=>(const SimilarityDistance&, const SimilarityDistance&) = default;
};

struct MetricConfig {
    double epsilon = 1e-8;
    /// Expected dimensionality; 0 accepts any length as long as both sides agree.
    std::size_t dims = 0;
};

/// Sum over n of |a_n - b_n| / max(|a_n|, |b_n|, epsilon).
SimilarityDistance similarity_distance(const HyperparamVector& a, const HyperparamVector& b,
                                       const MetricConfig& cfg = {});

double l1_distance(const HyperparamVector& a, const HyperparamVector& b);

namespace detail {

// Shared by the public metric and the index scans so both produce identical bits.
inline double sd_term(double a, double b, double eps) noexcept {
    const double diff = a > b ? a - b : b - a;
    const double abs_a = a < 0 ? -a : a;
    const double abs_b = b < 0 ? -b : b;
    double denom = abs_a > abs_b ? abs_a : abs_b;
    if (denom < eps) denom = eps;
    return diff / denom;
}

inline double sd_kernel(const double* a, const double* b, std::size_t n, double eps) noexcept {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += sd_term(a[i], b[i], eps);
    return sum;
}

void check_same_dims(std::size_t a, std::size_t b);

} // namespace detail
} // namespace rita
