// SPDX-License-Identifier: Apache-2.0
#include "rita/core.hpp"

#include <cmath>
#include <string>

#include "rita/error.hpp"

namespace rita {

HyperparamVector::HyperparamVector(std::vector<double> values) : values_(std::move(values)) {
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            fail(Errc::invalid_argument,
                 "hyperparameter component " + std::to_string(i) + " is not finite");
        }
    }
}

HyperparamVector::HyperparamVector(std::initializer_list<double> values)
    : HyperparamVector(std::vector<double>(values)) {}

namespace detail {

void check_same_dims(std::size_t a, std::size_t b) {
    if (a != b) {
        fail(Errc::dimension, "dimensionality mismatch: " + std::to_string(a) + " vs " +
                                  std::to_string(b));
    }
}

} // namespace detail

SimilarityDistance similarity_distance(const HyperparamVector& a, const HyperparamVector& b,
                                       const MetricConfig& cfg) {
    detail::check_same_dims(a.size(), b.size());
    if (cfg.dims != 0) detail::check_same_dims(a.size(), cfg.dims);
    if (!(cfg.epsilon > 0.0)) fail(Errc::invalid_argument, "metric epsilon must be positive");
    return {detail::sd_kernel(a.values().data(), b.values().data(), a.size(), cfg.epsilon)};
}

double l1_distance(const HyperparamVector& a, const HyperparamVector& b) {
    detail::check_same_dims(a.size(), b.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::fabs(a[i] - b[i]);
    return sum;
}

} // namespace rita
