// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "rita/core.hpp"
#include "rita/frame_library.hpp"

namespace rita::test {

inline std::filesystem::path data_dir() { return RITA_TEST_DATA_DIR; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "rita") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::vector<HyperparamVector> random_rows(std::size_t k, std::size_t n, std::uint64_t seed,
                                                 double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<HyperparamVector> rows;
    rows.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::vector<double> v(n);
        for (auto& x : v) x = u(rng);
        rows.emplace_back(std::move(v));
    }
    return rows;
}

inline std::vector<float> to_float_matrix(std::span<const HyperparamVector> rows) {
    std::vector<float> m;
    for (const auto& r : rows) {
        for (double x : r.values()) m.push_back(static_cast<float>(x));
    }
    return m;
}

/// Reference argmin written straight from the metric definition: no shared
/// code with the library, strict comparison so the lowest id wins ties.
struct OracleHit {
    std::uint32_t id = 0;
    double sd = 0.0;
};

inline double oracle_sd(const double* a, const double* b, std::size_t n, double eps = 1e-8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double den = std::max({std::fabs(a[i]), std::fabs(b[i]), eps});
        s += std::fabs(a[i] - b[i]) / den;
    }
    return s;
}

inline OracleHit oracle_argmin(std::span<const float> matrix, std::size_t n, std::span<const double> q) {
    OracleHit best{0, INFINITY};
    std::vector<double> row(n);
    const std::size_t k = matrix.size() / n;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < n; ++j) row[j] = matrix[i * n + j];
        const double d = oracle_sd(q.data(), row.data(), n);
        if (d < best.sd) best = {static_cast<std::uint32_t>(i), d};
    }
    return best;
}

inline std::vector<std::vector<double>> read_csv_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace rita::test
