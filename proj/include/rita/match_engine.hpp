// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rita/core.hpp"
#include "rita/embedder.hpp"
#include "rita/frame_library.hpp"

namespace rita {

enum class IndexMode { exact, approximate };

std::string_view to_string(IndexMode mode) noexcept;
IndexMode parse_index_mode(std::string_view text);

struct IndexParams {
    /// Size of the candidate pool kept during tree search and ranked by exact SD.
    std::size_t candidate_k = 32;
    std::size_t leaf_size = 16;
    /// Bounded-error slack: a cell is skipped once its SD lower bound times
    /// (1 + ann_epsilon) exceeds the worst pooled candidate.
    double ann_epsilon = 0.5;
    MetricConfig metric{};
};

struct MatchResult {
    std::size_t query_index = 0;
    FrameId frame_id = 0;
    SimilarityDistance sd{};
    std::int64_t timestamp_ms = 0;

    friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

/// Read-only search structure over the library's K parameter rows. Safe to
/// share between any number of concurrent query callers.
class Index {
public:
    static Index build(const FrameLibrary& lib, IndexMode mode, const IndexParams& params = {});
    /// rows is K x dims row-major.
    static Index build(std::span<const float> rows, std::size_t dims, IndexMode mode,
                       const IndexParams& params = {});

    IndexMode mode() const noexcept { return mode_; }
    std::size_t size() const noexcept { return k_; }
    std::size_t dims() const noexcept { return dims_; }
    const IndexParams& params() const noexcept { return params_; }

    /// Best frame by SD among the scanned candidates; ties go to the lowest frame id.
    MatchResult query(const HyperparamVector& v) const;

    /// SD between v and library row `id`, computed with the index's metric.
    SimilarityDistance distance_to(const HyperparamVector& v, FrameId id) const;

private:
    struct Node {
        std::uint32_t begin = 0, end = 0;
        std::int32_t left = -1, right = -1;
    };

    Index() = default;
    std::int32_t build_node(std::uint32_t begin, std::uint32_t end);
    MatchResult scan(const double* q) const;
    MatchResult tree_search(const double* q) const;
    double cell_bound(const double* q, std::size_t node) const;

    IndexMode mode_ = IndexMode::exact;
    IndexParams params_;
    std::size_t k_ = 0;
    std::size_t dims_ = 0;
    std::vector<double> rows_;      // k x dims, library order
    std::vector<double> tree_rows_; // k x dims, tree order
    std::vector<FrameId> tree_ids_;
    std::vector<Node> nodes_;
    std::vector<double> boxes_;     // per node: dims lows then dims highs
};

struct MatchOptions {
    /// Extra cost charged for switching away from the previous frame; 0 disables.
    double temporal_penalty = 0.0;
};

struct MatchSequence {
    std::vector<MatchResult> results;
    int fps = 25;
    double elapsed_ms = 0.0;
};

MatchSequence match_sequence(const Index& index, const FeatureFrameStream& stream,
                             const MatchOptions& options = {});

struct ReducedSequence {
    std::vector<MatchResult> kept;
    /// Position of each kept element in the input sequence.
    std::vector<std::size_t> kept_positions;
    std::size_t dropped_count = 0;
    int source_fps = 25;

    /// Cadence of the kept frames: half the source rate.
    double cadence_fps() const noexcept { return source_fps / 2.0; }
};

/// From each disjoint pair (0,1), (2,3), ... keeps the lower-SD member (earlier on ties);
/// an unpaired trailing frame is kept.
ReducedSequence reduce_frames(std::span<const MatchResult> matches, int source_fps = 25);

std::string format_match_trace(std::span<const MatchResult> matches);
std::vector<MatchResult> parse_match_trace(std::string_view text);
void save_match_trace(std::span<const MatchResult> matches, const std::filesystem::path& path);
std::vector<MatchResult> load_match_trace(const std::filesystem::path& path);

} // namespace rita
