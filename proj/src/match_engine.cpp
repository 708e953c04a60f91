// SPDX-License-Identifier: Apache-2.0
#include "rita/match_engine.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <queue>

#include "rita/error.hpp"
#include "rita/io.hpp"

namespace rita {

std::string_view to_string(IndexMode mode) noexcept {
    return mode == IndexMode::exact ? "exact" : "approx";
}

IndexMode parse_index_mode(std::string_view text) {
    if (text == "exact") return IndexMode::exact;
    if (text == "approx" || text == "approximate") return IndexMode::approximate;
    fail(Errc::invalid_argument, "unknown index mode '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Index

Index Index::build(const FrameLibrary& lib, IndexMode mode, const IndexParams& params) {
    return build(lib.param_matrix(), lib.dims(), mode, params);
}

Index Index::build(std::span<const float> rows, std::size_t dims, IndexMode mode,
                   const IndexParams& params) {
    if (dims == 0 || rows.empty()) fail(Errc::invalid_argument, "cannot index an empty library");
    if (rows.size() % dims != 0) fail(Errc::dimension, "row buffer is not a multiple of dims");
    if (params.candidate_k == 0) fail(Errc::invalid_argument, "candidate_k must be >= 1");
    if (!(params.metric.epsilon > 0)) fail(Errc::invalid_argument, "metric epsilon must be positive");

    Index index;
    index.mode_ = mode;
    index.params_ = params;
    index.dims_ = dims;
    index.k_ = rows.size() / dims;
    index.rows_.assign(rows.begin(), rows.end());
    if (mode == IndexMode::approximate) {
        index.tree_ids_.resize(index.k_);
        std::iota(index.tree_ids_.begin(), index.tree_ids_.end(), FrameId{0});
        index.tree_rows_.resize(index.rows_.size());
        index.build_node(0, static_cast<std::uint32_t>(index.k_));
        for (std::size_t i = 0; i < index.k_; ++i) {
            std::copy_n(index.rows_.data() + index.tree_ids_[i] * dims, dims,
                        index.tree_rows_.data() + i * dims);
        }
    }
    return index;
}

// Splits on the coordinate with the widest range at its median; every node keeps
// its tight bounding box for search-time bounds.
std::int32_t Index::build_node(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({begin, end, -1, -1});
    const std::size_t box_at = boxes_.size();
    boxes_.resize(box_at + 2 * dims_);
    double* lo = boxes_.data() + box_at;
    double* hi = lo + dims_;
    std::fill(lo, lo + dims_, INFINITY);
    std::fill(hi, hi + dims_, -INFINITY);
    for (std::uint32_t i = begin; i < end; ++i) {
        const double* row = rows_.data() + tree_ids_[i] * dims_;
        for (std::size_t n = 0; n < dims_; ++n) {
            lo[n] = std::min(lo[n], row[n]);
            hi[n] = std::max(hi[n], row[n]);
        }
    }
    if (end - begin <= std::max<std::size_t>(params_.leaf_size, 1)) return id;

    std::size_t split = 0;
    double widest = -1.0;
    for (std::size_t n = 0; n < dims_; ++n) {
        if (hi[n] - lo[n] > widest) {
            widest = hi[n] - lo[n];
            split = n;
        }
    }
    if (widest <= 0.0) return id; // all rows identical

    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(tree_ids_.begin() + begin, tree_ids_.begin() + mid, tree_ids_.begin() + end,
                     [&](FrameId a, FrameId b) {
                         const double va = rows_[a * dims_ + split];
                         const double vb = rows_[b * dims_ + split];
                         return va < vb || (va == vb && a < b);
                     });
    const std::int32_t left = build_node(begin, mid);
    const std::int32_t right = build_node(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

// Lower bound of SD over the node's box. Per coordinate the SD term is
// minimised at the box point nearest the query or at a box corner (the term is
// monotone on the query's side of zero and unimodal on the other side).
double Index::cell_bound(const double* q, std::size_t node) const {
    const double* lo = boxes_.data() + node * 2 * dims_;
    const double* hi = lo + dims_;
    const double eps = params_.metric.epsilon;
    double bound = 0.0;
    for (std::size_t n = 0; n < dims_; ++n) {
        if (q[n] >= lo[n] && q[n] <= hi[n]) continue;
        const double nearest = q[n] < lo[n] ? lo[n] : hi[n];
        double term = detail::sd_term(q[n], nearest, eps);
        term = std::min(term, detail::sd_term(q[n], lo[n], eps));
        term = std::min(term, detail::sd_term(q[n], hi[n], eps));
        bound += term;
    }
    return bound;
}

MatchResult Index::scan(const double* q) const {
    const double eps = params_.metric.epsilon;
    double best = INFINITY;
    FrameId best_id = 0;
    for (std::size_t j = 0; j < k_; ++j) {
        const double d = detail::sd_kernel(q, rows_.data() + j * dims_, dims_, eps);
        if (d < best) {
            best = d;
            best_id = static_cast<FrameId>(j);
        }
    }
    return {0, best_id, {best}, 0};
}

MatchResult Index::tree_search(const double* q) const {
    struct Candidate {
        double sd;
        FrameId id;
        bool operator<(const Candidate& o) const { return sd < o.sd || (sd == o.sd && id < o.id); }
    };
    struct Pending {
        double bound;
        std::int32_t node;
        bool operator>(const Pending& o) const { return bound > o.bound; }
    };

    const double eps = params_.metric.epsilon;
    const double slack = 1.0 + params_.ann_epsilon;
    const std::size_t pool_size = params_.candidate_k;
    std::priority_queue<Candidate> pool; // max-heap: worst candidate on top
    std::priority_queue<Pending, std::vector<Pending>, std::greater<>> frontier;
    frontier.push({0.0, 0});

    auto worst = [&] { return pool.size() < pool_size ? INFINITY : pool.top().sd; };

    while (!frontier.empty()) {
        const Pending p = frontier.top();
        frontier.pop();
        if (p.bound * slack > worst()) break;
        const Node& node = nodes_[p.node];
        if (node.left < 0) {
            for (std::uint32_t i = node.begin; i < node.end; ++i) {
                const Candidate c{detail::sd_kernel(q, tree_rows_.data() + i * dims_, dims_, eps),
                                  tree_ids_[i]};
                if (pool.size() < pool_size) {
                    pool.push(c);
                } else if (c < pool.top()) {
                    pool.pop();
                    pool.push(c);
                }
            }
            continue;
        }
        for (std::int32_t child : {node.left, node.right}) {
            const double b = cell_bound(q, static_cast<std::size_t>(child));
            if (b * slack <= worst()) frontier.push({b, child});
        }
    }

    // Re-rank the pool by exact SD (lowest id on ties).
    Candidate best{INFINITY, 0};
    while (!pool.empty()) {
        if (pool.top() < best) best = pool.top();
        pool.pop();
    }
    return {0, best.id, {best.sd}, 0};
}

MatchResult Index::query(const HyperparamVector& v) const {
    detail::check_same_dims(v.size(), dims_);
    const double* q = v.values().data();
    return mode_ == IndexMode::exact ? scan(q) : tree_search(q);
}

SimilarityDistance Index::distance_to(const HyperparamVector& v, FrameId id) const {
    detail::check_same_dims(v.size(), dims_);
    if (id >= k_) fail(Errc::invalid_argument, "frame id out of range");
    return {detail::sd_kernel(v.values().data(), rows_.data() + id * dims_, dims_, params_.metric.epsilon)};
}

// ---------------------------------------------------------------------------
// Sequences

MatchSequence match_sequence(const Index& index, const FeatureFrameStream& stream,
                             const MatchOptions& options) {
    if (stream.empty()) fail(Errc::invalid_argument, "cannot match an empty stream");
    const auto start = std::chrono::steady_clock::now();
    MatchSequence out;
    out.fps = stream.fps;
    out.results.reserve(stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i) {
        const auto& frame = stream.frames[i];
        MatchResult r = index.query(frame.vector);
        if (options.temporal_penalty > 0.0 && !out.results.empty()) {
            const FrameId prev = out.results.back().frame_id;
            if (prev != r.frame_id) {
                const SimilarityDistance stay = index.distance_to(frame.vector, prev);
                if (stay.value <= r.sd.value + options.temporal_penalty) {
                    r.frame_id = prev;
                    r.sd = stay;
                }
            }
        }
        r.query_index = i;
        r.timestamp_ms = frame.timestamp_ms;
        out.results.push_back(r);
    }
    out.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return out;
}

ReducedSequence reduce_frames(std::span<const MatchResult> matches, int source_fps) {
    if (matches.empty()) fail(Errc::invalid_argument, "cannot reduce an empty match sequence");
    ReducedSequence out;
    out.source_fps = source_fps;
    out.kept.reserve((matches.size() + 1) / 2);
    for (std::size_t t = 0; t < matches.size(); t += 2) {
        std::size_t keep = t;
        if (t + 1 < matches.size() && matches[t + 1].sd.value < matches[t].sd.value) keep = t + 1;
        out.kept.push_back(matches[keep]);
        out.kept_positions.push_back(keep);
    }
    out.dropped_count = matches.size() - out.kept.size();
    return out;
}

// ---------------------------------------------------------------------------
// Trace files

std::string format_match_trace(std::span<const MatchResult> matches) {
    std::string out = "# rita-match v1\n";
    char buf[128];
    for (const auto& m : matches) {
        std::snprintf(buf, sizeof buf, "%zu,%u,%.17g,%lld\n", m.query_index,
                      static_cast<unsigned>(m.frame_id), m.sd.value,
                      static_cast<long long>(m.timestamp_ms));
        out += buf;
    }
    return out;
}

std::vector<MatchResult> parse_match_trace(std::string_view text) {
    std::vector<MatchResult> out;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool header = false;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (line.front() == '#') {
            if (line.find("rita-match v1") == std::string_view::npos) {
                fail(Errc::parse, "line " + std::to_string(line_no) + ": expected '# rita-match v1'");
            }
            header = true;
            continue;
        }
        if (!header) fail(Errc::parse, "match trace has no header");
        MatchResult m;
        unsigned long long qi = 0, id = 0;
        long long ts = 0;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        auto expect_comma = [&] {
            if (p == end || *p != ',') fail(Errc::parse, "line " + std::to_string(line_no) + ": malformed row");
            ++p;
        };
        auto r1 = std::from_chars(p, end, qi);
        p = r1.ptr;
        expect_comma();
        auto r2 = std::from_chars(p, end, id);
        p = r2.ptr;
        expect_comma();
        auto r3 = std::from_chars(p, end, m.sd.value);
        p = r3.ptr;
        expect_comma();
        auto r4 = std::from_chars(p, end, ts);
        if (r1.ec != std::errc() || r2.ec != std::errc() || r3.ec != std::errc() ||
            r4.ec != std::errc() || r4.ptr != end) {
            fail(Errc::parse, "line " + std::to_string(line_no) + ": malformed row");
        }
        m.query_index = qi;
        m.frame_id = static_cast<FrameId>(id);
        m.timestamp_ms = ts;
        out.push_back(m);
    }
    return out;
}

void save_match_trace(std::span<const MatchResult> matches, const std::filesystem::path& path) {
    write_file_text(path, format_match_trace(matches));
}

std::vector<MatchResult> load_match_trace(const std::filesystem::path& path) {
    return parse_match_trace(read_file_text(path));
}

} // namespace rita
