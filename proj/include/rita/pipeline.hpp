// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "rita/embedder.hpp"
#include "rita/frame_library.hpp"
#include "rita/interpolation.hpp"
#include "rita/match_engine.hpp"
#include "rita/renderer.hpp"

namespace rita {

/// Wall-clock milliseconds per stage of one utterance.
struct LatencyReport {
    double embed_ms = 0.0;
    double match_ms = 0.0;
    double reduce_ms = 0.0;
    double interpolate_ms = 0.0;
    double total_ms = 0.0;
    /// Start of the utterance to the first deliverable frame.
    double ttff_ms = 0.0;
    double audio_duration_ms = 0.0;
    double real_time_factor = 0.0;
    std::size_t frames = 0;
};

double real_time_factor(double total_ms, double audio_duration_ms) noexcept;

/// Field-wise mean; real_time_factor is recomputed from the mean timings.
LatencyReport mean_report(std::span<const LatencyReport> runs);

struct PipelineConfig {
    /// Output cadence; 0 means the library fps.
    double target_fps = 0.0;
    InterpMode interp = InterpMode::param_space;
    /// Repeat the last frame so output length matches the input stream.
    bool pad_to_source_length = true;
    MatchOptions match;
};

/// Intermediate products of one run, for tracing and tests.
struct UtteranceTrace {
    MatchSequence matches;
    ReducedSequence reduced;
    RenderPlan plan;
};

/// Embedding -> match -> reduce -> interpolate over one shared (library, index).
/// `run` is const and may be called from many threads at once.
class Pipeline {
public:
    Pipeline(std::shared_ptr<const FrameLibrary> library, std::shared_ptr<const Index> index,
             std::shared_ptr<const Renderer> renderer, PipelineConfig config = {},
             std::shared_ptr<const InterpolatorRegistry> interpolators = nullptr);

    const FrameLibrary& library() const noexcept { return *library_; }
    const Index& index() const noexcept { return *index_; }
    const Renderer& renderer() const noexcept { return *renderer_; }
    const PipelineConfig& config() const noexcept { return config_; }
    double target_fps() const noexcept;
    EmbedderConfig embedder_config() const;

    using FrameCallback = std::function<void(const OutputFrame&)>;

    /// `embed_ms` is the time already spent producing `stream`; it is counted
    /// into total_ms and ttff_ms.
    LatencyReport run(const FeatureFrameStream& stream, double embed_ms, const FrameCallback& on_frame,
                      UtteranceTrace* trace = nullptr) const;

    LatencyReport run_text(std::string_view text, const FrameCallback& on_frame,
                           UtteranceTrace* trace = nullptr) const;
    LatencyReport run_wav(const PcmAudio& audio, const FrameCallback& on_frame,
                          UtteranceTrace* trace = nullptr) const;

private:
    std::shared_ptr<const FrameLibrary> library_;
    std::shared_ptr<const Index> index_;
    std::shared_ptr<const Renderer> renderer_;
    PipelineConfig config_;
    std::shared_ptr<const InterpolatorRegistry> interpolators_;
};

/// Running aggregate of latency reports; safe under concurrent writers.
class MetricsRegistry {
public:
    void record(const LatencyReport& report);
    std::size_t count() const;
    LatencyReport mean() const;
    /// `key=value` lines.
    std::string format() const;

private:
    mutable std::mutex mutex_;
    std::size_t count_ = 0;
    std::size_t frames_ = 0;
    LatencyReport sum_;
    double max_total_ms_ = 0.0;
};

struct BenchConfig {
    std::vector<std::size_t> lib_sizes = {600, 10000};
    std::vector<double> utterance_secs = {1.0, 4.0};
    int runs = 10;
    std::size_t dims = 8;
    int fps = 25;
    IndexMode mode = IndexMode::exact;
    InterpMode interp = InterpMode::param_space;
    RenderSpec render{};
    std::uint64_t seed = 20240312;
};

struct BenchRow {
    std::size_t k_frames = 0;
    double utterance_s = 0.0;
    LatencyReport mean;
};

/// Stub text whose viseme stream lasts `seconds` at `fps`.
std::string bench_utterance(double seconds, int fps);

/// One row per (library size, utterance length), each the mean of `runs` repetitions.
std::vector<BenchRow> run_bench(const BenchConfig& config);

std::string format_bench_csv(std::span<const BenchRow> rows);

} // namespace rita
