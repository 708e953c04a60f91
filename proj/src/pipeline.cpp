// SPDX-License-Identifier: Apache-2.0
#include "rita/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "rita/error.hpp"

namespace rita {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

} // namespace

double real_time_factor(double total_ms, double audio_duration_ms) noexcept {
    return audio_duration_ms > 0.0 ? total_ms / audio_duration_ms : 0.0;
}

LatencyReport mean_report(std::span<const LatencyReport> runs) {
    LatencyReport m;
    if (runs.empty()) return m;
    for (const auto& r : runs) {
        m.embed_ms += r.embed_ms;
        m.match_ms += r.match_ms;
        m.reduce_ms += r.reduce_ms;
        m.interpolate_ms += r.interpolate_ms;
        m.total_ms += r.total_ms;
        m.ttff_ms += r.ttff_ms;
        m.audio_duration_ms += r.audio_duration_ms;
        m.frames += r.frames;
    }
    const double n = static_cast<double>(runs.size());
    m.embed_ms /= n;
    m.match_ms /= n;
    m.reduce_ms /= n;
    m.interpolate_ms /= n;
    m.total_ms /= n;
    m.ttff_ms /= n;
    m.audio_duration_ms /= n;
    m.frames = static_cast<std::size_t>(std::llround(double(m.frames) / n));
    m.real_time_factor = real_time_factor(m.total_ms, m.audio_duration_ms);
    return m;
}

// ---------------------------------------------------------------------------

Pipeline::Pipeline(std::shared_ptr<const FrameLibrary> library, std::shared_ptr<const Index> index,
                   std::shared_ptr<const Renderer> renderer, PipelineConfig config,
                   std::shared_ptr<const InterpolatorRegistry> interpolators)
    : library_(std::move(library)),
      index_(std::move(index)),
      renderer_(std::move(renderer)),
      config_(config),
      interpolators_(std::move(interpolators)) {
    if (!library_ || !index_ || !renderer_) fail(Errc::invalid_argument, "pipeline needs library, index and renderer");
    if (index_->size() != library_->size() || index_->dims() != library_->dims()) {
        fail(Errc::invalid_argument, "index was not built over this library");
    }
    if (target_fps() + 1e-9 < library_->fps() / 2.0) {
        fail(Errc::config, "target fps below the reduced cadence");
    }
}

double Pipeline::target_fps() const noexcept {
    return config_.target_fps > 0.0 ? config_.target_fps : static_cast<double>(library_->fps());
}

EmbedderConfig Pipeline::embedder_config() const {
    return EmbedderConfig::with_dims(library_->dims(), library_->fps());
}

LatencyReport Pipeline::run(const FeatureFrameStream& stream, double embed_ms, const FrameCallback& on_frame,
                            UtteranceTrace* trace) const {
    if (stream.empty()) fail(Errc::invalid_argument, "utterance produced no frames");
    if (stream.fps != library_->fps()) {
        fail(Errc::invalid_argument, "stream fps " + std::to_string(stream.fps) + " differs from library fps " +
                                         std::to_string(library_->fps()));
    }
    LatencyReport report;
    report.embed_ms = embed_ms;
    report.audio_duration_ms = stream.duration_ms();
    const auto start = Clock::now();

    auto t = Clock::now();
    MatchSequence matches = match_sequence(*index_, stream, config_.match);
    report.match_ms = ms_since(t);

    t = Clock::now();
    ReducedSequence reduced = reduce_frames(matches.results, stream.fps);
    report.reduce_ms = ms_since(t);

    t = Clock::now();
    const double fps = target_fps();
    std::optional<std::size_t> pad;
    if (config_.pad_to_source_length) {
        pad = static_cast<std::size_t>(std::llround(double(stream.size()) * fps / stream.fps));
    }
    RenderPlan plan = plan_interpolation(reduced, fps, pad);
    MaterializeOptions mopts;
    mopts.mode = config_.interp;
    mopts.interpolators = interpolators_.get();
    bool first = true;
    materialize(plan, *library_, *renderer_, mopts, [&](OutputFrame&& frame) {
        if (first) {
            report.ttff_ms = embed_ms + ms_since(start);
            first = false;
        }
        ++report.frames;
        if (on_frame) on_frame(frame);
    });
    report.interpolate_ms = ms_since(t);
    report.total_ms = embed_ms + ms_since(start);
    report.real_time_factor = real_time_factor(report.total_ms, report.audio_duration_ms);

    if (trace) {
        trace->matches = std::move(matches);
        trace->reduced = std::move(reduced);
        trace->plan = std::move(plan);
    }
    return report;
}

LatencyReport Pipeline::run_text(std::string_view text, const FrameCallback& on_frame, UtteranceTrace* trace) const {
    const auto t = Clock::now();
    const FeatureFrameStream stream = embed_text_stub(text, embedder_config());
    return run(stream, ms_since(t), on_frame, trace);
}

LatencyReport Pipeline::run_wav(const PcmAudio& audio, const FrameCallback& on_frame, UtteranceTrace* trace) const {
    const auto t = Clock::now();
    const FeatureFrameStream stream = embed_wav(audio, embedder_config());
    return run(stream, ms_since(t), on_frame, trace);
}

// ---------------------------------------------------------------------------

void MetricsRegistry::record(const LatencyReport& r) {
    std::lock_guard lock(mutex_);
    ++count_;
    frames_ += r.frames;
    sum_.embed_ms += r.embed_ms;
    sum_.match_ms += r.match_ms;
    sum_.reduce_ms += r.reduce_ms;
    sum_.interpolate_ms += r.interpolate_ms;
    sum_.total_ms += r.total_ms;
    sum_.ttff_ms += r.ttff_ms;
    sum_.audio_duration_ms += r.audio_duration_ms;
    max_total_ms_ = std::max(max_total_ms_, r.total_ms);
}

std::size_t MetricsRegistry::count() const {
    std::lock_guard lock(mutex_);
    return count_;
}

LatencyReport MetricsRegistry::mean() const {
    std::lock_guard lock(mutex_);
    LatencyReport m;
    if (count_ == 0) return m;
    const double n = static_cast<double>(count_);
    m.embed_ms = sum_.embed_ms / n;
    m.match_ms = sum_.match_ms / n;
    m.reduce_ms = sum_.reduce_ms / n;
    m.interpolate_ms = sum_.interpolate_ms / n;
    m.total_ms = sum_.total_ms / n;
    m.ttff_ms = sum_.ttff_ms / n;
    m.audio_duration_ms = sum_.audio_duration_ms / n;
    m.frames = frames_;
    m.real_time_factor = real_time_factor(m.total_ms, m.audio_duration_ms);
    return m;
}

std::string MetricsRegistry::format() const {
    const LatencyReport m = mean();
    double max_total;
    std::size_t count;
    {
        std::lock_guard lock(mutex_);
        max_total = max_total_ms_;
        count = count_;
    }
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "utterances=%zu\nframes=%zu\nmean_embed_ms=%.3f\nmean_match_ms=%.3f\nmean_reduce_ms=%.3f\n"
                  "mean_interpolate_ms=%.3f\nmean_total_ms=%.3f\nmax_total_ms=%.3f\nmean_ttff_ms=%.3f\n"
                  "mean_real_time_factor=%.4f\n",
                  count, m.frames, m.embed_ms, m.match_ms, m.reduce_ms, m.interpolate_ms, m.total_ms,
                  max_total, m.ttff_ms, m.real_time_factor);
    return buf;
}

// ---------------------------------------------------------------------------
// Benchmark harness

std::string bench_utterance(double seconds, int fps) {
    static constexpr std::string_view phrase = "hello there, it is lovely to see you again today. ";
    const auto frames = static_cast<std::size_t>(std::llround(seconds * fps));
    const std::size_t chars = std::max<std::size_t>(1, (frames + kFramesPerCharacter - 1) / kFramesPerCharacter);
    std::string text;
    text.reserve(chars);
    while (text.size() < chars) text += phrase.substr(0, std::min(phrase.size(), chars - text.size()));
    // Leading and trailing blanks would be trimmed away; keep the length exact.
    if (text.back() == ' ') text.back() = 'a';
    if (text.front() == ' ') text.front() = 'a';
    return text;
}

std::vector<BenchRow> run_bench(const BenchConfig& config) {
    if (config.runs < 1) fail(Errc::invalid_argument, "bench needs at least one run");
    std::vector<BenchRow> rows;
    auto renderer = std::make_shared<const ParametricFaceRenderer>(config.render);
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t k : config.lib_sizes) {
        std::vector<HyperparamVector> lib_rows;
        lib_rows.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            std::vector<double> v(config.dims);
            for (auto& x : v) x = unit(rng);
            lib_rows.emplace_back(std::move(v));
        }
        auto lib = std::make_shared<const FrameLibrary>(FrameLibrary::in_memory(lib_rows, config.fps, renderer));
        auto index = std::make_shared<const Index>(Index::build(*lib, config.mode));
        PipelineConfig pcfg;
        pcfg.interp = config.interp;
        const Pipeline pipeline(lib, index, renderer, pcfg);
        for (double secs : config.utterance_secs) {
            const std::string text = bench_utterance(secs, config.fps);
            std::vector<LatencyReport> reports;
            for (int r = 0; r < config.runs; ++r) reports.push_back(pipeline.run_text(text, nullptr));
            rows.push_back({k, secs, mean_report(reports)});
        }
    }
    return rows;
}

std::string format_bench_csv(std::span<const BenchRow> rows) {
    std::string out = "k_frames,utterance_s,embed_ms,match_ms,reduce_ms,interpolate_ms,total_ms,ttff_ms,rtf\n";
    char buf[256];
    for (const auto& r : rows) {
        const auto& m = r.mean;
        std::snprintf(buf, sizeof buf, "%zu,%.3f,%.3f,%.3f,%.3f,%.3f,%.3f,%.3f,%.4f\n", r.k_frames, r.utterance_s,
                      m.embed_ms, m.match_ms, m.reduce_ms, m.interpolate_ms, m.total_ms, m.ttff_ms,
                      m.real_time_factor);
        out += buf;
    }
    return out;
}

} // namespace rita
