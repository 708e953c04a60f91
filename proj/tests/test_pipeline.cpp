// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <thread>

#include "rita/error.hpp"
#include "rita/pipeline.hpp"
#include "support.hpp"

using namespace rita;

namespace {

struct Rig {
    std::shared_ptr<const Renderer> renderer =
        RendererRegistry::with_builtins().create({64, 64, "parametric-face-v1"});
    std::shared_ptr<const FrameLibrary> lib;
    std::shared_ptr<const Index> index;

    explicit Rig(IndexMode mode = IndexMode::exact) {
        std::vector<HyperparamVector> rows;
        for (const auto& f : coverage_grid(CoverageGrid{}, 8).frames) rows.push_back(f.vector);
        lib = std::make_shared<const FrameLibrary>(FrameLibrary::in_memory(rows, 25, renderer));
        index = std::make_shared<const Index>(Index::build(*lib, mode));
    }

    Pipeline make(PipelineConfig cfg = {}) const { return Pipeline(lib, index, renderer, cfg); }
};

std::vector<FrameId> plan_ids(const RenderPlan& plan) {
    std::vector<FrameId> out;
    for (const auto& e : plan.entries) {
        if (const auto* l = std::get_if<LibrarySource>(&e.source)) out.push_back(l->frame_id);
        else out.push_back(0xFFFFFFFFu);
    }
    return out;
}

} // namespace

TEST(Pipeline, TwoSecondStubGivesFiftyFrames) {
    Rig rig;
    const auto p = rig.make();
    const std::string text = bench_utterance(2.0, 25);
    ASSERT_EQ(text.size(), 25u);
    std::vector<OutputFrame> frames;
    UtteranceTrace trace;
    const auto rep = p.run_text(text, [&](const OutputFrame& f) { frames.push_back(f); }, &trace);
    EXPECT_EQ(trace.matches.results.size(), 50u);
    EXPECT_EQ(trace.reduced.kept.size(), 25u);
    EXPECT_EQ(frames.size(), 50u);
    EXPECT_EQ(rep.frames, 50u);
    EXPECT_DOUBLE_EQ(rep.audio_duration_ms, 2000.0);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        EXPECT_EQ(frames[i].seq, i);
        EXPECT_EQ(frames[i].timestamp_ms, std::int64_t(40 * i));
    }
}

TEST(Pipeline, WithoutPaddingPlanIsTwiceKeptMinusOne) {
    Rig rig;
    PipelineConfig cfg;
    cfg.pad_to_source_length = false;
    UtteranceTrace trace;
    rig.make(cfg).run_text("hello world", nullptr, &trace);
    EXPECT_EQ(trace.plan.size(), 2 * trace.reduced.kept.size() - 1);
}

TEST(Pipeline, LatencyReportIsConsistent) {
    Rig rig;
    const auto rep = rig.make().run_text("what a lovely day it is", nullptr);
    EXPECT_GT(rep.total_ms, 0.0);
    EXPECT_LE(rep.ttff_ms, rep.total_ms);
    EXPECT_LE(rep.match_ms + rep.reduce_ms + rep.interpolate_ms, rep.total_ms + 1e-6);
    EXPECT_DOUBLE_EQ(rep.real_time_factor, rep.total_ms / rep.audio_duration_ms);
}

TEST(Pipeline, DeterministicFrameSequence) {
    Rig a;
    Rig b;
    UtteranceTrace ta, tb;
    a.make().run_text("The quick brown fox jumps over the lazy dog", nullptr, &ta);
    b.make().run_text("The quick brown fox jumps over the lazy dog", nullptr, &tb);
    EXPECT_EQ(plan_ids(ta.plan), plan_ids(tb.plan));
    EXPECT_EQ(ta.matches.results, tb.matches.results);
}

TEST(Pipeline, ConcurrentRunsAgree) {
    Rig rig;
    const auto p = rig.make();
    UtteranceTrace ref;
    p.run_text("many voices at once", nullptr, &ref);
    std::vector<std::thread> threads;
    std::vector<UtteranceTrace> traces(4);
    for (int i = 0; i < 4; ++i) threads.emplace_back([&, i] { p.run_text("many voices at once", nullptr, &traces[i]); });
    for (auto& t : threads) t.join();
    for (const auto& t : traces) EXPECT_EQ(plan_ids(t.plan), plan_ids(ref.plan));
}

TEST(Pipeline, WavInputRuns) {
    Rig rig;
    const auto audio = read_wav(test::data_dir() / "speech_2s.wav");
    std::size_t n = 0;
    const auto rep = rig.make().run_wav(audio, [&](const OutputFrame&) { ++n; });
    EXPECT_EQ(n, 50u);
    EXPECT_GE(rep.embed_ms, 0.0);
}

TEST(Pipeline, HigherTargetFps) {
    Rig rig;
    PipelineConfig cfg;
    cfg.target_fps = 50;
    std::size_t n = 0;
    UtteranceTrace trace;
    // 13 characters -> 26 frames -> 13 kept; three in-betweens per gap at 4x the reduced cadence.
    rig.make(cfg).run_text(bench_utterance(1.0, 25), [&](const OutputFrame&) { ++n; }, &trace);
    ASSERT_EQ(trace.reduced.kept.size(), 13u);
    EXPECT_EQ(trace.plan.entries[48].source, (decltype(PlanEntry::source){LibrarySource{trace.reduced.kept[12].frame_id}}));
    EXPECT_EQ(n, 52u);
}

TEST(Pipeline, RejectsMismatchedStreams) {
    Rig rig;
    const auto p = rig.make();
    const auto wrong_dims = make_stream(test::random_rows(4, 6, 1), 25, SourceKind::file);
    EXPECT_THROW(p.run(wrong_dims, 0.0, nullptr), Error);
    const auto wrong_fps = make_stream(test::random_rows(4, 8, 1), 30, SourceKind::file);
    EXPECT_THROW(p.run(wrong_fps, 0.0, nullptr), Error);
}

TEST(LatencyReport, MeanAndRtf) {
    EXPECT_DOUBLE_EQ(real_time_factor(500, 2000), 0.25);
    LatencyReport a, b;
    a.total_ms = 10;
    a.audio_duration_ms = 100;
    b.total_ms = 30;
    b.audio_duration_ms = 100;
    const std::vector<LatencyReport> runs{a, b};
    const auto m = mean_report(runs);
    EXPECT_DOUBLE_EQ(m.total_ms, 20);
    EXPECT_DOUBLE_EQ(m.real_time_factor, 0.2);
}

TEST(Metrics, AggregatesReports) {
    MetricsRegistry reg;
    LatencyReport r;
    r.total_ms = 12;
    r.frames = 5;
    reg.record(r);
    r.total_ms = 4;
    reg.record(r);
    EXPECT_EQ(reg.count(), 2u);
    EXPECT_DOUBLE_EQ(reg.mean().total_ms, 8.0);
    const auto text = reg.format();
    EXPECT_NE(text.find("utterances=2"), std::string::npos) << text;
    EXPECT_NE(text.find("frames=10"), std::string::npos) << text;
    EXPECT_NE(text.find("max_total_ms=12.000"), std::string::npos) << text;
}

TEST(Bench, OneRowPerCell) {
    BenchConfig cfg;
    cfg.lib_sizes = {50, 120};
    cfg.utterance_secs = {0.4, 1.0, 1.6};
    cfg.runs = 2;
    cfg.render = {48, 48, "parametric-face-v1"};
    const auto rows = run_bench(cfg);
    ASSERT_EQ(rows.size(), 6u);
    EXPECT_EQ(rows[0].k_frames, 50u);
    EXPECT_EQ(rows[5].k_frames, 120u);
    EXPECT_DOUBLE_EQ(rows[4].utterance_s, 1.0);
    const auto csv = format_bench_csv(rows);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "k_frames,utterance_s,embed_ms,match_ms,reduce_ms,interpolate_ms,total_ms,ttff_ms,rtf");
}

TEST(Bench, UtteranceLengthMatchesSeconds) {
    for (double s : {0.5, 1.0, 2.0, 4.0}) {
        const auto text = bench_utterance(s, 25);
        const auto frames = embed_text_stub(text, EmbedderConfig{}).size();
        EXPECT_EQ(frames, 2 * text.size());
        EXPECT_NEAR(double(frames), s * 25, 1.5);
    }
}
