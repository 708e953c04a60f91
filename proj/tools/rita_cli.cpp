// SPDX-License-Identifier: Apache-2.0
// rita: command-line entry points for library building, matching, synthesis,
// benchmarking and the streaming service.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <pthread.h>

#include "rita/embedder.hpp"
#include "rita/error.hpp"
#include "rita/frame_library.hpp"
#include "rita/io.hpp"
#include "rita/match_engine.hpp"
#include "rita/pipeline.hpp"
#include "rita/service.hpp"
#include "rita/wav.hpp"

namespace fs = std::filesystem;
using namespace rita;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

constexpr const char* kExitCodeHelp =
    "Exit codes:\n"
    "  0  success\n"
    "  1  usage error (bad or missing flags)\n"
    "  2  data error (dimension mismatch, malformed or corrupted input)\n"
    "  3  runtime error (I/O, configuration, backend or network failure)\n";

int exit_code_for(Errc code) {
    switch (code) {
    case Errc::invalid_argument:
    case Errc::dimension:
    case Errc::parse:
    case Errc::corrupt:
    case Errc::unsupported_version:
        return kExitData;
    default:
        return kExitRuntime;
    }
}

struct Shared {
    std::shared_ptr<const FrameLibrary> lib;
    std::shared_ptr<const Renderer> renderer;
};

Shared open_library(const fs::path& dir) {
    const auto registry = RendererRegistry::with_builtins();
    Shared s;
    s.lib = std::make_shared<const FrameLibrary>(load_library(dir, registry));
    RenderSpec spec;
    spec.width = s.lib->manifest().width;
    spec.height = s.lib->manifest().height;
    spec.renderer_id = s.lib->manifest().renderer_id;
    s.renderer = registry.create(spec);
    return s;
}

FeatureFrameStream query_stream(const FrameLibrary& lib, const std::string& features, const std::string& wav,
                                const std::string& text) {
    const auto cfg = EmbedderConfig::with_dims(lib.dims(), lib.fps());
    if (!features.empty()) return load_features(features);
    if (!wav.empty()) return embed_wav(read_wav(wav), cfg);
    return embed_text_stub(text, cfg);
}

std::vector<std::size_t> parse_sizes(const std::vector<std::string>& items) {
    std::vector<std::size_t> out;
    for (const auto& s : items) out.push_back(static_cast<std::size_t>(std::stoull(s)));
    return out;
}

// ---------------------------------------------------------------------------

struct BuildArgs {
    std::vector<std::string> features, wavs;
    bool grid = false;
    std::string out;
    std::size_t n_dims = 8;
    int fps = 25;
    std::string format = "jpeg";
    std::string renderer = std::string(ParametricFaceRenderer::kId);
    int size = 256;
};

int cmd_build(const BuildArgs& a) {
    std::vector<FeatureFrameStream> streams;
    std::vector<std::string> names;
    const auto cfg = EmbedderConfig::with_dims(a.n_dims, a.fps);
    for (const auto& f : a.features) {
        auto s = load_features(f);
        if (s.dims() != a.n_dims) {
            fail(Errc::dimension, f + ": features have " + std::to_string(s.dims()) + " dims, expected " +
                                      std::to_string(a.n_dims));
        }
        streams.push_back(std::move(s));
        names.push_back(fs::path(f).stem().string());
    }
    for (const auto& w : a.wavs) {
        streams.push_back(embed_wav(read_wav(w), cfg));
        names.push_back(fs::path(w).stem().string());
    }
    if (a.grid) {
        streams.push_back(coverage_grid(CoverageGrid{}, a.n_dims, a.fps));
        names.push_back("grid");
    }
    RenderSpec spec{a.size, a.size, a.renderer};
    const auto renderer = RendererRegistry::with_builtins().create(spec);
    BuildOptions opts;
    opts.format = a.format == "png" ? ImageFormat::png : ImageFormat::jpeg;
    opts.clip_names = names;
    const auto lib = build_library(streams, *renderer, a.out, opts);
    std::cout << format_stats(library_stats(lib)) << "\n";
    return kExitOk;
}

struct MatchArgs {
    std::string lib, features, wav, text, mode = "exact", trace;
    std::size_t candidate_k = 32;
};

int cmd_match(const MatchArgs& a) {
    const auto s = open_library(a.lib);
    const auto stream = query_stream(*s.lib, a.features, a.wav, a.text);
    if (stream.dims() != s.lib->dims()) {
        fail(Errc::dimension, "query has " + std::to_string(stream.dims()) + " dims, library has " +
                                  std::to_string(s.lib->dims()));
    }
    IndexParams params;
    params.candidate_k = a.candidate_k;
    const auto mode = parse_index_mode(a.mode);
    const auto index = Index::build(*s.lib, mode, params);
    const auto seq = match_sequence(index, stream);
    const auto reduced = reduce_frames(seq.results, stream.fps);
    if (!a.trace.empty()) save_match_trace(seq.results, a.trace);

    std::printf("queries=%zu kept=%zu dropped=%zu match_ms=%.3f\n", seq.results.size(), reduced.kept.size(),
                reduced.dropped_count, seq.elapsed_ms);
    if (mode == IndexMode::approximate) {
        const auto exact = Index::build(*s.lib, IndexMode::exact, params);
        const auto truth = match_sequence(exact, stream);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < truth.results.size(); ++i) {
            hits += truth.results[i].frame_id == seq.results[i].frame_id;
        }
        const double recall = truth.results.empty() ? 1.0 : double(hits) / double(truth.results.size());
        std::printf("recall_at_1=%.4f (%zu/%zu)\n", recall, hits, truth.results.size());
    }
    return kExitOk;
}

struct SynthArgs {
    std::string lib, text, wav, out_dir, interp = "param_space", interp_command;
    double target_fps = 0.0;
};

const char* source_label(const PlanEntry& e, char* buf, std::size_t n) {
    if (const auto* l = std::get_if<LibrarySource>(&e.source)) {
        std::snprintf(buf, n, "lib:%u", l->frame_id);
    } else {
        const auto& m = std::get<InterpolatedSource>(e.source);
        std::snprintf(buf, n, "mix:%u:%u:%.4f", m.from, m.to, m.t);
    }
    return buf;
}

int cmd_synth(const SynthArgs& a) {
    const auto s = open_library(a.lib);
    PipelineConfig pcfg;
    pcfg.target_fps = a.target_fps;
    pcfg.interp = parse_interp_mode(a.interp);
    std::shared_ptr<InterpolatorRegistry> interps;
    if (!a.interp_command.empty()) {
        interps = std::make_shared<InterpolatorRegistry>();
        interps->add(std::make_shared<CommandInterpolator>("command", a.interp_command));
    }
    const auto index = std::make_shared<const Index>(Index::build(*s.lib, IndexMode::exact));
    const Pipeline pipeline(s.lib, index, s.renderer, pcfg, interps);

    fs::create_directories(a.out_dir);
    const auto format = s.lib->manifest().image_format;
    std::string listing = "seq,timestamp_ms,source\n";
    const auto on_frame = [&](const OutputFrame& f) {
        char name[64];
        std::snprintf(name, sizeof name, "frame_%05zu%s", f.seq, file_extension(format));
        write_file_bytes(fs::path(a.out_dir) / name, encode_image(*f.image, format));
        char label[64];
        listing += std::to_string(f.seq) + "," + std::to_string(f.timestamp_ms) + "," +
                   source_label(f.entry, label, sizeof label) + "\n";
    };
    LatencyReport report;
    if (!a.wav.empty()) {
        report = pipeline.run_wav(read_wav(a.wav), on_frame);
    } else {
        report = pipeline.run_text(a.text, on_frame);
    }
    write_file_text(fs::path(a.out_dir) / "frames.csv", listing);

    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "frames=%zu\nembed_ms=%.3f\nmatch_ms=%.3f\nreduce_ms=%.3f\ninterpolate_ms=%.3f\n"
                  "total_ms=%.3f\nttff_ms=%.3f\naudio_duration_ms=%.1f\nreal_time_factor=%.4f\n",
                  report.frames, report.embed_ms, report.match_ms, report.reduce_ms, report.interpolate_ms,
                  report.total_ms, report.ttff_ms, report.audio_duration_ms, report.real_time_factor);
    write_file_text(fs::path(a.out_dir) / "latency.txt", buf);
    std::cout << buf;
    return kExitOk;
}

struct BenchArgs {
    std::vector<std::string> lib_sizes{"600", "10000"};
    std::vector<double> secs{1.0, 4.0};
    int runs = 10;
    std::string csv, mode = "exact", interp = "param_space";
    int size = 256;
};

int cmd_bench(const BenchArgs& a) {
    BenchConfig cfg;
    cfg.lib_sizes = parse_sizes(a.lib_sizes);
    cfg.utterance_secs = a.secs;
    cfg.runs = a.runs;
    cfg.mode = parse_index_mode(a.mode);
    cfg.interp = parse_interp_mode(a.interp);
    cfg.render.width = cfg.render.height = a.size;
    const auto rows = run_bench(cfg);
    const auto csv = format_bench_csv(rows);
    if (!a.csv.empty()) write_file_text(a.csv, csv);
    std::cout << csv;
    return kExitOk;
}

struct ServeArgs {
    std::string config;
    int port = -1;
};

int cmd_serve(const ServeArgs& a) {
    auto cfg = ServiceConfig::load(a.config);
    if (a.port >= 0) cfg.port = static_cast<std::uint16_t>(a.port);

    // Block termination signals before any thread starts so only sigwait sees them.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    auto service = ChatService::from_config(cfg);
    Server server(cfg, service);
    server.start();
    std::printf("listening on http://%s:%u\n", cfg.bind_address.c_str(), server.port());
    std::fflush(stdout);
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"rita: talking-avatar frame library, matching and streaming tools"};
    app.footer(kExitCodeHelp);
    app.require_subcommand(1);

    BuildArgs build;
    auto* b = app.add_subcommand("build-library", "render a frame library from feature streams");
    auto* b_features = b->add_option("--features", build.features, "feature files (rita-features v1)");
    auto* b_wav = b->add_option("--wav", build.wavs, "16-bit PCM WAV files");
    auto* b_grid = b->add_flag("--grid", build.grid, "add the lattice coverage grid");
    b->add_option("--out", build.out, "output directory")->required();
    b->add_option("--n-dims", build.n_dims, "hyperparameter dimensions")->check(CLI::Range(1, 1024));
    b->add_option("--fps", build.fps, "frames per second")->check(CLI::Range(1, 240));
    b->add_option("--format", build.format, "frame image format")->check(CLI::IsMember({"jpeg", "png"}));
    b->add_option("--renderer", build.renderer, "renderer id");
    b->add_option("--size", build.size, "frame width and height in pixels")->check(CLI::Range(32, 4096));

    MatchArgs match;
    auto* m = app.add_subcommand("match", "match a feature stream against a library");
    m->add_option("--lib", match.lib, "library directory")->required();
    auto* m_src = m->add_option_group("source")->require_option(1);
    m_src->add_option("--features", match.features, "feature file");
    m_src->add_option("--wav", match.wav, "WAV file");
    m_src->add_option("--text", match.text, "text for the viseme stub");
    m->add_option("--mode", match.mode, "index mode")->check(CLI::IsMember({"exact", "approx"}));
    m->add_option("--candidate-k", match.candidate_k, "approximate candidate pool size")->check(CLI::Range(1, 1 << 20));
    m->add_option("--trace", match.trace, "write the match trace here");

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "run the full pipeline and write output frames");
    s->add_option("--lib", synth.lib, "library directory")->required();
    auto* s_src = s->add_option_group("source")->require_option(1);
    s_src->add_option("--text", synth.text, "text for the viseme stub");
    s_src->add_option("--wav", synth.wav, "WAV file");
    s->add_option("--out-dir", synth.out_dir, "output directory")->required();
    s->add_option("--interp", synth.interp, "interpolation mode")
        ->check(CLI::IsMember({"param_space", "crossfade", "external"}));
    s->add_option("--interp-command", synth.interp_command, "command for the external interpolator");
    s->add_option("--target-fps", synth.target_fps, "output frame rate (default: library fps)")
        ->check(CLI::Range(0.0, 240.0));

    BenchArgs bench;
    auto* be = app.add_subcommand("bench", "time every phase over synthetic libraries");
    be->add_option("--lib-sizes", bench.lib_sizes, "library sizes")->delimiter(',');
    be->add_option("--utterance-secs", bench.secs, "utterance lengths in seconds")->delimiter(',');
    be->add_option("--runs", bench.runs, "repetitions per cell")->check(CLI::Range(1, 10000));
    be->add_option("--csv", bench.csv, "write the CSV table here");
    be->add_option("--mode", bench.mode, "index mode")->check(CLI::IsMember({"exact", "approx"}));
    be->add_option("--interp", bench.interp, "interpolation mode")->check(CLI::IsMember({"param_space", "crossfade"}));
    be->add_option("--size", bench.size, "frame size in pixels")->check(CLI::Range(32, 4096));

    ServeArgs serve;
    auto* sv = app.add_subcommand("serve", "run the HTTP and WebSocket service");
    sv->add_option("--config", serve.config, "service config file")->required();
    sv->add_option("--port", serve.port, "override the configured port")->check(CLI::Range(0, 65535));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*b) {
            if (b_features->count() + b_wav->count() + b_grid->count() == 0) {
                std::cerr << "build-library: one of --features, --wav or --grid is required\n";
                return kExitUsage;
            }
            return cmd_build(build);
        }
        if (*m) return cmd_match(match);
        if (*s) return cmd_synth(synth);
        if (*be) return cmd_bench(bench);
        if (*sv) return cmd_serve(serve);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
