// SPDX-License-Identifier: Apache-2.0
#include "rita/interpolation.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <unistd.h>

#include "rita/error.hpp"
#include "rita/io.hpp"

namespace fs = std::filesystem;

namespace rita {

std::string_view to_string(InterpMode mode) noexcept {
    switch (mode) {
    case InterpMode::param_space: return "param_space";
    case InterpMode::crossfade: return "crossfade";
    case InterpMode::external: return "external";
    }
    return "unknown";
}

InterpMode parse_interp_mode(std::string_view text) {
    if (text == "param_space") return InterpMode::param_space;
    if (text == "crossfade") return InterpMode::crossfade;
    if (text == "external") return InterpMode::external;
    fail(Errc::invalid_argument, "unknown interpolation mode '" + std::string(text) + "'");
}

RenderPlan plan_interpolation(const ReducedSequence& reduced, double target_fps,
                              std::optional<std::size_t> pad_to_length) {
    if (reduced.kept.empty()) fail(Errc::invalid_argument, "nothing to interpolate");
    const double cadence = reduced.cadence_fps();
    if (!(target_fps > 0) || target_fps + 1e-9 < cadence) {
        fail(Errc::invalid_argument, "target fps " + std::to_string(target_fps) +
                                         " is below the reduced cadence " + std::to_string(cadence));
    }
    const auto per_gap = static_cast<std::size_t>(std::max<long long>(std::llround(target_fps / cadence) - 1, 0));
    const std::int64_t dt = frame_interval_ms(target_fps);

    RenderPlan plan;
    plan.target_fps = target_fps;
    std::int64_t ts = reduced.kept.front().timestamp_ms;
    auto push = [&](decltype(PlanEntry::source) src) {
        plan.entries.push_back({ts, src});
        ts += dt;
    };
    for (std::size_t i = 0; i < reduced.kept.size(); ++i) {
        const FrameId id = reduced.kept[i].frame_id;
        if (i > 0) {
            const FrameId prev = reduced.kept[i - 1].frame_id;
            for (std::size_t j = 1; j <= per_gap; ++j) {
                push(InterpolatedSource{prev, id, double(j) / double(per_gap + 1)});
            }
        }
        push(LibrarySource{id});
    }
    if (pad_to_length) {
        const FrameId last = reduced.kept.back().frame_id;
        while (plan.entries.size() < *pad_to_length) push(LibrarySource{last});
    }
    return plan;
}

HyperparamVector interpolate_params(const HyperparamVector& a, const HyperparamVector& b, double t) {
    detail::check_same_dims(a.size(), b.size());
    if (!(t > 0.0 && t < 1.0)) fail(Errc::invalid_argument, "interpolation weight must lie in (0, 1)");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = (1.0 - t) * a[i] + t * b[i];
    return HyperparamVector(std::move(out));
}

Image crossfade_images(const Image& a, const Image& b, double t) {
    if (a.width != b.width || a.height != b.height || a.rgb.size() != b.rgb.size()) {
        fail(Errc::dimension, "crossfade needs equal image sizes: " + std::to_string(a.width) + "x" +
                                  std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                                  std::to_string(b.height));
    }
    if (!(t >= 0.0 && t <= 1.0)) fail(Errc::invalid_argument, "crossfade weight must lie in [0, 1]");
    Image out(a.width, a.height);
    for (std::size_t i = 0; i < a.rgb.size(); ++i) {
        const double v = (1.0 - t) * a.rgb[i] + t * b.rgb[i];
        out.rgb[i] = static_cast<std::uint8_t>(std::floor(v + 0.5));
    }
    return out;
}

// ---------------------------------------------------------------------------
// External backends

namespace {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

} // namespace

CommandInterpolator::CommandInterpolator(std::string id, std::string command)
    : id_(std::move(id)), command_(std::move(command)) {}

void CommandInterpolator::interpolate(const fs::path& a, const fs::path& b, double t,
                                      const fs::path& out) const {
    const std::string cmd = command_ + " " + shell_quote(a.string()) + " " + shell_quote(b.string()) +
                            " " + std::to_string(t) + " " + shell_quote(out.string());
    const int rc = std::system(cmd.c_str());
    if (rc != 0) fail(Errc::backend, "interpolator '" + id_ + "' exited with status " + std::to_string(rc));
}

void InterpolatorRegistry::add(std::shared_ptr<const ExternalInterpolator> backend) {
    if (!backend) fail(Errc::invalid_argument, "null interpolator");
    backends_[std::string(backend->id())] = std::move(backend);
}

std::shared_ptr<const ExternalInterpolator> InterpolatorRegistry::find(std::string_view id) const {
    const auto it = backends_.find(id);
    return it == backends_.end() ? nullptr : it->second;
}

std::shared_ptr<const ExternalInterpolator> InterpolatorRegistry::select(std::string_view id) const {
    if (backends_.empty()) fail(Errc::config, "external interpolation requested but no backend is registered");
    if (id.empty()) {
        if (backends_.size() == 1) return backends_.begin()->second;
        fail(Errc::config, "several interpolators registered; name one");
    }
    auto found = find(id);
    if (!found) fail(Errc::config, "no interpolator named '" + std::string(id) + "'");
    return found;
}

// ---------------------------------------------------------------------------
// Materialization

namespace {

class ScratchDir {
public:
    explicit ScratchDir(fs::path requested) {
        if (!requested.empty()) {
            path_ = std::move(requested);
        } else {
            static std::atomic<unsigned> counter{0};
            path_ = fs::temp_directory_path() /
                    ("rita-interp-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
            owned_ = true;
        }
        fs::create_directories(path_);
    }
    ~ScratchDir() {
        if (owned_) {
            std::error_code ec;
            fs::remove_all(path_, ec);
        }
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;

    const fs::path& path() const { return path_; }

private:
    fs::path path_;
    bool owned_ = false;
};

fs::path library_frame_file(const FrameLibrary& lib, FrameId id, const fs::path& scratch) {
    if (lib.has_files()) return lib.root() / lib.record(id).image_path;
    const fs::path p = scratch / ("lib-" + std::to_string(id) + file_extension(lib.manifest().image_format));
    if (!fs::exists(p)) write_file_bytes(p, lib.image_bytes(id));
    return p;
}

} // namespace

void materialize(const RenderPlan& plan, const FrameLibrary& lib, const Renderer& renderer,
                 const MaterializeOptions& options, const FrameSink& sink) {
    if (options.mode == InterpMode::param_space && renderer.id() != lib.manifest().renderer_id) {
        fail(Errc::config, "renderer '" + std::string(renderer.id()) + "' does not match library renderer '" +
                               lib.manifest().renderer_id + "'");
    }
    std::shared_ptr<const ExternalInterpolator> external;
    std::optional<ScratchDir> scratch;
    if (options.mode == InterpMode::external) {
        if (!options.interpolators) {
            fail(Errc::config, "external interpolation requested but no backend is registered");
        }
        external = options.interpolators->select(options.external_id);
        scratch.emplace(options.scratch_dir);
    }
    for (const auto& entry : plan.entries) {
        if (const auto* lsrc = std::get_if<LibrarySource>(&entry.source)) lib.record(lsrc->frame_id);
        else {
            const auto& isrc = std::get<InterpolatedSource>(entry.source);
            lib.record(isrc.from);
            lib.record(isrc.to);
        }
    }

    for (std::size_t seq = 0; seq < plan.entries.size(); ++seq) {
        const auto start = std::chrono::steady_clock::now();
        const PlanEntry& entry = plan.entries[seq];
        OutputFrame frame;
        frame.seq = seq;
        frame.timestamp_ms = entry.timestamp_ms;
        frame.entry = entry;
        if (const auto* lsrc = std::get_if<LibrarySource>(&entry.source)) {
            frame.image = lib.image(lsrc->frame_id);
        } else {
            const auto& isrc = std::get<InterpolatedSource>(entry.source);
            switch (options.mode) {
            case InterpMode::param_space: {
                const auto v = interpolate_params(lib.record(isrc.from).params, lib.record(isrc.to).params, isrc.t);
                try {
                    frame.image = std::make_shared<const Image>(renderer.render(v));
                } catch (const std::exception& e) {
                    fail(Errc::backend, "renderer '" + std::string(renderer.id()) + "': " + e.what());
                }
                break;
            }
            case InterpMode::crossfade:
                frame.image = std::make_shared<const Image>(
                    crossfade_images(*lib.image(isrc.from), *lib.image(isrc.to), isrc.t));
                break;
            case InterpMode::external: {
                const fs::path a = library_frame_file(lib, isrc.from, scratch->path());
                const fs::path b = library_frame_file(lib, isrc.to, scratch->path());
                const fs::path out = scratch->path() / ("interp-" + std::to_string(seq) + ".png");
                try {
                    external->interpolate(a, b, isrc.t, out);
                } catch (const Error&) {
                    throw;
                } catch (const std::exception& e) {
                    fail(Errc::backend, "interpolator '" + std::string(external->id()) + "': " + e.what());
                }
                if (!fs::exists(out)) {
                    fail(Errc::backend, "interpolator '" + std::string(external->id()) + "' produced no output");
                }
                auto img = std::make_shared<const Image>(decode_image(read_file_bytes(out)));
                const auto& ref = *lib.image(isrc.from);
                if (img->width != ref.width || img->height != ref.height) {
                    fail(Errc::backend, "interpolator '" + std::string(external->id()) +
                                            "' changed the frame dimensions");
                }
                frame.image = std::move(img);
                break;
            }
            }
        }
        frame.produce_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        sink(std::move(frame));
    }
}

std::vector<OutputFrame> materialize(const RenderPlan& plan, const FrameLibrary& lib,
                                     const Renderer& renderer, const MaterializeOptions& options) {
    std::vector<OutputFrame> frames;
    frames.reserve(plan.size());
    materialize(plan, lib, renderer, options, [&](OutputFrame&& f) { frames.push_back(std::move(f)); });
    return frames;
}

} // namespace rita
