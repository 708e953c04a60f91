// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rita/core.hpp"
#include "rita/frame_library.hpp"
#include "rita/image.hpp"
#include "rita/match_engine.hpp"
#include "rita/renderer.hpp"

namespace rita {

struct LibrarySource {
    FrameId frame_id = 0;
    friend bool operator==(const LibrarySource&, const LibrarySource&) = default;
};

struct InterpolatedSource {
    FrameId from = 0;
    FrameId to = 0;
    double t = 0.5;
    friend bool operator==(const InterpolatedSource&, const InterpolatedSource&) = default;
};

struct PlanEntry {
    std::int64_t timestamp_ms = 0;
    std::variant<LibrarySource, InterpolatedSource> source;

    bool is_library() const noexcept { return std::holds_alternative<LibrarySource>(source); }
    friend bool operator==(const PlanEntry&, const PlanEntry&) = default;
};

/// Playback schedule at a fixed cadence mixing stored and synthesized frames.
struct RenderPlan {
    std::vector<PlanEntry> entries;
    double target_fps = 25.0;

    std::size_t size() const noexcept { return entries.size(); }
};

/// Inserts round(target_fps / cadence) - 1 in-between entries per gap of the
/// reduced sequence. When `pad_to_length` exceeds the result, the final library
/// frame is repeated so the plan spans the original utterance.
RenderPlan plan_interpolation(const ReducedSequence& reduced, double target_fps,
                              std::optional<std::size_t> pad_to_length = std::nullopt);

/// Component-wise (1 - t) * a + t * b for t in (0, 1).
HyperparamVector interpolate_params(const HyperparamVector& a, const HyperparamVector& b, double t);

/// Per-channel (1 - t) * a + t * b, rounded half up.
Image crossfade_images(const Image& a, const Image& b, double t);

enum class InterpMode { param_space, crossfade, external };

std::string_view to_string(InterpMode mode) noexcept;
InterpMode parse_interp_mode(std::string_view text);

/// Out-of-process frame interpolator: reads two image files and writes one
/// image of identical dimensions for weight t.
class ExternalInterpolator {
public:
    virtual ~ExternalInterpolator() = default;
    virtual std::string_view id() const noexcept = 0;
    virtual void interpolate(const std::filesystem::path& a, const std::filesystem::path& b, double t,
                             const std::filesystem::path& out) const = 0;
};

/// Runs `<command> <a> <b> <t> <out>` through the shell; non-zero exit is a backend failure.
class CommandInterpolator final : public ExternalInterpolator {
public:
    CommandInterpolator(std::string id, std::string command);

    std::string_view id() const noexcept override { return id_; }
    void interpolate(const std::filesystem::path& a, const std::filesystem::path& b, double t,
                     const std::filesystem::path& out) const override;

private:
    std::string id_;
    std::string command_;
};

class InterpolatorRegistry {
public:
    void add(std::shared_ptr<const ExternalInterpolator> backend);
    std::shared_ptr<const ExternalInterpolator> find(std::string_view id) const;
    /// The named backend, or the only registered one when name is empty.
    std::shared_ptr<const ExternalInterpolator> select(std::string_view id = {}) const;
    bool empty() const noexcept { return backends_.empty(); }

private:
    std::map<std::string, std::shared_ptr<const ExternalInterpolator>, std::less<>> backends_;
};

struct MaterializeOptions {
    InterpMode mode = InterpMode::param_space;
    const InterpolatorRegistry* interpolators = nullptr;
    std::string external_id;
    /// Working directory for external backends; a temp dir is used when empty.
    std::filesystem::path scratch_dir;
};

struct OutputFrame {
    std::size_t seq = 0;
    std::int64_t timestamp_ms = 0;
    PlanEntry entry;
    std::shared_ptr<const Image> image;
    double produce_ms = 0.0;
};

using FrameSink = std::function<void(OutputFrame&&)>;

/// Produces the plan's frames in order, handing each to `sink` as soon as it exists.
void materialize(const RenderPlan& plan, const FrameLibrary& lib, const Renderer& renderer,
                 const MaterializeOptions& options, const FrameSink& sink);

std::vector<OutputFrame> materialize(const RenderPlan& plan, const FrameLibrary& lib,
                                     const Renderer& renderer, const MaterializeOptions& options = {});

} // namespace rita
