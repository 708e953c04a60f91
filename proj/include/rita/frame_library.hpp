// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rita/core.hpp"
#include "rita/embedder.hpp"
#include "rita/image.hpp"
#include "rita/renderer.hpp"

namespace rita {

using FrameId = std::uint32_t;

inline constexpr int kLibraryFormatVersion = 1;

struct FrameRecord {
    FrameId frame_id = 0;
    HyperparamVector params;
    /// Relative to the library root; empty for in-memory libraries.
    std::string image_path;
    std::uint64_t image_checksum = 0;
    std::string source_clip;
};

struct LibraryManifest {
    int format_version = kLibraryFormatVersion;
    std::size_t n_dims = 0;
    std::size_t n_frames = 0;
    int fps = 25;
    std::string renderer_id;
    std::string created_utc;
    ImageFormat image_format = ImageFormat::jpeg;
    int width = 256;
    int height = 256;
};

/// Small LRU of decoded frames, safe for concurrent readers.
class FrameCache {
public:
    explicit FrameCache(std::size_t capacity = 256) : capacity_(capacity) {}

    std::shared_ptr<const Image> find(FrameId id);
    void insert(FrameId id, std::shared_ptr<const Image> image);
    std::size_t size() const;

private:
    using Entry = std::pair<FrameId, std::shared_ptr<const Image>>;
    mutable std::mutex mutex_;
    std::size_t capacity_;
    std::list<Entry> order_;
    std::unordered_map<FrameId, std::list<Entry>::iterator> index_;
};

/// Phase-1 product: K frames, each paired with its hyperparameter row.
/// Immutable once built or loaded; the decode cache is internally synchronized.
class FrameLibrary {
public:
    FrameLibrary() = default;
    FrameLibrary(LibraryManifest manifest, std::vector<FrameRecord> records,
                 std::filesystem::path root);

    /// Params-only library whose frames are rendered on demand (benchmarks, tests).
    static FrameLibrary in_memory(std::span<const HyperparamVector> rows, int fps,
                                  std::shared_ptr<const Renderer> renderer);

    const LibraryManifest& manifest() const noexcept { return manifest_; }
    std::span<const FrameRecord> records() const noexcept { return records_; }
    const FrameRecord& record(FrameId id) const;
    /// K x N row-major float32.
    std::span<const float> param_matrix() const noexcept { return params_; }
    std::size_t size() const noexcept { return records_.size(); }
    std::size_t dims() const noexcept { return manifest_.n_dims; }
    int fps() const noexcept { return manifest_.fps; }
    const std::filesystem::path& root() const noexcept { return root_; }
    bool has_files() const noexcept { return !root_.empty(); }

    /// Encoded image as stored (or rendered and encoded for in-memory libraries).
    std::vector<std::uint8_t> image_bytes(FrameId id) const;
    /// Decoded frame, served from the LRU after first use.
    std::shared_ptr<const Image> image(FrameId id) const;

private:
    LibraryManifest manifest_;
    std::vector<FrameRecord> records_;
    std::vector<float> params_;
    std::filesystem::path root_;
    std::shared_ptr<const Renderer> renderer_;
    std::shared_ptr<FrameCache> cache_ = std::make_shared<FrameCache>();
};

struct BuildOptions {
    ImageFormat format = ImageFormat::jpeg;
    /// Per-stream source_clip tags; defaults to "clip<i>".
    std::vector<std::string> clip_names;
};

/// Renders every vector of every stream and writes the library to out_dir.
FrameLibrary build_library(std::span<const FeatureFrameStream> streams, const Renderer& renderer,
                           const std::filesystem::path& out_dir, const BuildOptions& options = {});

void save_library(const FrameLibrary& lib, const std::filesystem::path& dir);

struct LoadOptions {
    bool verify_checksums = true;
};

FrameLibrary load_library(const std::filesystem::path& dir,
                          const RendererRegistry& registry = RendererRegistry::with_builtins(),
                          const LoadOptions& options = {});

struct LibraryStats {
    std::size_t k_frames = 0;
    std::size_t n_dims = 0;
    int fps = 0;
    std::uint64_t total_bytes = 0;
    double seconds_of_video = 0.0;
};

LibraryStats library_stats(const FrameLibrary& lib);
std::string format_stats(const LibraryStats& stats);

/// Lattice over the five semantic dims, every other dim fixed at `fill`.
struct CoverageGrid {
    int mouth_open_levels = 11;
    int mouth_width_levels = 5;
    int eye_levels = 3;
    int tilt_levels = 3;
    int brow_levels = 3;
    double fill = 0.5;

    std::size_t size() const noexcept;
};

FeatureFrameStream coverage_grid(const CoverageGrid& grid, std::size_t dims, int fps = 25);

std::string checksum_hex(std::uint64_t checksum);

} // namespace rita
