// SPDX-License-Identifier: Apache-2.0
#include "rita/frame_library.hpp"

#include <bit>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>

#include <nlohmann/json.hpp>

#include "rita/error.hpp"
#include "rita/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rita {

static_assert(std::endian::native == std::endian::little, "params.f32 I/O assumes little-endian");

// ---------------------------------------------------------------------------
// FrameCache

std::shared_ptr<const Image> FrameCache::find(FrameId id) {
    std::lock_guard lock(mutex_);
    const auto it = index_.find(id);
    if (it == index_.end()) return nullptr;
    order_.splice(order_.begin(), order_, it->second);
    return it->second->second;
}

void FrameCache::insert(FrameId id, std::shared_ptr<const Image> image) {
    if (capacity_ == 0) return;
    std::lock_guard lock(mutex_);
    if (const auto it = index_.find(id); it != index_.end()) {
        it->second->second = std::move(image);
        order_.splice(order_.begin(), order_, it->second);
        return;
    }
    order_.emplace_front(id, std::move(image));
    index_[id] = order_.begin();
    if (order_.size() > capacity_) {
        index_.erase(order_.back().first);
        order_.pop_back();
    }
}

std::size_t FrameCache::size() const {
    std::lock_guard lock(mutex_);
    return order_.size();
}

// ---------------------------------------------------------------------------
// FrameLibrary

namespace {

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string frame_file_name(FrameId id, ImageFormat format) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frames/%06u%s", static_cast<unsigned>(id), file_extension(format));
    return buf;
}

HyperparamVector round_to_float(const HyperparamVector& v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
    return HyperparamVector(std::move(out));
}

std::string format_name(ImageFormat f) { return f == ImageFormat::png ? "png" : "jpeg"; }

ImageFormat parse_format_name(const std::string& s) {
    if (s == "png") return ImageFormat::png;
    if (s == "jpeg" || s == "jpg") return ImageFormat::jpeg;
    fail(Errc::parse, "unknown image_format '" + s + "'");
}

} // namespace

std::string checksum_hex(std::uint64_t checksum) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(checksum));
    return buf;
}

FrameLibrary::FrameLibrary(LibraryManifest manifest, std::vector<FrameRecord> records, fs::path root)
    : manifest_(std::move(manifest)), records_(std::move(records)), root_(std::move(root)) {
    manifest_.n_frames = records_.size();
    params_.reserve(records_.size() * manifest_.n_dims);
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (r.frame_id != i) fail(Errc::corrupt, "frame ids are not dense at " + std::to_string(i));
        if (r.params.size() != manifest_.n_dims) {
            fail(Errc::dimension, "frame " + std::to_string(i) + " has " +
                                      std::to_string(r.params.size()) + " dims, library declares " +
                                      std::to_string(manifest_.n_dims));
        }
        for (double v : r.params.values()) params_.push_back(static_cast<float>(v));
    }
}

FrameLibrary FrameLibrary::in_memory(std::span<const HyperparamVector> rows, int fps,
                                     std::shared_ptr<const Renderer> renderer) {
    if (!renderer) fail(Errc::invalid_argument, "in-memory library needs a renderer");
    LibraryManifest manifest;
    manifest.n_dims = rows.empty() ? 0 : rows.front().size();
    manifest.fps = fps;
    manifest.renderer_id = std::string(renderer->id());
    manifest.created_utc = utc_now();
    manifest.image_format = ImageFormat::png;
    manifest.width = renderer->spec().width;
    manifest.height = renderer->spec().height;
    std::vector<FrameRecord> records;
    records.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        records.push_back({static_cast<FrameId>(i), round_to_float(rows[i]), {}, 0, "memory"});
    }
    FrameLibrary lib(std::move(manifest), std::move(records), {});
    lib.renderer_ = std::move(renderer);
    return lib;
}

const FrameRecord& FrameLibrary::record(FrameId id) const {
    if (id >= records_.size()) {
        fail(Errc::invalid_argument, "frame " + std::to_string(id) + " not in library of " +
                                         std::to_string(records_.size()));
    }
    return records_[id];
}

std::vector<std::uint8_t> FrameLibrary::image_bytes(FrameId id) const {
    const FrameRecord& r = record(id);
    if (has_files()) {
        const fs::path path = root_ / r.image_path;
        if (!fs::exists(path)) {
            fail(Errc::corrupt, "frame " + std::to_string(id) + ": missing image " + path.string());
        }
        return read_file_bytes(path);
    }
    return encode_image(*image(id), manifest_.image_format);
}

std::shared_ptr<const Image> FrameLibrary::image(FrameId id) const {
    if (auto hit = cache_->find(id)) return hit;
    std::shared_ptr<const Image> img;
    if (has_files()) {
        img = std::make_shared<const Image>(decode_image(image_bytes(id)));
    } else {
        img = std::make_shared<const Image>(renderer_->render(record(id).params));
    }
    cache_->insert(id, img);
    return img;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

void write_metadata(const LibraryManifest& manifest, std::span<const FrameRecord> records,
                    std::span<const float> params, const fs::path& dir) {
    json frames = json::array();
    for (const auto& r : records) {
        frames.push_back({{"frame_id", r.frame_id},
                          {"image", r.image_path},
                          {"checksum", checksum_hex(r.image_checksum)},
                          {"source_clip", r.source_clip}});
    }
    json doc = {{"format_version", manifest.format_version},
                {"n_dims", manifest.n_dims},
                {"n_frames", records.size()},
                {"fps", manifest.fps},
                {"renderer_id", manifest.renderer_id},
                {"created_utc", manifest.created_utc},
                {"image_format", format_name(manifest.image_format)},
                {"width", manifest.width},
                {"height", manifest.height},
                {"frames", std::move(frames)}};
    write_file_text(dir / "manifest.json", doc.dump(1));
    write_file_bytes(dir / "params.f32",
                     {reinterpret_cast<const std::uint8_t*>(params.data()), params.size() * sizeof(float)});
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir / "frames", ec);
    if (ec) fail(Errc::io, "cannot create " + (dir / "frames").string() + ": " + ec.message());
}

} // namespace

FrameLibrary build_library(std::span<const FeatureFrameStream> streams, const Renderer& renderer,
                           const fs::path& out_dir, const BuildOptions& options) {
    if (streams.empty()) fail(Errc::invalid_argument, "build_library needs at least one stream");
    const std::size_t dims = streams.front().dims();
    const int fps = streams.front().fps;
    for (std::size_t s = 0; s < streams.size(); ++s) {
        validate_stream(streams[s]);
        if (!streams[s].empty() && streams[s].dims() != dims) {
            fail(Errc::dimension, "stream " + std::to_string(s) + " has " +
                                      std::to_string(streams[s].dims()) + " dims, expected " +
                                      std::to_string(dims));
        }
        if (streams[s].fps != fps) fail(Errc::invalid_argument, "streams disagree on fps");
    }
    ensure_dir(out_dir);

    LibraryManifest manifest;
    manifest.n_dims = dims;
    manifest.fps = fps;
    manifest.renderer_id = std::string(renderer.id());
    manifest.created_utc = utc_now();
    manifest.image_format = options.format;
    manifest.width = renderer.spec().width;
    manifest.height = renderer.spec().height;

    std::vector<FrameRecord> records;
    for (std::size_t s = 0; s < streams.size(); ++s) {
        const std::string clip =
            s < options.clip_names.size() ? options.clip_names[s] : "clip" + std::to_string(s);
        for (const auto& frame : streams[s].frames) {
            FrameRecord r;
            r.frame_id = static_cast<FrameId>(records.size());
            r.params = round_to_float(frame.vector);
            r.source_clip = clip;
            Image img;
            try {
                img = renderer.render(r.params);
            } catch (const std::exception& e) {
                fail(Errc::backend, "renderer '" + std::string(renderer.id()) + "' failed on frame " +
                                        std::to_string(r.frame_id) + ": " + e.what());
            }
            const auto bytes = encode_image(img, options.format);
            r.image_path = frame_file_name(r.frame_id, options.format);
            r.image_checksum = fnv1a64(bytes);
            write_file_bytes(out_dir / r.image_path, bytes);
            records.push_back(std::move(r));
        }
    }
    FrameLibrary lib(std::move(manifest), std::move(records), out_dir);
    write_metadata(lib.manifest(), lib.records(), lib.param_matrix(), out_dir);
    return lib;
}

void save_library(const FrameLibrary& lib, const fs::path& dir) {
    ensure_dir(dir);
    std::error_code ec;
    const bool same_root = lib.has_files() && fs::equivalent(lib.root(), dir, ec);
    std::vector<FrameRecord> records(lib.records().begin(), lib.records().end());
    for (auto& r : records) {
        if (same_root) continue;
        const auto bytes = lib.image_bytes(r.frame_id);
        r.image_path = frame_file_name(r.frame_id, lib.manifest().image_format);
        r.image_checksum = fnv1a64(bytes);
        write_file_bytes(dir / r.image_path, bytes);
    }
    write_metadata(lib.manifest(), records, lib.param_matrix(), dir);
}

FrameLibrary load_library(const fs::path& dir, const RendererRegistry& registry,
                          const LoadOptions& options) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) fail(Errc::io, "no manifest.json in " + dir.string());
    json doc;
    try {
        doc = json::parse(read_file_text(manifest_path));
    } catch (const json::exception& e) {
        fail(Errc::parse, "manifest.json: " + std::string(e.what()));
    }

    LibraryManifest m;
    std::vector<FrameRecord> records;
    try {
        m.format_version = doc.at("format_version").get<int>();
        if (m.format_version != kLibraryFormatVersion) {
            fail(Errc::unsupported_version,
                 "unsupported library format_version " + std::to_string(m.format_version));
        }
        m.n_dims = doc.at("n_dims").get<std::size_t>();
        m.n_frames = doc.at("n_frames").get<std::size_t>();
        m.fps = doc.at("fps").get<int>();
        m.renderer_id = doc.at("renderer_id").get<std::string>();
        m.created_utc = doc.value("created_utc", std::string{});
        m.image_format = parse_format_name(doc.value("image_format", std::string("jpeg")));
        m.width = doc.value("width", 256);
        m.height = doc.value("height", 256);
        if (!registry.contains(m.renderer_id)) {
            std::string list;
            for (const auto& id : registry.available()) list += (list.empty() ? "" : ", ") + id;
            fail(Errc::config, "library renderer '" + m.renderer_id + "' is not registered; available: " + list);
        }
        const auto raw = read_file_bytes(dir / "params.f32");
        const std::size_t expected = m.n_frames * m.n_dims * sizeof(float);
        if (raw.size() != expected) {
            fail(Errc::corrupt, "params.f32 holds " + std::to_string(raw.size() / sizeof(float)) +
                                    " floats, manifest declares " + std::to_string(m.n_frames) +
                                    " x " + std::to_string(m.n_dims));
        }
        const auto& frames = doc.at("frames");
        if (frames.size() != m.n_frames) {
            fail(Errc::corrupt, "manifest lists " + std::to_string(frames.size()) + " frames, n_frames is " +
                                    std::to_string(m.n_frames));
        }
        records.reserve(m.n_frames);
        for (std::size_t i = 0; i < m.n_frames; ++i) {
            const auto& f = frames[i];
            FrameRecord r;
            r.frame_id = f.at("frame_id").get<FrameId>();
            r.image_path = f.at("image").get<std::string>();
            r.image_checksum = std::stoull(f.at("checksum").get<std::string>(), nullptr, 16);
            r.source_clip = f.value("source_clip", std::string{});
            std::vector<double> row(m.n_dims);
            for (std::size_t n = 0; n < m.n_dims; ++n) {
                float value;
                std::memcpy(&value, raw.data() + (i * m.n_dims + n) * sizeof(float), sizeof(float));
                row[n] = value;
            }
            r.params = HyperparamVector(std::move(row));
            records.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        fail(Errc::parse, "manifest.json: " + std::string(e.what()));
    } catch (const std::invalid_argument&) {
        fail(Errc::parse, "manifest.json: malformed checksum");
    }

    for (const auto& r : records) {
        const fs::path path = dir / r.image_path;
        if (!fs::exists(path)) {
            fail(Errc::corrupt, "corrupted library: frame " + std::to_string(r.frame_id) +
                                    " image " + r.image_path + " is missing");
        }
        if (options.verify_checksums && fnv1a64(read_file_bytes(path)) != r.image_checksum) {
            fail(Errc::corrupt, "corrupted library: frame " + std::to_string(r.frame_id) +
                                    " image " + r.image_path + " fails its checksum");
        }
    }
    return FrameLibrary(std::move(m), std::move(records), dir);
}

LibraryStats library_stats(const FrameLibrary& lib) {
    LibraryStats stats;
    stats.k_frames = lib.size();
    stats.n_dims = lib.dims();
    stats.fps = lib.fps();
    stats.seconds_of_video = lib.fps() > 0 ? double(lib.size()) / lib.fps() : 0.0;
    if (lib.has_files()) {
        std::error_code ec;
        for (const auto& r : lib.records()) {
            const auto size = fs::file_size(lib.root() / r.image_path, ec);
            if (!ec) stats.total_bytes += size;
        }
        for (const char* meta : {"manifest.json", "params.f32"}) {
            const auto size = fs::file_size(lib.root() / meta, ec);
            if (!ec) stats.total_bytes += size;
        }
    } else {
        stats.total_bytes = lib.param_matrix().size() * sizeof(float);
    }
    return stats;
}

std::string format_stats(const LibraryStats& s) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "k_frames=%zu n_dims=%zu fps=%d total_bytes=%llu seconds_of_video=%.3f",
                  s.k_frames, s.n_dims, s.fps, static_cast<unsigned long long>(s.total_bytes),
                  s.seconds_of_video);
    return buf;
}

// ---------------------------------------------------------------------------
// Coverage grid

std::size_t CoverageGrid::size() const noexcept {
    return std::size_t(mouth_open_levels) * mouth_width_levels * eye_levels * tilt_levels * brow_levels;
}

FeatureFrameStream coverage_grid(const CoverageGrid& grid, std::size_t dims, int fps) {
    if (dims < kSemanticDims) fail(Errc::invalid_argument, "coverage grid needs at least 5 dims");
    const int levels[kSemanticDims] = {grid.mouth_open_levels, grid.mouth_width_levels, grid.eye_levels,
                                       grid.tilt_levels, grid.brow_levels};
    for (int l : levels) {
        if (l < 1) fail(Errc::invalid_argument, "grid levels must be >= 1");
    }
    // Levels are snapped to float32 so grid vectors equal the rows the library stores.
    auto level = [](int i, int n) {
        return double(static_cast<float>(n == 1 ? 0.5 : double(i) / double(n - 1)));
    };

    std::vector<HyperparamVector> rows;
    rows.reserve(grid.size());
    for (int b = 0; b < levels[4]; ++b)
        for (int t = 0; t < levels[3]; ++t)
            for (int e = 0; e < levels[2]; ++e)
                for (int w = 0; w < levels[1]; ++w)
                    for (int o = 0; o < levels[0]; ++o) {
                        std::vector<double> v(dims, double(static_cast<float>(grid.fill)));
                        v[kMouthOpen] = level(o, levels[0]);
                        v[kMouthWidth] = level(w, levels[1]);
                        v[kEyeOpen] = level(e, levels[2]);
                        v[kHeadTilt] = level(t, levels[3]);
                        v[kBrowRaise] = level(b, levels[4]);
                        rows.emplace_back(std::move(v));
                    }
    return make_stream(std::move(rows), fps, SourceKind::grid);
}

} // namespace rita
