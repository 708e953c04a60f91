// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rita/core.hpp"
#include "rita/wav.hpp"

namespace rita {

enum class SourceKind { wav, text_stub, file, grid };

std::string_view to_string(SourceKind kind) noexcept;

struct FeatureFrame {
    std::int64_t timestamp_ms = 0;
    HyperparamVector vector;

    friend bool operator==(const FeatureFrame&, const FeatureFrame&) = default;
};

/// Timestamped embedding rows at a fixed cadence.
struct FeatureFrameStream {
    std::vector<FeatureFrame> frames;
    int fps = 25;
    SourceKind source_kind = SourceKind::file;

    std::size_t size() const noexcept { return frames.size(); }
    bool empty() const noexcept { return frames.empty(); }
    std::size_t dims() const noexcept { return frames.empty() ? 0 : frames.front().vector.size(); }
    /// Spoken duration covered by the stream: frames * 1000 / fps.
    double duration_ms() const noexcept;
};

/// round(1000 / fps).
std::int64_t frame_interval_ms(double fps);

/// Wraps vectors into a stream with timestamps 0, dt, 2dt, ...
FeatureFrameStream make_stream(std::vector<HyperparamVector> vectors, int fps, SourceKind kind);

/// Checks cadence and uniform dimensionality; throws on violation.
void validate_stream(const FeatureFrameStream& stream);

struct EmbedderConfig {
    std::size_t dims = 8;
    int fps = 25;
    /// dims - 3 lower band edges; band i spans [edge_i, edge_{i+1}), the last one up to Nyquist.
    std::vector<double> band_edges_hz = {100.0, 300.0, 800.0, 1800.0, 3500.0};

    /// The default edges for 8 dims; otherwise log-spaced edges between 100 Hz and 3.5 kHz.
    static EmbedderConfig with_dims(std::size_t dims, int fps = 25);
    void validate(int sample_rate = 0) const;
};

// Fixed normalization constants shared by every embedding so queries and
// library rows live in one coordinate system.
inline constexpr double kRmsFullScale = 0.3;
inline constexpr double kBandFloorDb = -100.0;
inline constexpr double kBandRangeDb = 100.0;
inline constexpr double kBandPowerGuard = 1e-12;

FeatureFrameStream embed_wav(const PcmAudio& audio, const EmbedderConfig& cfg);

enum class VisemeClass { rest, open, closed, narrow, other };

struct VisemeShape {
    VisemeClass cls;
    double mouth_open;
    double mouth_width;
    double band_level;
};

/// Table lookup for one (lower-cased ASCII) character.
VisemeShape viseme_for(char c) noexcept;

inline constexpr int kFramesPerCharacter = 2;
inline constexpr double kStubEyeOpen = 0.8;
inline constexpr double kStubEyeBlink = 0.15;
inline constexpr int kBlinkPeriodFrames = 75;

FeatureFrameStream embed_text_stub(std::string_view text, const EmbedderConfig& cfg);

FeatureFrameStream load_features(const std::filesystem::path& path);
FeatureFrameStream parse_features(std::string_view text);
std::string format_features(const FeatureFrameStream& stream);
void save_features(const FeatureFrameStream& stream, const std::filesystem::path& path);

} // namespace rita
