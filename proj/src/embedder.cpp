// SPDX-License-Identifier: Apache-2.0
#include "rita/embedder.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "rita/error.hpp"
#include "rita/io.hpp"

namespace rita {

std::string_view to_string(SourceKind kind) noexcept {
    switch (kind) {
    case SourceKind::wav: return "wav";
    case SourceKind::text_stub: return "text_stub";
    case SourceKind::file: return "file";
    case SourceKind::grid: return "grid";
    }
    return "unknown";
}

double FeatureFrameStream::duration_ms() const noexcept {
    return fps > 0 ? static_cast<double>(frames.size()) * 1000.0 / fps : 0.0;
}

std::int64_t frame_interval_ms(double fps) {
    if (!(fps > 0)) fail(Errc::invalid_argument, "fps must be positive");
    return std::llround(1000.0 / fps);
}

FeatureFrameStream make_stream(std::vector<HyperparamVector> vectors, int fps, SourceKind kind) {
    FeatureFrameStream stream;
    stream.fps = fps;
    stream.source_kind = kind;
    const std::int64_t dt = frame_interval_ms(fps);
    stream.frames.reserve(vectors.size());
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        stream.frames.push_back({static_cast<std::int64_t>(i) * dt, std::move(vectors[i])});
    }
    return stream;
}

void validate_stream(const FeatureFrameStream& stream) {
    const std::int64_t dt = frame_interval_ms(stream.fps);
    for (std::size_t i = 0; i < stream.frames.size(); ++i) {
        const auto& f = stream.frames[i];
        if (f.vector.size() != stream.dims()) {
            fail(Errc::dimension, "frame " + std::to_string(i) + " has " +
                                      std::to_string(f.vector.size()) + " dims, expected " +
                                      std::to_string(stream.dims()));
        }
        if (f.timestamp_ms < 0) fail(Errc::invalid_argument, "negative timestamp");
        if (i > 0 && f.timestamp_ms - stream.frames[i - 1].timestamp_ms != dt) {
            fail(Errc::invalid_argument, "frame " + std::to_string(i) +
                                             " breaks the " + std::to_string(dt) + " ms cadence");
        }
    }
}

// ---------------------------------------------------------------------------
// Embedder configuration

EmbedderConfig EmbedderConfig::with_dims(std::size_t dims, int fps) {
    EmbedderConfig cfg;
    cfg.fps = fps;
    if (dims == cfg.dims) return cfg;
    cfg.dims = dims;
    cfg.band_edges_hz.clear();
    const std::size_t bands = dims >= 3 ? dims - 3 : 0;
    const double lo = 100.0;
    const double hi = 3500.0;
    for (std::size_t i = 0; i < bands; ++i) {
        const double frac = bands == 1 ? 0.0 : static_cast<double>(i) / double(bands - 1);
        cfg.band_edges_hz.push_back(lo * std::pow(hi / lo, frac));
    }
    return cfg;
}

void EmbedderConfig::validate(int sample_rate) const {
    if (dims < 4) fail(Errc::invalid_argument, "embedder needs at least 4 dims");
    if (fps <= 0) fail(Errc::invalid_argument, "fps must be positive");
    if (band_edges_hz.size() != dims - 3) {
        fail(Errc::invalid_argument, "expected " + std::to_string(dims - 3) +
                                         " band edges, got " +
                                         std::to_string(band_edges_hz.size()));
    }
    for (std::size_t i = 0; i < band_edges_hz.size(); ++i) {
        if (band_edges_hz[i] < 0 || (i > 0 && band_edges_hz[i] <= band_edges_hz[i - 1])) {
            fail(Errc::invalid_argument, "band edges must be non-negative and strictly increasing");
        }
        if (sample_rate > 0 && band_edges_hz[i] >= sample_rate / 2.0) {
            fail(Errc::invalid_argument, "band edge " + std::to_string(band_edges_hz[i]) +
                                             " Hz is not below Nyquist");
        }
    }
}

// ---------------------------------------------------------------------------
// Audio path

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

/// Per-window DFT power spectrum |X_k|^2, k = 0..L/2, with a cached twiddle table.
class PowerSpectrum {
public:
    const std::vector<double>& compute(std::span<const float> window) {
        const std::size_t n = window.size();
        if (n != cos_.size()) {
            cos_.resize(n);
            sin_.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double angle = 2.0 * std::numbers::pi * double(i) / double(n);
                cos_[i] = std::cos(angle);
                sin_[i] = std::sin(angle);
            }
        }
        power_.assign(n / 2 + 1, 0.0);
        for (std::size_t k = 0; k < power_.size(); ++k) {
            double re = 0.0;
            double im = 0.0;
            std::size_t idx = 0;
            for (std::size_t i = 0; i < n; ++i) {
                re += window[i] * cos_[idx];
                im -= window[i] * sin_[idx];
                idx += k;
                if (idx >= n) idx -= n;
            }
            power_[k] = re * re + im * im;
        }
        return power_;
    }

private:
    std::vector<double> cos_, sin_, power_;
};

} // namespace

FeatureFrameStream embed_wav(const PcmAudio& audio, const EmbedderConfig& cfg) {
    if (audio.samples.empty()) fail(Errc::invalid_argument, "empty audio");
    if (audio.channels != 1) {
        fail(Errc::invalid_argument, "audio has " + std::to_string(audio.channels) +
                                         " channels; downmix to mono first");
    }
    if (audio.sample_rate < 8000) fail(Errc::invalid_argument, "sample rate must be >= 8000 Hz");
    cfg.validate(audio.sample_rate);

    const auto sr = static_cast<std::int64_t>(audio.sample_rate);
    const auto total = static_cast<std::int64_t>(audio.samples.size());
    const std::int64_t frames = total * cfg.fps / sr;
    if (frames == 0) fail(Errc::invalid_argument, "audio shorter than one analysis window");

    const double nyquist = sr / 2.0;
    PowerSpectrum spectrum;
    std::vector<HyperparamVector> vectors;
    vectors.reserve(static_cast<std::size_t>(frames));
    for (std::int64_t f = 0; f < frames; ++f) {
        const std::int64_t begin = f * sr / cfg.fps;
        const std::int64_t end = (f + 1) * sr / cfg.fps;
        const std::span<const float> window(audio.samples.data() + begin,
                                            static_cast<std::size_t>(end - begin));
        const std::size_t len = window.size();

        double sum_sq = 0.0;
        std::size_t crossings = 0;
        for (std::size_t i = 0; i < len; ++i) {
            sum_sq += double(window[i]) * window[i];
            if (i > 0 && (window[i - 1] >= 0.0f) != (window[i] >= 0.0f)) ++crossings;
        }
        const double rms = std::sqrt(sum_sq / double(len));
        const double zcr = len > 1 ? double(crossings) / double(len - 1) : 0.0;

        const auto& power = spectrum.compute(window);
        const double bin_hz = double(sr) / double(len);
        double weighted = 0.0;
        double total_power = 0.0;
        for (std::size_t k = 0; k < power.size(); ++k) {
            weighted += double(k) * bin_hz * power[k];
            total_power += power[k];
        }
        const double centroid = total_power > 0.0 ? weighted / total_power / nyquist : 0.0;

        std::vector<double> v(cfg.dims, 0.0);
        v[0] = clamp01(rms / kRmsFullScale);
        v[1] = clamp01(zcr);
        v[2] = clamp01(centroid);
        const double norm = double(len) * double(len);
        for (std::size_t b = 0; b < cfg.band_edges_hz.size(); ++b) {
            const double lo = cfg.band_edges_hz[b];
            const bool last = b + 1 == cfg.band_edges_hz.size();
            const double hi = last ? nyquist : cfg.band_edges_hz[b + 1];
            double energy = 0.0;
            for (std::size_t k = 0; k < power.size(); ++k) {
                const double hz = double(k) * bin_hz;
                if (hz >= lo && (hz < hi || (last && hz <= hi))) energy += power[k];
            }
            const double db = 10.0 * std::log10(energy / norm + kBandPowerGuard);
            v[3 + b] = clamp01((db - kBandFloorDb) / kBandRangeDb);
        }
        vectors.emplace_back(std::move(v));
    }
    return make_stream(std::move(vectors), cfg.fps, SourceKind::wav);
}

// ---------------------------------------------------------------------------
// Text stub

VisemeShape viseme_for(char c) noexcept {
    switch (c) {
    case 'a': return {VisemeClass::open, 0.90, 0.60, 0.70};
    case 'e': return {VisemeClass::open, 0.60, 0.80, 0.70};
    case 'i': return {VisemeClass::open, 0.35, 0.90, 0.70};
    case 'o': return {VisemeClass::open, 0.75, 0.30, 0.70};
    case 'u': return {VisemeClass::open, 0.45, 0.20, 0.70};
    case 'm':
    case 'b':
    case 'p': return {VisemeClass::closed, 0.00, 0.50, 0.30};
    case 'f':
    case 'v':
    case 's':
    case 'z':
    case 'c':
    case 'j':
    case 'x': return {VisemeClass::narrow, 0.15, 0.70, 0.50};
    default: break;
    }
    if (c >= 'a' && c <= 'z') return {VisemeClass::other, 0.30, 0.55, 0.45};
    if (c >= '0' && c <= '9') return {VisemeClass::other, 0.30, 0.55, 0.45};
    if (static_cast<unsigned char>(c) >= 0x80) return {VisemeClass::other, 0.30, 0.55, 0.45};
    return {VisemeClass::rest, 0.00, 0.45, 0.05};
}

FeatureFrameStream embed_text_stub(std::string_view text, const EmbedderConfig& cfg) {
    cfg.validate();
    const auto first = text.find_first_not_of(" \t\r\n\f\v");
    if (first == std::string_view::npos) fail(Errc::invalid_argument, "empty text");
    const auto last = text.find_last_not_of(" \t\r\n\f\v");
    text = text.substr(first, last - first + 1);

    std::vector<HyperparamVector> vectors;
    std::size_t frame = 0;
    for (char raw : text) {
        const auto byte = static_cast<unsigned char>(raw);
        if ((byte & 0xC0u) == 0x80u) continue; // UTF-8 continuation byte
        const char c = (byte >= 'A' && byte <= 'Z') ? char(byte - 'A' + 'a') : raw;
        const VisemeShape shape = viseme_for(c);
        for (int rep = 0; rep < kFramesPerCharacter; ++rep, ++frame) {
            const bool blink = frame % kBlinkPeriodFrames >= kBlinkPeriodFrames - 2;
            std::vector<double> v(cfg.dims, shape.band_level);
            v[0] = shape.mouth_open;
            v[1] = shape.mouth_width;
            v[2] = blink ? kStubEyeBlink : kStubEyeOpen;
            v[3] = 0.5;
            if (cfg.dims > 4) v[4] = 0.5;
            vectors.emplace_back(std::move(v));
        }
    }
    return make_stream(std::move(vectors), cfg.fps, SourceKind::text_stub);
}

// ---------------------------------------------------------------------------
// Feature files

namespace {

double parse_double(std::string_view token, std::size_t line) {
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && (token.back() == ' ' || token.back() == '\r')) token.remove_suffix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(value)) {
        fail(Errc::parse, "line " + std::to_string(line) + ": bad number '" +
                              std::string(token) + "'");
    }
    return value;
}

bool header_field(std::string_view header, std::string_view key, long& out) {
    const auto pos = header.find(key);
    if (pos == std::string_view::npos) return false;
    const char* begin = header.data() + pos + key.size();
    const auto [ptr, ec] = std::from_chars(begin, header.data() + header.size(), out);
    return ec == std::errc() && ptr != begin;
}

} // namespace

FeatureFrameStream parse_features(std::string_view text) {
    FeatureFrameStream stream;
    stream.source_kind = SourceKind::file;
    std::size_t line_no = 0;
    long declared_dims = -1;
    bool have_header = false;
    std::int64_t dt = 0;

    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;

        if (line.front() == '#') {
            if (have_header) continue;
            long n = 0;
            long fps = 0;
            if (line.find("rita-features v1") == std::string_view::npos ||
                !header_field(line, "N=", n) || !header_field(line, "fps=", fps) || n < 1 ||
                fps < 1) {
                fail(Errc::parse, "line " + std::to_string(line_no) +
                                      ": expected '# rita-features v1 N=<n> fps=<f>'");
            }
            declared_dims = n;
            stream.fps = static_cast<int>(fps);
            dt = frame_interval_ms(stream.fps);
            have_header = true;
            continue;
        }
        if (!have_header) fail(Errc::parse, "line " + std::to_string(line_no) + ": missing header");

        std::vector<std::string_view> fields;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            fields.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        const std::size_t row = stream.frames.size() + 1;
        if (fields.size() != static_cast<std::size_t>(declared_dims) + 1) {
            fail(Errc::parse, "line " + std::to_string(line_no) + " (row " + std::to_string(row) +
                                  "): expected " + std::to_string(declared_dims) +
                                  " values, found " + std::to_string(fields.size() - 1));
        }
        const double ts = parse_double(fields[0], line_no);
        if (ts < 0 || ts != std::floor(ts)) {
            fail(Errc::parse, "line " + std::to_string(line_no) + ": timestamp must be a non-negative integer");
        }
        const auto timestamp = static_cast<std::int64_t>(ts);
        if (!stream.frames.empty()) {
            const std::int64_t prev = stream.frames.back().timestamp_ms;
            if (timestamp <= prev) {
                fail(Errc::parse, "line " + std::to_string(line_no) + ": timestamps not increasing");
            }
            if (timestamp - prev != dt) {
                fail(Errc::parse, "line " + std::to_string(line_no) + ": timestamp step " +
                                      std::to_string(timestamp - prev) + " ms, expected " +
                                      std::to_string(dt));
            }
        }
        std::vector<double> values;
        values.reserve(fields.size() - 1);
        for (std::size_t i = 1; i < fields.size(); ++i) values.push_back(parse_double(fields[i], line_no));
        stream.frames.push_back({timestamp, HyperparamVector(std::move(values))});
    }
    if (!have_header) fail(Errc::parse, "feature file has no header");
    return stream;
}

FeatureFrameStream load_features(const std::filesystem::path& path) {
    return parse_features(read_file_text(path));
}

std::string format_features(const FeatureFrameStream& stream) {
    std::string out = "# rita-features v1 N=" + std::to_string(stream.dims()) +
                      " fps=" + std::to_string(stream.fps) + "\n";
    char buf[64];
    for (const auto& f : stream.frames) {
        out += std::to_string(f.timestamp_ms);
        for (double v : f.vector.values()) {
            std::snprintf(buf, sizeof buf, ",%.17g", v);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

void save_features(const FeatureFrameStream& stream, const std::filesystem::path& path) {
    write_file_text(path, format_features(stream));
}

} // namespace rita
