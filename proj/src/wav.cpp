// SPDX-License-Identifier: Apache-2.0
#include "rita/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "rita/error.hpp"
#include "rita/io.hpp"

namespace rita {
namespace {

std::uint32_t le32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

std::uint16_t le16(const std::uint8_t* p) { return std::uint16_t(p[0] | (p[1] << 8)); }

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(std::uint8_t(v));
    out.push_back(std::uint8_t(v >> 8));
}

} // namespace

PcmAudio parse_wav(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        fail(Errc::parse, "not a RIFF/WAVE file");
    }
    PcmAudio audio;
    bool have_fmt = false;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint8_t* chunk = bytes.data() + pos;
        const std::uint32_t size = le32(chunk + 4);
        const std::size_t body = pos + 8;
        if (body + size > bytes.size()) fail(Errc::parse, "truncated WAV chunk");
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16) fail(Errc::parse, "WAV fmt chunk too short");
            const std::uint16_t format = le16(bytes.data() + body);
            audio.channels = le16(bytes.data() + body + 2);
            audio.sample_rate = static_cast<int>(le32(bytes.data() + body + 4));
            const std::uint16_t bits = le16(bytes.data() + body + 14);
            if (format != 1 || bits != 16) {
                fail(Errc::parse, "only 16-bit PCM WAV is supported");
            }
            if (audio.channels == 0) fail(Errc::parse, "WAV declares zero channels");
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            if (!have_fmt) fail(Errc::parse, "WAV data chunk precedes fmt chunk");
            const std::size_t count = size / 2;
            audio.samples.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                const auto raw = static_cast<std::int16_t>(le16(bytes.data() + body + 2 * i));
                audio.samples[i] = static_cast<float>(raw) / 32768.0f;
            }
            return audio;
        }
        pos = body + size + (size & 1u);
    }
    fail(Errc::parse, "WAV file has no data chunk");
}

PcmAudio read_wav(const std::filesystem::path& path) { return parse_wav(read_file_bytes(path)); }

std::vector<std::uint8_t> encode_wav(const PcmAudio& audio) {
    const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
    std::vector<std::uint8_t> out;
    out.reserve(44 + data_bytes);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put32(out, 36 + data_bytes);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put32(out, 16);
    put16(out, 1);
    put16(out, static_cast<std::uint16_t>(audio.channels));
    put32(out, static_cast<std::uint32_t>(audio.sample_rate));
    put32(out, static_cast<std::uint32_t>(audio.sample_rate * audio.channels * 2));
    put16(out, static_cast<std::uint16_t>(audio.channels * 2));
    put16(out, 16);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put32(out, data_bytes);
    for (float s : audio.samples) {
        const double scaled = std::clamp(std::round(double(s) * 32768.0), -32768.0, 32767.0);
        put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
    }
    return out;
}

void write_wav(const std::filesystem::path& path, const PcmAudio& audio) {
    write_file_bytes(path, encode_wav(audio));
}

} // namespace rita
