// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace rita {

/// Decoded PCM audio, samples scaled to [-1, 1). Interleaved when channels > 1.
struct PcmAudio {
    std::vector<float> samples;
    int sample_rate = 16000;
    int channels = 1;

    std::size_t frame_count() const { return channels > 0 ? samples.size() / channels : 0; }
};

/// Parses a RIFF/WAVE file holding 16-bit little-endian PCM.
PcmAudio parse_wav(std::span<const std::uint8_t> bytes);
PcmAudio read_wav(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_wav(const PcmAudio& audio);
void write_wav(const std::filesystem::path& path, const PcmAudio& audio);

} // namespace rita
