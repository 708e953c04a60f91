// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace rita {

/// 8-bit RGB raster, row-major, no padding.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::uint8_t* pixel(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* pixel(int x, int y) const {
        return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }

    friend bool operator==(const Image&, const Image&) = default;
};

enum class ImageFormat { png, jpeg };

inline constexpr int kJpegQuality = 90;

std::vector<std::uint8_t> encode_png(const Image& image);
std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality = kJpegQuality);
std::vector<std::uint8_t> encode_image(const Image& image, ImageFormat format);

/// Decodes PNG or JPEG, detected from the leading magic bytes.
Image decode_image(std::span<const std::uint8_t> bytes);

const char* file_extension(ImageFormat format) noexcept;
const char* mime_type(ImageFormat format) noexcept;

} // namespace rita
