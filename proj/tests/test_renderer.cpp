// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "rita/error.hpp"
#include "rita/image.hpp"
#include "rita/renderer.hpp"

using namespace rita;

namespace {

HyperparamVector face(double open, double width = 0.5) { return {open, width, 0.8, 0.5, 0.5, 0.4, 0.4, 0.4}; }

std::size_t count_colour(const Image& img, Rgb c) {
    std::size_t n = 0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const auto* p = img.pixel(x, y);
            n += p[0] == c.r && p[1] == c.g && p[2] == c.b;
        }
    }
    return n;
}

} // namespace

TEST(ParametricFace, DeterministicOutput) {
    ParametricFaceRenderer r({128, 128, "parametric-face-v1"});
    const auto a = r.render(face(0.4));
    const auto b = r.render(face(0.4));
    EXPECT_EQ(a.rgb, b.rgb);
    EXPECT_EQ(a.width, 128);
    EXPECT_EQ(a.rgb.size(), 128u * 128u * 3u);
}

TEST(ParametricFace, OpenMouthShowsMoreInterior) {
    ParametricFaceRenderer r({256, 256, "parametric-face-v1"});
    const auto closed = count_colour(r.render(face(0.0)), palette::mouth);
    const auto open = count_colour(r.render(face(1.0)), palette::mouth);
    EXPECT_GT(open, closed * 4);
}

TEST(ParametricFace, DifferentParamsDifferentPixels) {
    ParametricFaceRenderer r({96, 96, "parametric-face-v1"});
    EXPECT_NE(r.render(face(0.2)).rgb, r.render(face(0.7)).rgb);
    EXPECT_NE(r.render(face(0.5, 0.1)).rgb, r.render(face(0.5, 0.9)).rgb);
}

TEST(ParametricFace, NeedsFiveDims) {
    ParametricFaceRenderer r({64, 64, "parametric-face-v1"});
    EXPECT_THROW(r.render({0.1, 0.2, 0.3, 0.4}), Error);
}

TEST(RenderSpec, RejectsTinyCanvas) {
    RenderSpec s{16, 16, "parametric-face-v1"};
    EXPECT_THROW(s.validate(), Error);
}

TEST(Registry, BuiltinsAndUnknownIds) {
    const auto reg = RendererRegistry::with_builtins();
    EXPECT_TRUE(reg.contains("parametric-face-v1"));
    EXPECT_TRUE(reg.contains("parametric-mask-v1"));
    try {
        reg.create({64, 64, "no-such-renderer"});
        FAIL();
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("parametric-face-v1"), std::string::npos) << msg;
        EXPECT_NE(msg.find("parametric-mask-v1"), std::string::npos) << msg;
    }
}

TEST(Registry, BackendsAreInterchangeable) {
    const auto reg = RendererRegistry::with_builtins();
    const auto a = reg.create({64, 64, "parametric-face-v1"});
    const auto b = reg.create({64, 64, "parametric-mask-v1"});
    EXPECT_EQ(b->id(), "parametric-mask-v1");
    EXPECT_NE(a->render(face(0.5)).rgb, b->render(face(0.5)).rgb);
    EXPECT_EQ(b->render(face(0.5)).rgb, b->render(face(0.5)).rgb);
}

TEST(ImageCodec, PngRoundTripIsLossless) {
    const auto img = render_face(face(0.6), {80, 64, "parametric-face-v1"});
    const auto back = decode_image(encode_png(img));
    EXPECT_EQ(back.width, 80);
    EXPECT_EQ(back.height, 64);
    EXPECT_EQ(back.rgb, img.rgb);
}

TEST(ImageCodec, JpegRoundTripIsClose) {
    const auto img = render_face(face(0.6), {64, 64, "parametric-face-v1"});
    const auto bytes = encode_jpeg(img);
    EXPECT_EQ(bytes[0], 0xFF);
    EXPECT_EQ(bytes[1], 0xD8);
    const auto back = decode_image(bytes);
    ASSERT_EQ(back.rgb.size(), img.rgb.size());
    double err = 0;
    for (std::size_t i = 0; i < img.rgb.size(); ++i) err += std::abs(int(img.rgb[i]) - int(back.rgb[i]));
    EXPECT_LT(err / double(img.rgb.size()), 6.0);
}

TEST(ImageCodec, RejectsUnknownBytes) {
    const std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5, 6, 7, 8};
    EXPECT_THROW(decode_image(junk), Error);
}
