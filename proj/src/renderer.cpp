// SPDX-License-Identifier: Apache-2.0
#include "rita/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rita/error.hpp"

namespace rita {

void RenderSpec::validate() const {
    if (width < 32 || height < 32) fail(Errc::invalid_argument, "render size must be at least 32x32");
    if (renderer_id.empty()) fail(Errc::invalid_argument, "renderer_id must not be empty");
}

namespace {

struct Semantics {
    double mouth_open, mouth_width, eye_open, tilt, brow;
};

Semantics read_semantics(const HyperparamVector& v) {
    if (v.size() < kSemanticDims) {
        fail(Errc::dimension, "renderer needs at least 5 dims, got " + std::to_string(v.size()));
    }
    auto c = [&](std::size_t i) { return std::clamp(v[i], 0.0, 1.0); };
    return {c(kMouthOpen), c(kMouthWidth), c(kEyeOpen), c(kHeadTilt), c(kBrowRaise)};
}

bool in_ellipse(double u, double w, double cu, double cw, double ru, double rw) {
    if (ru <= 0.0 || rw <= 0.0) return false;
    const double du = (u - cu) / ru;
    const double dw = (w - cw) / rw;
    return du * du + dw * dw <= 1.0;
}

bool in_rect(double u, double w, double cu, double cw, double hu, double hw) {
    return std::fabs(u - cu) <= hu && std::fabs(w - cw) <= hw;
}

void put(Image& img, int x, int y, Rgb c) {
    std::uint8_t* p = img.pixel(x, y);
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
}

/// Visits every pixel with face-local coordinates (u, w) in units of min(width, height),
/// rotated about the image centre by the head-tilt angle.
template <typename Shade>
Image rasterize(const RenderSpec& spec, double tilt, Shade&& shade) {
    Image img(spec.width, spec.height);
    const double s = std::min(spec.width, spec.height);
    const double cx = spec.width / 2.0;
    const double cy = spec.height / 2.0;
    const double theta = (tilt - 0.5) * 2.0 * kMaxTiltDegrees * std::numbers::pi / 180.0;
    const double cs = std::cos(theta);
    const double sn = std::sin(theta);
    for (int y = 0; y < spec.height; ++y) {
        const double py = y + 0.5 - cy;
        for (int x = 0; x < spec.width; ++x) {
            const double px = x + 0.5 - cx;
            const double u = (cs * px + sn * py) / s;
            const double w = (-sn * px + cs * py) / s;
            put(img, x, y, shade(u, w, s));
        }
    }
    return img;
}

} // namespace

ParametricFaceRenderer::ParametricFaceRenderer(RenderSpec spec) : spec_(std::move(spec)) {
    spec_.renderer_id = std::string(kId);
    spec_.validate();
}

Image ParametricFaceRenderer::render(const HyperparamVector& v) const {
    const Semantics m = read_semantics(v);
    const double eye_half_h = 0.045 * m.eye_open;
    const double brow_y = -0.19 - 0.05 * m.brow;
    const double mouth_rx = kMouthMinHalfWidth + kMouthWideHalfWidth * m.mouth_width;
    const double mouth_ry = kMouthMinHalfHeight + kMouthOpenHalfHeight * m.mouth_open;

    return rasterize(spec_, m.tilt, [&](double u, double w, double s) -> Rgb {
        if (in_rect(u, w, -0.13, brow_y, 0.08, 0.012) || in_rect(u, w, 0.13, brow_y, 0.08, 0.012)) {
            return palette::brow;
        }
        // Eyelids closing below half a pixel leave no visible white.
        if (eye_half_h * s >= 0.5) {
            for (double eu : {-0.13, 0.13}) {
                if (in_ellipse(u, w, eu, -0.08, 0.07, eye_half_h)) {
                    const double du = u - eu;
                    const double dw = w + 0.08;
                    return du * du + dw * dw <= 0.025 * 0.025 ? palette::pupil : palette::eye_white;
                }
            }
        }
        if (in_ellipse(u, w, 0.0, kMouthCenterY, mouth_rx, mouth_ry)) return palette::mouth;
        if (in_ellipse(u, w, 0.0, kMouthCenterY, mouth_rx + kLipThickness, mouth_ry + kLipThickness)) {
            return palette::lips;
        }
        if (in_ellipse(u, w, 0.0, 0.03, 0.025, 0.04)) return palette::nose;
        if (in_ellipse(u, w, 0.0, 0.0, 0.34, 0.42)) return palette::skin;
        return palette::background;
    });
}

ParametricMaskRenderer::ParametricMaskRenderer(RenderSpec spec) : spec_(std::move(spec)) {
    spec_.renderer_id = std::string(kId);
    spec_.validate();
}

Image ParametricMaskRenderer::render(const HyperparamVector& v) const {
    const Semantics m = read_semantics(v);
    constexpr Rgb backdrop{20, 20, 60};
    constexpr Rgb plate{120, 200, 180};
    constexpr Rgb feature{30, 30, 30};
    constexpr Rgb accent{240, 240, 120};
    const double eye_half_h = 0.04 * m.eye_open;
    const double brow_y = -0.2 - 0.05 * m.brow;

    return rasterize(spec_, m.tilt, [&](double u, double w, double) -> Rgb {
        if (!in_rect(u, w, 0.0, 0.0, 0.32, 0.40)) return backdrop;
        if (in_rect(u, w, -0.14, brow_y, 0.07, 0.015) || in_rect(u, w, 0.14, brow_y, 0.07, 0.015)) {
            return accent;
        }
        if (in_rect(u, w, -0.14, -0.08, 0.06, eye_half_h) ||
            in_rect(u, w, 0.14, -0.08, 0.06, eye_half_h)) {
            return feature;
        }
        if (in_rect(u, w, 0.0, 0.2, 0.05 + 0.1 * m.mouth_width, 0.01 + 0.08 * m.mouth_open)) {
            return feature;
        }
        return plate;
    });
}

Image render_face(const HyperparamVector& v, const RenderSpec& spec) {
    return ParametricFaceRenderer(spec).render(v);
}

void RendererRegistry::add(std::string id, Factory factory) {
    factories_[std::move(id)] = std::move(factory);
}

bool RendererRegistry::contains(std::string_view id) const { return factories_.find(id) != factories_.end(); }

std::vector<std::string> RendererRegistry::available() const {
    std::vector<std::string> ids;
    for (const auto& [id, _] : factories_) ids.push_back(id);
    return ids;
}

std::unique_ptr<Renderer> RendererRegistry::create(const RenderSpec& spec) const {
    const auto it = factories_.find(spec.renderer_id);
    if (it == factories_.end()) {
        std::string list;
        for (const auto& id : available()) list += (list.empty() ? "" : ", ") + id;
        fail(Errc::config, "unknown renderer '" + spec.renderer_id + "'; available: " + list);
    }
    try {
        return it->second(spec);
    } catch (const Error& e) {
        fail(e.code(), "renderer '" + spec.renderer_id + "': " + e.what());
    } catch (const std::exception& e) {
        fail(Errc::backend, "renderer '" + spec.renderer_id + "': " + e.what());
    }
}

RendererRegistry RendererRegistry::with_builtins() {
    RendererRegistry registry;
    registry.add(std::string(ParametricFaceRenderer::kId),
                 [](const RenderSpec& s) { return std::make_unique<ParametricFaceRenderer>(s); });
    registry.add(std::string(ParametricMaskRenderer::kId),
                 [](const RenderSpec& s) { return std::make_unique<ParametricMaskRenderer>(s); });
    return registry;
}

} // namespace rita
