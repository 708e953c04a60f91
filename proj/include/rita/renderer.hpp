// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "rita/core.hpp"
#include "rita/image.hpp"

namespace rita {

// Semantic coordinates read by the renderers, each clamped to [0, 1].
enum SemanticDim : std::size_t {
    kMouthOpen = 0,
    kMouthWidth = 1,
    kEyeOpen = 2,
    kHeadTilt = 3,
    kBrowRaise = 4,
    kSemanticDims = 5,
};

struct RenderSpec {
    int width = 256;
    int height = 256;
    std::string renderer_id = "parametric-face-v1";

    void validate() const;
};

/// Backend that turns one hyperparameter row into a frame. Implementations
/// must be pure functions of (vector, spec).
class Renderer {
public:
    virtual ~Renderer() = default;
    virtual std::string_view id() const noexcept = 0;
    virtual const RenderSpec& spec() const noexcept = 0;
    virtual Image render(const HyperparamVector& v) const = 0;
};

// Face geometry, as fractions of s = min(width, height). The mouth cavity is an
// ellipse with vertical semi-axis s * (kMouthMinHalfHeight + kMouthOpenHalfHeight * v[0]),
// so its height grows by a factor of 9 between v[0] = 0 and v[0] = 1.
inline constexpr double kMouthCenterY = 0.20;
inline constexpr double kMouthMinHalfHeight = 0.01;
inline constexpr double kMouthOpenHalfHeight = 0.08;
inline constexpr double kMouthMinHalfWidth = 0.06;
inline constexpr double kMouthWideHalfWidth = 0.08;
inline constexpr double kLipThickness = 0.012;
inline constexpr double kMaxTiltDegrees = 5.0;

struct Rgb {
    std::uint8_t r, g, b;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

namespace palette {
inline constexpr Rgb background{40, 44, 52};
inline constexpr Rgb skin{233, 196, 160};
inline constexpr Rgb nose{214, 170, 136};
inline constexpr Rgb lips{190, 80, 90};
inline constexpr Rgb mouth{70, 20, 30};
inline constexpr Rgb eye_white{248, 248, 244};
inline constexpr Rgb pupil{35, 60, 90};
inline constexpr Rgb brow{90, 60, 40};
} // namespace palette

/// Vector-drawn face: mouth ellipse from v[0]/v[1], eyelid aperture from v[2],
/// whole-face rotation of (v[3] - 0.5) * 10 degrees, brow lift from v[4].
class ParametricFaceRenderer final : public Renderer {
public:
    static constexpr std::string_view kId = "parametric-face-v1";

    explicit ParametricFaceRenderer(RenderSpec spec);

    std::string_view id() const noexcept override { return kId; }
    const RenderSpec& spec() const noexcept override { return spec_; }
    Image render(const HyperparamVector& v) const override;

private:
    RenderSpec spec_;
};

/// Flat block-shaded mask driven by the same semantic dims; a second backend
/// so the swap point is exercised.
class ParametricMaskRenderer final : public Renderer {
public:
    static constexpr std::string_view kId = "parametric-mask-v1";

    explicit ParametricMaskRenderer(RenderSpec spec);

    std::string_view id() const noexcept override { return kId; }
    const RenderSpec& spec() const noexcept override { return spec_; }
    Image render(const HyperparamVector& v) const override;

private:
    RenderSpec spec_;
};

Image render_face(const HyperparamVector& v, const RenderSpec& spec = {});

class RendererRegistry {
public:
    using Factory = std::function<std::unique_ptr<Renderer>(const RenderSpec&)>;

    void add(std::string id, Factory factory);
    bool contains(std::string_view id) const;
    std::vector<std::string> available() const;

    /// Creates the backend named by spec.renderer_id; unknown ids list the registered ones.
    std::unique_ptr<Renderer> create(const RenderSpec& spec) const;

    /// Registry holding the built-in parametric backends.
    static RendererRegistry with_builtins();

private:
    std::map<std::string, Factory, std::less<>> factories_;
};

} // namespace rita
