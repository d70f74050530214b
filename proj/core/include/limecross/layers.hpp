#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "limecross/errors.hpp"

namespace limecross {

// One image plane; rows index y (top to bottom), cols index x.
using Plane = Eigen::ArrayXXd;

struct Rgb {
    double r = 0.0;
    double g = 0.0;
    double b = 0.0;
};

// Mid-gray in the [-1,1] color convention (0.5 on a [0,1] scale).
inline constexpr Rgb kMidGray{0.0, 0.0, 0.0};

struct PromptPair {
    std::string source;
    std::string target;
};

// One scene layer: straight (non-premultiplied) RGB in [-1,1], alpha in [0,1].
struct RgbaLayer {
    std::array<Plane, 3> color;
    Plane alpha;
    std::string name;

    Eigen::Index height() const { return alpha.rows(); }
    Eigen::Index width() const { return alpha.cols(); }
};

// Zero-initialized layer (transparent black-gray: color 0, alpha 0).
RgbaLayer make_layer(Eigen::Index height, Eigen::Index width, std::string name = {});

// Shape and range checks; throws DimensionError on plane-shape mismatch and
// ModelError when values leave [-1,1] / [0,1].
void validate_layer(const RgbaLayer& layer);

// Fully opaque RGB image. Alpha is identically 1 and therefore not stored.
struct OpaqueImage {
    std::array<Plane, 3> color;

    Eigen::Index height() const { return color[0].rows(); }
    Eigen::Index width() const { return color[0].cols(); }
};

// Conversion used when an opaque image enters layer-shaped pipelines; the
// alpha plane is constant 1.
RgbaLayer to_layer(const OpaqueImage& image, std::string name = {});

// Ordered layer stack in painter's order: layers[0] is the backmost layer.
// prompts holds one (source, target) pair per layer, same indexing.
struct LayeredScene {
    std::vector<RgbaLayer> layers;
    std::vector<PromptPair> prompts;
    Eigen::Index width = 0;
    Eigen::Index height = 0;
};

void validate_scene(const LayeredScene& scene);

// Accumulation state of the front-to-back over recurrence: premultiplied
// accumulated color and total coverage, both monotone in the layer count.
struct CompositeAccum {
    std::array<Plane, 3> color;
    Plane coverage;
};

// Front-to-back alpha-over accumulation:
//   c~ <- c~ + c * a * (1 - a~)
//   a~ <- a~ + a * (1 - a~)
// The list must be ordered frontmost first. Throws DimensionError naming the
// offending layer when shapes disagree; throws on an empty list.
CompositeAccum composite_over(const std::vector<const RgbaLayer*>& front_to_back);

// Composite of every layer except the target over an opaque plate, used as
// conditioning. The plate is the backmost layer's RGB over mid-gray
// (alpha-weighted), or plain mid-gray when the target is the backmost layer,
// so residual holes always resolve to an opaque value.
OpaqueImage opaque_context(const LayeredScene& scene, int target_index);

// Full front-to-back composite over a flat background color.
OpaqueImage composite_scene(const LayeredScene& scene, const Rgb& background);

// Full composite where uncovered pixels fall back to the same backmost-layer
// plate rule opaque_context uses.
OpaqueImage composite_scene_over_backmost(const LayeredScene& scene);

// Returns a copy of the scene with layers[index] swapped out; every other
// layer is byte-identical to the input.
LayeredScene replace_layer(const LayeredScene& scene, int index, RgbaLayer new_layer);

}  // namespace limecross
