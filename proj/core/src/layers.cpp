#include "limecross/layers.hpp"

#include <utility>

namespace limecross {

namespace {

std::string layer_label(const RgbaLayer& layer, std::size_t position) {
    if (layer.name.empty()) return "layer #" + std::to_string(position);
    return "layer '" + layer.name + "' (#" + std::to_string(position) + ")";
}

// Plate colors for opaque_context / composite_scene_over_backmost: the
// backmost layer's RGB over mid-gray, i.e. alpha-weighted color.
std::array<Plane, 3> backmost_plate(const RgbaLayer& backmost) {
    std::array<Plane, 3> plate;
    for (int ch = 0; ch < 3; ++ch) plate[ch] = backmost.color[ch] * backmost.alpha;
    return plate;
}

OpaqueImage finish_over_plate(const CompositeAccum& acc, const std::array<Plane, 3>& plate) {
    OpaqueImage out;
    Plane hole = 1.0 - acc.coverage;
    for (int ch = 0; ch < 3; ++ch) out.color[ch] = acc.color[ch] + plate[ch] * hole;
    return out;
}

std::vector<const RgbaLayer*> front_to_back_view(const LayeredScene& scene, int skip_index) {
    std::vector<const RgbaLayer*> view;
    view.reserve(scene.layers.size());
    for (int k = static_cast<int>(scene.layers.size()) - 1; k >= 0; --k) {
        if (k == skip_index) continue;
        view.push_back(&scene.layers[static_cast<std::size_t>(k)]);
    }
    return view;
}

}  // namespace

RgbaLayer make_layer(Eigen::Index height, Eigen::Index width, std::string name) {
    RgbaLayer layer;
    for (auto& plane : layer.color) plane = Plane::Zero(height, width);
    layer.alpha = Plane::Zero(height, width);
    layer.name = std::move(name);
    return layer;
}

void validate_layer(const RgbaLayer& layer) {
    const Eigen::Index h = layer.alpha.rows();
    const Eigen::Index w = layer.alpha.cols();
    if (h <= 0 || w <= 0) throw DimensionError("layer '" + layer.name + "' has empty alpha plane");
    for (int ch = 0; ch < 3; ++ch) {
        if (layer.color[ch].rows() != h || layer.color[ch].cols() != w) {
            throw DimensionError("layer '" + layer.name + "': color plane " + std::to_string(ch) +
                                 " does not match the alpha plane dimensions");
        }
        if ((layer.color[ch].abs() > 1.0).any()) {
            throw ModelError("layer '" + layer.name + "': color values outside [-1,1]");
        }
    }
    if ((layer.alpha < 0.0).any() || (layer.alpha > 1.0).any()) {
        throw ModelError("layer '" + layer.name + "': alpha values outside [0,1]");
    }
}

RgbaLayer to_layer(const OpaqueImage& image, std::string name) {
    RgbaLayer layer;
    layer.color = image.color;
    layer.alpha = Plane::Ones(image.height(), image.width());
    layer.name = std::move(name);
    return layer;
}

void validate_scene(const LayeredScene& scene) {
    if (scene.layers.empty()) throw DimensionError("scene has no layers");
    if (scene.prompts.size() != scene.layers.size()) {
        throw DimensionError("scene has " + std::to_string(scene.layers.size()) + " layers but " +
                             std::to_string(scene.prompts.size()) + " prompt pairs");
    }
    for (std::size_t k = 0; k < scene.layers.size(); ++k) {
        const RgbaLayer& layer = scene.layers[k];
        if (layer.height() != scene.height || layer.width() != scene.width) {
            throw DimensionError(layer_label(layer, k) + " is " + std::to_string(layer.height()) +
                                 "x" + std::to_string(layer.width()) + ", scene is " +
                                 std::to_string(scene.height) + "x" + std::to_string(scene.width));
        }
        validate_layer(layer);
    }
}

CompositeAccum composite_over(const std::vector<const RgbaLayer*>& front_to_back) {
    if (front_to_back.empty()) throw DimensionError("composite_over: empty layer list");
    const Eigen::Index h = front_to_back.front()->height();
    const Eigen::Index w = front_to_back.front()->width();

    CompositeAccum acc;
    for (auto& plane : acc.color) plane = Plane::Zero(h, w);
    acc.coverage = Plane::Zero(h, w);

    for (std::size_t t = 0; t < front_to_back.size(); ++t) {
        const RgbaLayer& layer = *front_to_back[t];
        if (layer.height() != h || layer.width() != w) {
            throw DimensionError("composite_over: " + layer_label(layer, t) + " is " +
                                 std::to_string(layer.height()) + "x" + std::to_string(layer.width()) +
                                 ", expected " + std::to_string(h) + "x" + std::to_string(w));
        }
        Plane visible = layer.alpha * (1.0 - acc.coverage);
        for (int ch = 0; ch < 3; ++ch) acc.color[ch] += layer.color[ch] * visible;
        acc.coverage += visible;
    }
    return acc;
}

OpaqueImage opaque_context(const LayeredScene& scene, int target_index) {
    if (scene.layers.empty()) throw DimensionError("opaque_context: scene has no layers");
    if (target_index < 0 || target_index >= static_cast<int>(scene.layers.size())) {
        throw IndexError("opaque_context: target index " + std::to_string(target_index) +
                         " out of range for " + std::to_string(scene.layers.size()) + " layers");
    }

    const Eigen::Index h = scene.layers.front().height();
    const Eigen::Index w = scene.layers.front().width();
    std::array<Plane, 3> plate;
    if (target_index == 0) {
        plate = {Plane::Constant(h, w, kMidGray.r), Plane::Constant(h, w, kMidGray.g),
                 Plane::Constant(h, w, kMidGray.b)};
    } else {
        plate = backmost_plate(scene.layers.front());
    }

    std::vector<const RgbaLayer*> rest = front_to_back_view(scene, target_index);
    if (rest.empty()) return OpaqueImage{plate};
    return finish_over_plate(composite_over(rest), plate);
}

OpaqueImage composite_scene(const LayeredScene& scene, const Rgb& background) {
    if (scene.layers.empty()) throw DimensionError("composite_scene: scene has no layers");
    CompositeAccum acc = composite_over(front_to_back_view(scene, -1));
    const Eigen::Index h = acc.coverage.rows();
    const Eigen::Index w = acc.coverage.cols();
    std::array<Plane, 3> plate = {Plane::Constant(h, w, background.r),
                                  Plane::Constant(h, w, background.g),
                                  Plane::Constant(h, w, background.b)};
    return finish_over_plate(acc, plate);
}

OpaqueImage composite_scene_over_backmost(const LayeredScene& scene) {
    if (scene.layers.empty()) throw DimensionError("composite_scene_over_backmost: scene has no layers");
    CompositeAccum acc = composite_over(front_to_back_view(scene, -1));
    return finish_over_plate(acc, backmost_plate(scene.layers.front()));
}

LayeredScene replace_layer(const LayeredScene& scene, int index, RgbaLayer new_layer) {
    if (index < 0 || index >= static_cast<int>(scene.layers.size())) {
        throw IndexError("replace_layer: index " + std::to_string(index) + " out of range for " +
                         std::to_string(scene.layers.size()) + " layers");
    }
    if (new_layer.height() != scene.height || new_layer.width() != scene.width) {
        throw DimensionError("replace_layer: new layer is " + std::to_string(new_layer.height()) + "x" +
                             std::to_string(new_layer.width()) + ", scene is " +
                             std::to_string(scene.height) + "x" + std::to_string(scene.width));
    }
    LayeredScene out = scene;
    out.layers[static_cast<std::size_t>(index)] = std::move(new_layer);
    return out;
}

}  // namespace limecross
