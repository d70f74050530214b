#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "limecross/bench.hpp"
#include "limecross/layers.hpp"

namespace limecross {

// Byte mappings between file pixels and the in-memory ranges. Color bytes
// map [-1,1] via v = b/127.5 - 1; alpha maps [0,1] via a = b/255. Writing
// rounds half away from zero, so color 0.0 lands on byte 128.
std::uint8_t color_to_byte(double v);
std::uint8_t alpha_to_byte(double a);
double byte_to_color(std::uint8_t b);
double byte_to_alpha(std::uint8_t b);

// Layer rasters are Netpbm PAM (P7) files, DEPTH 4, MAXVAL 255,
// TUPLTYPE RGB_ALPHA, straight (non-premultiplied) alpha.
RgbaLayer load_layer(const std::filesystem::path& path, std::string name = {});
void save_layer(const RgbaLayer& layer, const std::filesystem::path& path);

// Opaque images are written with the same container and alpha 255.
void save_image(const OpaqueImage& image, const std::filesystem::path& path);

// Scene manifest: JSON object {scene_id, width, height, layers:[...]} where
// layers is ordered back-to-front and each entry carries
// {file, name, prompt_src, prompt_tgt}; file paths are relative to the
// manifest's directory.
NamedScene load_scene(const std::filesystem::path& manifest_path);

// Writes layer_<k>.pam files plus scene.json into dir (created if needed);
// returns the manifest path.
std::filesystem::path save_scene(const NamedScene& named, const std::filesystem::path& dir);

// Benchmark instance lists are NDJSON, one instance per line, each carrying
// the manifest path (relative to the instance file) alongside the protocol
// fields.
struct InstanceFileEntry {
    EditInstance instance;
    std::string scene_file;
};

void save_instances(const std::vector<InstanceFileEntry>& entries, const std::filesystem::path& path);
std::vector<InstanceFileEntry> load_instances(const std::filesystem::path& path);

}  // namespace limecross
