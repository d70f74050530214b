#include "limecross/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace limecross {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << file.rdbuf();
    if (!file && !file.eof()) throw IoError("failed reading '" + path.string() + "'");
    return std::move(buffer).str();
}

void write_file(const std::filesystem::path& path, const std::string& payload) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open '" + path.string() + "' for writing");
    file.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!file) throw IoError("failed writing '" + path.string() + "'");
}

ordered_json parse_json(const std::string& text, const std::filesystem::path& path) {
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("'" + path.string() + "': " + e.what());
    }
}

template <typename T>
T field(const ordered_json& object, const char* key, const std::filesystem::path& path) {
    if (!object.contains(key)) {
        throw ParseError("'" + path.string() + "': missing field '" + key + "'");
    }
    try {
        return object.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("'" + path.string() + "': field '" + key + "': " + e.what());
    }
}

struct PamImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgba;  // row-major, 4 bytes per pixel
};

PamImage load_pam(const std::filesystem::path& path) {
    const std::string raw = read_file(path);
    if (raw.rfind("P7\n", 0) != 0) {
        throw ParseError("'" + path.string() + "': not a PAM (P7) file");
    }

    std::size_t cursor = 3;
    int width = 0;
    int height = 0;
    int depth = 0;
    int maxval = 0;
    std::string tupltype;
    bool seen_end = false;
    while (cursor < raw.size()) {
        const std::size_t eol = raw.find('\n', cursor);
        if (eol == std::string::npos) break;
        const std::string line = raw.substr(cursor, eol - cursor);
        cursor = eol + 1;
        if (line.empty() || line[0] == '#') continue;
        if (line == "ENDHDR") {
            seen_end = true;
            break;
        }
        std::istringstream fields(line);
        std::string key;
        fields >> key;
        if (key == "WIDTH") {
            fields >> width;
        } else if (key == "HEIGHT") {
            fields >> height;
        } else if (key == "DEPTH") {
            fields >> depth;
        } else if (key == "MAXVAL") {
            fields >> maxval;
        } else if (key == "TUPLTYPE") {
            fields >> tupltype;
        } else {
            throw ParseError("'" + path.string() + "': unknown PAM header line '" + line + "'");
        }
        if (!fields && key != "TUPLTYPE") {
            throw ParseError("'" + path.string() + "': malformed PAM header line '" + line + "'");
        }
    }
    if (!seen_end) throw ParseError("'" + path.string() + "': PAM header missing ENDHDR");
    if (width < 1 || height < 1) throw ParseError("'" + path.string() + "': bad PAM dimensions");
    if (depth != 4 || maxval != 255 || tupltype != "RGB_ALPHA") {
        throw ParseError("'" + path.string() + "': expected DEPTH 4, MAXVAL 255, TUPLTYPE RGB_ALPHA");
    }

    const std::size_t expected = static_cast<std::size_t>(width) * height * 4;
    if (raw.size() - cursor != expected) {
        throw ParseError("'" + path.string() + "': PAM payload is " + std::to_string(raw.size() - cursor) +
                         " bytes, expected " + std::to_string(expected));
    }
    PamImage image;
    image.width = width;
    image.height = height;
    image.rgba.assign(raw.begin() + static_cast<std::ptrdiff_t>(cursor), raw.end());
    return image;
}

void save_pam(const std::vector<std::uint8_t>& rgba, int width, int height,
              const std::filesystem::path& path) {
    std::string payload = "P7\nWIDTH " + std::to_string(width) + "\nHEIGHT " + std::to_string(height) +
                          "\nDEPTH 4\nMAXVAL 255\nTUPLTYPE RGB_ALPHA\nENDHDR\n";
    payload.append(reinterpret_cast<const char*>(rgba.data()), rgba.size());
    write_file(path, payload);
}

}  // namespace

std::uint8_t color_to_byte(double v) {
    const double clamped = std::clamp(v, -1.0, 1.0);
    return static_cast<std::uint8_t>(std::clamp<long>(std::lround((clamped + 1.0) * 127.5), 0, 255));
}

std::uint8_t alpha_to_byte(double a) {
    const double clamped = std::clamp(a, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::clamp<long>(std::lround(clamped * 255.0), 0, 255));
}

double byte_to_color(std::uint8_t b) { return b / 127.5 - 1.0; }

double byte_to_alpha(std::uint8_t b) { return b / 255.0; }

RgbaLayer load_layer(const std::filesystem::path& path, std::string name) {
    PamImage image = load_pam(path);
    RgbaLayer layer = make_layer(image.height, image.width, std::move(name));
    std::size_t at = 0;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            layer.color[0](y, x) = byte_to_color(image.rgba[at++]);
            layer.color[1](y, x) = byte_to_color(image.rgba[at++]);
            layer.color[2](y, x) = byte_to_color(image.rgba[at++]);
            layer.alpha(y, x) = byte_to_alpha(image.rgba[at++]);
        }
    }
    return layer;
}

void save_layer(const RgbaLayer& layer, const std::filesystem::path& path) {
    const auto height = static_cast<int>(layer.height());
    const auto width = static_cast<int>(layer.width());
    std::vector<std::uint8_t> rgba;
    rgba.reserve(static_cast<std::size_t>(height) * width * 4);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            rgba.push_back(color_to_byte(layer.color[0](y, x)));
            rgba.push_back(color_to_byte(layer.color[1](y, x)));
            rgba.push_back(color_to_byte(layer.color[2](y, x)));
            rgba.push_back(alpha_to_byte(layer.alpha(y, x)));
        }
    }
    save_pam(rgba, width, height, path);
}

void save_image(const OpaqueImage& image, const std::filesystem::path& path) {
    save_layer(to_layer(image), path);
}

NamedScene load_scene(const std::filesystem::path& manifest_path) {
    const ordered_json manifest = parse_json(read_file(manifest_path), manifest_path);
    if (!manifest.is_object()) {
        throw ParseError("'" + manifest_path.string() + "': manifest must be a JSON object");
    }

    NamedScene named;
    named.id = field<std::string>(manifest, "scene_id", manifest_path);
    named.scene.width = field<int>(manifest, "width", manifest_path);
    named.scene.height = field<int>(manifest, "height", manifest_path);
    const ordered_json layers = field<ordered_json>(manifest, "layers", manifest_path);
    if (!layers.is_array() || layers.empty()) {
        throw ParseError("'" + manifest_path.string() + "': 'layers' must be a non-empty array");
    }

    const std::filesystem::path base = manifest_path.parent_path();
    for (const ordered_json& entry : layers) {
        const auto file = field<std::string>(entry, "file", manifest_path);
        const auto name = field<std::string>(entry, "name", manifest_path);
        PromptPair prompts;
        prompts.source = field<std::string>(entry, "prompt_src", manifest_path);
        prompts.target = field<std::string>(entry, "prompt_tgt", manifest_path);

        RgbaLayer layer = load_layer(base / file, name);
        if (layer.height() != named.scene.height || layer.width() != named.scene.width) {
            throw DimensionError("'" + file + "' decodes to " + std::to_string(layer.height()) + "x" +
                                 std::to_string(layer.width()) + ", manifest declares " +
                                 std::to_string(named.scene.height) + "x" +
                                 std::to_string(named.scene.width));
        }
        named.scene.layers.push_back(std::move(layer));
        named.scene.prompts.push_back(std::move(prompts));
    }
    validate_scene(named.scene);
    return named;
}

std::filesystem::path save_scene(const NamedScene& named, const std::filesystem::path& dir) {
    validate_scene(named.scene);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());

    ordered_json manifest;
    manifest["scene_id"] = named.id;
    manifest["width"] = named.scene.width;
    manifest["height"] = named.scene.height;
    manifest["layers"] = ordered_json::array();
    for (std::size_t k = 0; k < named.scene.layers.size(); ++k) {
        const std::string file = "layer_" + std::to_string(k) + ".pam";
        save_layer(named.scene.layers[k], dir / file);
        ordered_json entry;
        entry["file"] = file;
        entry["name"] = named.scene.layers[k].name;
        entry["prompt_src"] = named.scene.prompts[k].source;
        entry["prompt_tgt"] = named.scene.prompts[k].target;
        manifest["layers"].push_back(entry);
    }
    const std::filesystem::path manifest_path = dir / "scene.json";
    write_file(manifest_path, manifest.dump(2) + "\n");
    return manifest_path;
}

void save_instances(const std::vector<InstanceFileEntry>& entries, const std::filesystem::path& path) {
    std::string payload;
    for (const InstanceFileEntry& entry : entries) {
        ordered_json record;
        record["instance_id"] = entry.instance.instance_id;
        record["scene_id"] = entry.instance.scene_id;
        record["scene_file"] = entry.scene_file;
        record["mode"] = entry.instance.mode == ProtocolMode::single ? "single" : "multi";
        record["targets"] = entry.instance.target_indices;
        record["prompts"] = ordered_json::array();
        for (const PromptPair& pair : entry.instance.prompts) {
            record["prompts"].push_back({{"src", pair.source}, {"tgt", pair.target}});
        }
        payload += record.dump();
        payload += '\n';
    }
    write_file(path, payload);
}

std::vector<InstanceFileEntry> load_instances(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    std::vector<InstanceFileEntry> entries;
    std::size_t cursor = 0;
    int line_number = 0;
    while (cursor < text.size()) {
        std::size_t eol = text.find('\n', cursor);
        if (eol == std::string::npos) eol = text.size();
        const std::string line = text.substr(cursor, eol - cursor);
        cursor = eol + 1;
        ++line_number;
        if (line.empty()) continue;

        const std::filesystem::path context = path.string() + ":" + std::to_string(line_number);
        const ordered_json record = parse_json(line, context);
        InstanceFileEntry entry;
        entry.instance.instance_id = field<std::uint64_t>(record, "instance_id", context);
        entry.instance.scene_id = field<std::string>(record, "scene_id", context);
        entry.scene_file = field<std::string>(record, "scene_file", context);
        const auto mode = field<std::string>(record, "mode", context);
        if (mode == "single") {
            entry.instance.mode = ProtocolMode::single;
        } else if (mode == "multi") {
            entry.instance.mode = ProtocolMode::multi;
        } else {
            throw ParseError("'" + context.string() + "': unknown mode '" + mode + "'");
        }
        entry.instance.target_indices = field<std::vector<int>>(record, "targets", context);
        const ordered_json prompts = field<ordered_json>(record, "prompts", context);
        if (!prompts.is_array()) {
            throw ParseError("'" + context.string() + "': 'prompts' must be an array");
        }
        for (const ordered_json& pair : prompts) {
            PromptPair prompt;
            prompt.source = field<std::string>(pair, "src", context);
            prompt.target = field<std::string>(pair, "tgt", context);
            entry.instance.prompts.push_back(std::move(prompt));
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

}  // namespace limecross
