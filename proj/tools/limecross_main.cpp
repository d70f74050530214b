#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "limecross/bench.hpp"
#include "limecross/engine.hpp"
#include "limecross/scene_io.hpp"

namespace {

namespace fs = std::filesystem;
using namespace limecross;

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitIo = 4;

// Editing flags shared by edit, edit-multi, and bench run.
struct EditFlags {
    int steps = 28;
    double rho = 0.5;
    double cfg_src = 1.5;
    double cfg_tgt = 5.5;
    std::uint64_t seed = 0;
    std::string model = "toy";
    std::string context_noise = "fresh";
    int downsample = 8;

    EditConfig to_config() const {
        EditConfig config;
        config.steps = steps;
        config.switch_ratio = rho;
        config.cfg_src = cfg_src;
        config.cfg_tgt = cfg_tgt;
        config.seed = seed;
        config.model = model == "analytic" ? ModelKind::analytic : ModelKind::toy;
        config.context_noise =
            context_noise == "fixed" ? ContextNoise::fixed : ContextNoise::fresh;
        config.codec_downsample = downsample;
        return config;
    }
};

void add_edit_flags(CLI::App* cmd, EditFlags& flags) {
    cmd->add_option("--steps", flags.steps, "Integration steps T")->check(CLI::PositiveNumber);
    cmd->add_option("--rho", flags.rho, "Switching ratio: fraction of steps run bi-stream")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--cfg-src", flags.cfg_src, "Guidance scale for the source prompt")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--cfg-tgt", flags.cfg_tgt, "Guidance scale for the target prompt")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--seed", flags.seed, "Seed (falls back to LIMECROSS_SEED, then 0)");
    cmd->add_option("--model", flags.model, "Velocity model")
        ->check(CLI::IsMember({"toy", "analytic"}));
    cmd->add_option("--context-noise", flags.context_noise,
                    "Re-noise the context stream fresh each step or with one fixed draw")
        ->check(CLI::IsMember({"fresh", "fixed"}));
    cmd->add_option("--downsample", flags.downsample, "Codec space-to-depth factor")
        ->check(CLI::PositiveNumber);
}

bool apply_env_seed(EditFlags& flags, const CLI::App* cmd) {
    if (cmd->count("--seed") > 0) return true;
    const char* env = std::getenv("LIMECROSS_SEED");
    if (env == nullptr || *env == '\0') return true;
    char* end = nullptr;
    const unsigned long long value = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') {
        std::cerr << "error: LIMECROSS_SEED='" << env << "' is not an unsigned integer\n";
        return false;
    }
    flags.seed = value;
    return true;
}

void write_scene(const NamedScene& named, const fs::path& out_dir) {
    const fs::path manifest = save_scene(named, out_dir);
    std::cout << "wrote " << manifest.string() << "\n";
}

int run_edit(const std::string& scene_path, int layer, const EditFlags& flags,
             const std::string& out_dir) {
    NamedScene named = load_scene(scene_path);
    if (layer < 0 || layer >= static_cast<int>(named.scene.layers.size())) {
        throw IndexError("--layer " + std::to_string(layer) + " out of range; scene has " +
                         std::to_string(named.scene.layers.size()) + " layers");
    }
    const EditConfig config = flags.to_config();
    TrajectoryStats stats;
    RgbaLayer edited = edit_layer(named.scene, layer, named.scene.prompts[static_cast<std::size_t>(layer)],
                                  config, &stats);
    named.scene = replace_layer(named.scene, layer, std::move(edited));
    std::cerr << "edited layer " << layer << " (" << stats.bi_stream_steps << " bi-stream + "
              << stats.target_only_steps << " target-only steps)\n";
    write_scene(named, out_dir);
    return kExitOk;
}

int run_edit_multi(const std::string& scene_path, std::vector<int> layers, const EditFlags& flags,
                   const std::string& out_dir) {
    NamedScene named = load_scene(scene_path);
    std::vector<PromptPair> prompts;
    for (int k : layers) {
        if (k < 0 || k >= static_cast<int>(named.scene.layers.size())) {
            throw IndexError("--layers index " + std::to_string(k) + " out of range; scene has " +
                             std::to_string(named.scene.layers.size()) + " layers");
        }
        prompts.push_back(named.scene.prompts[static_cast<std::size_t>(k)]);
    }

    std::vector<int> order = layers;
    std::sort(order.begin(), order.end());
    std::cerr << "editing layers back-to-front:";
    for (int k : order) std::cerr << " " << k;
    std::cerr << "\n";

    named.scene = edit_multi(named.scene, layers, prompts, flags.to_config());
    write_scene(named, out_dir);
    return kExitOk;
}

int run_compose(const std::string& scene_path, const std::string& background,
                const std::string& out_file) {
    NamedScene named = load_scene(scene_path);
    OpaqueImage image = background == "backmost" ? composite_scene_over_backmost(named.scene)
                                                 : composite_scene(named.scene, kMidGray);
    save_image(image, out_file);
    std::cout << "wrote " << out_file << "\n";
    return kExitOk;
}

int run_bench_gen(const std::string& scenes_dir, const std::string& mode_name,
                  const std::string& out_file) {
    std::vector<fs::path> manifests;
    if (!fs::is_directory(scenes_dir)) {
        throw IoError("--scenes '" + scenes_dir + "' is not a directory");
    }
    for (const auto& entry : fs::recursive_directory_iterator(scenes_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") {
            manifests.push_back(entry.path());
        }
    }
    std::sort(manifests.begin(), manifests.end());
    if (manifests.empty()) {
        throw IoError("no scene manifests (*.json) under '" + scenes_dir + "'");
    }

    const fs::path out_base = fs::path(out_file).has_parent_path()
                                  ? fs::path(out_file).parent_path()
                                  : fs::path(".");
    std::vector<SceneSummary> summaries;
    std::vector<std::string> scene_files;
    std::set<std::string> seen_ids;
    for (const fs::path& manifest : manifests) {
        NamedScene named = load_scene(manifest);
        if (!seen_ids.insert(named.id).second) {
            throw ParseError("duplicate scene_id '" + named.id + "' at '" + manifest.string() + "'");
        }
        SceneSummary summary;
        summary.scene_id = named.id;
        summary.layer_count = static_cast<int>(named.scene.layers.size());
        summary.prompts = named.scene.prompts;
        summaries.push_back(std::move(summary));

        std::error_code ec;
        fs::path rel = fs::relative(manifest, out_base, ec);
        scene_files.push_back((ec || rel.empty()) ? fs::absolute(manifest).string() : rel.string());
    }

    const ProtocolMode mode = mode_name == "multi" ? ProtocolMode::multi : ProtocolMode::single;
    std::vector<EditInstance> instances = generate_protocol(summaries, mode);

    std::vector<InstanceFileEntry> entries;
    entries.reserve(instances.size());
    for (EditInstance& instance : instances) {
        InstanceFileEntry entry;
        for (std::size_t i = 0; i < summaries.size(); ++i) {
            if (summaries[i].scene_id == instance.scene_id) {
                entry.scene_file = scene_files[i];
                break;
            }
        }
        entry.instance = std::move(instance);
        entries.push_back(std::move(entry));
    }
    save_instances(entries, out_file);
    std::cout << "wrote " << entries.size() << " instances to " << out_file << "\n";
    return kExitOk;
}

int run_bench_run(const std::string& instances_file, const std::string& out_file,
                  const EditFlags& flags, int jobs, bool timings) {
    const std::vector<InstanceFileEntry> entries = load_instances(instances_file);
    if (entries.empty()) throw ParseError("'" + instances_file + "' holds no instances");

    const fs::path base = fs::path(instances_file).has_parent_path()
                              ? fs::path(instances_file).parent_path()
                              : fs::path(".");
    std::vector<NamedScene> scenes;
    std::set<std::string> loaded_files;
    for (const InstanceFileEntry& entry : entries) {
        if (!loaded_files.insert(entry.scene_file).second) continue;
        const fs::path manifest = fs::path(entry.scene_file).is_absolute()
                                      ? fs::path(entry.scene_file)
                                      : base / entry.scene_file;
        scenes.push_back(load_scene(manifest));
    }

    std::vector<EditInstance> instances;
    instances.reserve(entries.size());
    for (const InstanceFileEntry& entry : entries) instances.push_back(entry.instance);

    BenchConfig config;
    config.edit = flags.to_config();
    config.jobs = jobs;
    config.timings = timings;

    const BenchReport report = run_benchmark(scenes, instances, config);
    write_report(report, out_file);
    std::cerr << "ran " << report.rows.size() << " instances: " << report.ok_count << " ok, "
              << report.error_count << " failed\n";
    std::cout << "wrote " << out_file << "\n";
    return report.error_count == 0 ? kExitOk : kExitData;
}

int run_inspect(const std::string& scene_path) {
    const NamedScene named = load_scene(scene_path);
    std::cout << "scene_id: " << named.id << "\n";
    std::cout << "size: " << named.scene.width << "x" << named.scene.height << "\n";
    std::cout << "layers (back-to-front):\n";
    for (std::size_t k = 0; k < named.scene.layers.size(); ++k) {
        const RgbaLayer& layer = named.scene.layers[k];
        const double coverage = (layer.alpha > kMaskThreshold).cast<double>().mean();
        std::cout << "  [" << k << "] name='" << layer.name << "' mean_alpha=" << layer.alpha.mean()
                  << " coverage=" << coverage << "\n";
        std::cout << "      prompt_src: " << named.scene.prompts[k].source << "\n";
        std::cout << "      prompt_tgt: " << named.scene.prompts[k].target << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Context-conditioned layered RGBA image editing"};
    app.require_subcommand(1);

    EditFlags edit_flags;
    std::string scene_path;
    std::string out_path;
    int layer_index = 0;
    std::vector<int> layer_indices;
    std::string background = "gray";
    std::string mode = "single";
    std::string instances_file;
    int jobs = 1;
    bool timings = false;

    CLI::App* edit = app.add_subcommand("edit", "Edit one layer of a scene");
    edit->add_option("--scene", scene_path, "Scene manifest (JSON)")
        ->required();
    edit->add_option("--layer", layer_index, "Target layer index (0 = backmost)")->required();
    add_edit_flags(edit, edit_flags);
    edit->add_option("--out", out_path, "Output directory")->required();

    CLI::App* edit_multi_cmd = app.add_subcommand("edit-multi", "Edit several layers back-to-front");
    edit_multi_cmd->add_option("--scene", scene_path, "Scene manifest (JSON)")
        ->required();
    edit_multi_cmd->add_option("--layers", layer_indices, "Target layer indices, comma separated")
        ->required()
        ->delimiter(',');
    add_edit_flags(edit_multi_cmd, edit_flags);
    edit_multi_cmd->add_option("--out", out_path, "Output directory")->required();

    CLI::App* compose = app.add_subcommand("compose", "Composite a scene to an opaque image");
    compose->add_option("--scene", scene_path, "Scene manifest (JSON)")
        ->required();
    compose->add_option("--background", background, "Plate under the stack")
        ->check(CLI::IsMember({"gray", "backmost"}));
    compose->add_option("--out", out_path, "Output image file (PAM)")->required();

    CLI::App* bench = app.add_subcommand("bench", "Benchmark protocol generation and runs");
    bench->require_subcommand(1);
    CLI::App* bench_gen = bench->add_subcommand("gen", "Generate edit instances from a scene set");
    bench_gen->add_option("--scenes", scene_path, "Directory holding scene manifests")->required();
    bench_gen->add_option("--mode", mode, "Instance mode")->check(CLI::IsMember({"single", "multi"}));
    bench_gen->add_option("--out", out_path, "Instances file (NDJSON)")->required();

    CLI::App* bench_run = bench->add_subcommand("run", "Run instances and write a metrics report");
    bench_run->add_option("--instances", instances_file, "Instances file from 'bench gen'")
        ->required();
    add_edit_flags(bench_run, edit_flags);
    bench_run->add_option("--jobs", jobs, "Parallel worker count")->check(CLI::PositiveNumber);
    bench_run->add_flag("--timings", timings,
                        "Record wall-clock times (makes reports differ across reruns)");
    bench_run->add_option("--out", out_path, "Report file (NDJSON)")->required();

    CLI::App* inspect = app.add_subcommand("inspect", "Print scene structure and prompts");
    inspect->add_option("--scene", scene_path, "Scene manifest (JSON)")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (edit->parsed() || edit_multi_cmd->parsed()) {
            CLI::App* cmd = edit->parsed() ? edit : edit_multi_cmd;
            if (!apply_env_seed(edit_flags, cmd)) return kExitUsage;
        }
        if (bench_run->parsed() && !apply_env_seed(edit_flags, bench_run)) return kExitUsage;

        if (edit->parsed()) return run_edit(scene_path, layer_index, edit_flags, out_path);
        if (edit_multi_cmd->parsed()) {
            return run_edit_multi(scene_path, layer_indices, edit_flags, out_path);
        }
        if (compose->parsed()) return run_compose(scene_path, background, out_path);
        if (bench_gen->parsed()) return run_bench_gen(scene_path, mode, out_path);
        if (bench_run->parsed()) {
            return run_bench_run(instances_file, out_path, edit_flags, jobs, timings);
        }
        if (inspect->parsed()) return run_inspect(scene_path);
        std::cerr << "error: no subcommand\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
            case ErrorKind::io:
                return kExitIo;
            case ErrorKind::parse:
            case ErrorKind::dimension:
            case ErrorKind::index:
            case ErrorKind::model:
            case ErrorKind::metric:
                return kExitData;
        }
        return kExitInternal;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}
