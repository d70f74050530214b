#include "limecross/bench.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <thread>
#include <unordered_map>

#include <Eigen/Dense>

#include <nlohmann/json.hpp>

#include "limecross/util.hpp"

namespace limecross {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string mode_name(ProtocolMode mode) {
    return mode == ProtocolMode::single ? "single" : "multi";
}

// Enumerates all index subsets of size 2..K: size ascending, lexicographic
// within a size, members ascending (back-to-front).
void append_subsets(int layer_count, std::vector<std::vector<int>>& out) {
    for (int size = 2; size <= layer_count; ++size) {
        std::vector<int> pick(static_cast<std::size_t>(size));
        for (int i = 0; i < size; ++i) pick[static_cast<std::size_t>(i)] = i;
        while (true) {
            out.push_back(pick);
            int slot = size - 1;
            while (slot >= 0 && pick[static_cast<std::size_t>(slot)] == layer_count - size + slot) --slot;
            if (slot < 0) break;
            ++pick[static_cast<std::size_t>(slot)];
            for (int i = slot + 1; i < size; ++i) {
                pick[static_cast<std::size_t>(i)] = pick[static_cast<std::size_t>(i - 1)] + 1;
            }
        }
    }
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& features, const Eigen::RowVectorXd& mean) {
    Eigen::MatrixXd centered = features.rowwise() - mean;
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(features.rows() - 1);
    cov.diagonal().array() += kCovRegularizer;
    return cov;
}

Eigen::MatrixXd matrix_sqrt(const Eigen::MatrixXd& sym) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

ordered_json json_metric(const std::optional<double>& value) {
    if (!value.has_value()) return nullptr;
    if (std::isinf(*value)) return *value > 0 ? "inf" : "-inf";
    return *value;
}

std::string iso_timestamp() {
    const std::time_t now = std::time(nullptr);
    char buffer[32];
    std::tm utc{};
    gmtime_r(&now, &utc);
    std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &utc);
    return buffer;
}

struct InstanceMattes {
    std::vector<Plane> inputs;
    std::vector<Plane> outputs;
};

}  // namespace

std::vector<EditInstance> generate_protocol(const std::vector<SceneSummary>& scenes, ProtocolMode mode) {
    if (scenes.empty()) throw IndexError("generate_protocol: empty scene list");

    std::vector<EditInstance> instances;
    std::uint64_t next_id = 0;
    for (const SceneSummary& scene : scenes) {
        if (scene.layer_count < 1) {
            throw IndexError("generate_protocol: scene '" + scene.scene_id + "' has no layers");
        }
        if (static_cast<int>(scene.prompts.size()) != scene.layer_count) {
            throw DimensionError("generate_protocol: scene '" + scene.scene_id + "' has " +
                                 std::to_string(scene.prompts.size()) + " prompt pairs for " +
                                 std::to_string(scene.layer_count) + " layers");
        }
        std::vector<std::vector<int>> target_sets;
        if (mode == ProtocolMode::single) {
            for (int k = 0; k < scene.layer_count; ++k) target_sets.push_back({k});
        } else {
            append_subsets(scene.layer_count, target_sets);
        }
        for (std::vector<int>& targets : target_sets) {
            EditInstance instance;
            instance.instance_id = next_id++;
            instance.scene_id = scene.scene_id;
            instance.mode = mode;
            for (int k : targets) instance.prompts.push_back(scene.prompts[static_cast<std::size_t>(k)]);
            instance.target_indices = std::move(targets);
            instances.push_back(std::move(instance));
        }
    }
    return instances;
}

RegionMasks region_masks(const LayeredScene& scene, const std::vector<int>& edited_set) {
    const int layer_count = static_cast<int>(scene.layers.size());
    for (int k : edited_set) {
        if (k < 0 || k >= layer_count) {
            throw IndexError("region_masks: layer index " + std::to_string(k) + " out of range");
        }
    }
    const Eigen::Index h = scene.height;
    const Eigen::Index w = scene.width;

    std::vector<Mask> visible(static_cast<std::size_t>(layer_count));
    Mask covered = Mask::Constant(h, w, false);
    for (int k = layer_count - 1; k >= 0; --k) {
        Mask hard = scene.layers[static_cast<std::size_t>(k)].alpha > kMaskThreshold;
        visible[static_cast<std::size_t>(k)] = hard && !covered;
        covered = covered || hard;
    }

    RegionMasks masks;
    masks.edited = Mask::Constant(h, w, false);
    for (int k : edited_set) masks.edited = masks.edited || visible[static_cast<std::size_t>(k)];
    masks.preserved = !masks.edited;
    return masks;
}

MseResult masked_mse(const OpaqueImage& a, const OpaqueImage& b, const Mask& mask) {
    if (a.height() != b.height() || a.width() != b.width() || a.height() != mask.rows() ||
        a.width() != mask.cols()) {
        throw DimensionError("masked_mse: image and mask dimensions disagree");
    }
    const auto count = static_cast<double>(mask.count());
    if (count == 0.0) return {0.0, true};

    double total = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        // Colors live in [-1,1]; the metric contract is on the [0,1] scale.
        Plane diff = (a.color[static_cast<std::size_t>(ch)] - b.color[static_cast<std::size_t>(ch)]) * 0.5;
        total += mask.select(diff.square(), Plane::Zero(mask.rows(), mask.cols())).sum();
    }
    return {total / (count * 3.0), false};
}

double masked_psnr(const OpaqueImage& a, const OpaqueImage& b, const Mask& mask) {
    MseResult mse = masked_mse(a, b, mask);
    if (mse.empty_mask) throw MetricError("masked_psnr: mask selects no pixels");
    if (mse.value == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse.value);
}

OpaqueImage composite_on_gray(const RgbaLayer& layer) {
    OpaqueImage out;
    for (int ch = 0; ch < 3; ++ch) {
        out.color[static_cast<std::size_t>(ch)] = layer.color[static_cast<std::size_t>(ch)] * layer.alpha;
    }
    return out;
}

OpaqueImage composite_on_gray(const LayeredScene& scene) { return composite_scene(scene, kMidGray); }

Eigen::VectorXd alpha_features(const Plane& alpha) {
    const Eigen::Index h = alpha.rows();
    const Eigen::Index w = alpha.cols();
    if (h == 0 || w == 0) throw MetricError("alpha_features: empty mask");

    Eigen::VectorXd f(kAlphaFeatureDim);
    const double mean = alpha.mean();
    f(0) = mean;
    f(1) = (alpha - mean).square().mean();
    f(2) = (alpha > kMaskThreshold).cast<double>().mean();

    if (h > 1 && w > 1) {
        Plane gx = alpha.block(0, 1, h - 1, w - 1) - alpha.block(0, 0, h - 1, w - 1);
        Plane gy = alpha.block(1, 0, h - 1, w - 1) - alpha.block(0, 0, h - 1, w - 1);
        f(3) = (gx.square() + gy.square()).sqrt().mean();
    } else {
        f(3) = 0.0;
    }

    const Eigen::Index half_h = (h + 1) / 2;
    const Eigen::Index half_w = (w + 1) / 2;
    const auto block_mean = [&](Eigen::Index r0, Eigen::Index c0, Eigen::Index rows, Eigen::Index cols) {
        if (rows == 0 || cols == 0) return 0.0;
        return alpha.block(r0, c0, rows, cols).mean();
    };
    f(4) = block_mean(0, 0, half_h, half_w);
    f(5) = block_mean(0, half_w, half_h, w - half_w);
    f(6) = block_mean(half_h, 0, h - half_h, half_w);
    f(7) = block_mean(half_h, half_w, h - half_h, w - half_w);
    return f;
}

double frechet_distance(const Eigen::MatrixXd& features_a, const Eigen::MatrixXd& features_b) {
    if (features_a.cols() != features_b.cols()) {
        throw DimensionError("frechet_distance: feature dimensions differ");
    }
    const Eigen::Index dim = features_a.cols();
    if (features_a.rows() < dim + 1 || features_b.rows() < dim + 1) {
        throw MetricError("frechet_distance: each set needs at least " + std::to_string(dim + 1) +
                          " samples for a " + std::to_string(dim) + "-dim feature");
    }

    Eigen::RowVectorXd mean_a = features_a.colwise().mean();
    Eigen::RowVectorXd mean_b = features_b.colwise().mean();
    Eigen::MatrixXd cov_a = covariance(features_a, mean_a);
    Eigen::MatrixXd cov_b = covariance(features_b, mean_b);

    Eigen::MatrixXd sqrt_a = matrix_sqrt(cov_a);
    Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(inner);
    const double sqrt_trace = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double dist = (mean_a - mean_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * sqrt_trace;
    return std::max(dist, 0.0);
}

double alpha_frechet(const std::vector<Plane>& masks_a, const std::vector<Plane>& masks_b) {
    const auto stack = [](const std::vector<Plane>& masks) {
        Eigen::MatrixXd features(static_cast<Eigen::Index>(masks.size()), kAlphaFeatureDim);
        for (std::size_t i = 0; i < masks.size(); ++i) {
            features.row(static_cast<Eigen::Index>(i)) = alpha_features(masks[i]).transpose();
        }
        return features;
    };
    return frechet_distance(stack(masks_a), stack(masks_b));
}

BenchReport run_benchmark(const std::vector<NamedScene>& scenes,
                          const std::vector<EditInstance>& instances, const BenchConfig& config) {
    config.edit.validate();
    if (config.jobs < 1) throw ModelError("run_benchmark: jobs must be >= 1");

    std::unordered_map<std::string, const LayeredScene*> by_id;
    for (const NamedScene& named : scenes) by_id[named.id] = &named.scene;

    const auto t_run0 = std::chrono::steady_clock::now();
    const std::uint64_t run_seed = config.edit.seed;
    const std::uint64_t instance_base = derive_seed(run_seed, "instance");

    std::vector<InstanceResult> rows(instances.size());
    std::vector<InstanceMattes> mattes(instances.size());

    std::atomic<std::size_t> cursor{0};
    const auto worker = [&]() {
        while (true) {
            const std::size_t slot = cursor.fetch_add(1);
            if (slot >= instances.size()) return;
            const EditInstance& instance = instances[slot];
            InstanceResult& row = rows[slot];
            row.instance_id = instance.instance_id;
            row.scene_id = instance.scene_id;
            row.mode = instance.mode;
            row.targets = instance.target_indices;

            const auto t0 = std::chrono::steady_clock::now();
            try {
                const auto found = by_id.find(instance.scene_id);
                if (found == by_id.end()) {
                    throw IndexError("unknown scene id '" + instance.scene_id + "'");
                }
                const LayeredScene& scene = *found->second;

                EditConfig edit_config = config.edit;
                edit_config.seed = derive_seed(instance_base, instance.instance_id);

                LayeredScene edited = edit_multi(scene, instance.target_indices, instance.prompts,
                                                 edit_config);

                RegionMasks masks = region_masks(scene, instance.target_indices);
                OpaqueImage before = composite_on_gray(scene);
                OpaqueImage after = composite_on_gray(edited);

                MseResult mse_preserved = masked_mse(before, after, masks.preserved);
                row.mse_preserved = mse_preserved.value;
                row.preserved_mask_empty = mse_preserved.empty_mask;
                if (!mse_preserved.empty_mask) {
                    row.psnr_preserved = masked_psnr(before, after, masks.preserved);
                }
                MseResult mse_edited = masked_mse(before, after, masks.edited);
                row.mse_edited = mse_edited.value;
                row.edited_mask_empty = mse_edited.empty_mask;

                for (int k : instance.target_indices) {
                    mattes[slot].inputs.push_back(scene.layers[static_cast<std::size_t>(k)].alpha);
                    mattes[slot].outputs.push_back(edited.layers[static_cast<std::size_t>(k)].alpha);
                }
                row.status = "ok";
            } catch (const std::exception& e) {
                row.status = std::string("error: ") + e.what();
            }
            if (config.timings) {
                row.wall_ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
            }
        }
    };

    if (config.jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(config.jobs));
        for (int j = 0; j < config.jobs; ++j) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    BenchReport report;
    report.config = config;
    report.rows = std::move(rows);
    std::sort(report.rows.begin(), report.rows.end(),
              [](const InstanceResult& a, const InstanceResult& b) { return a.instance_id < b.instance_id; });

    // Pool mattes in instance-id order so the run-level metric is
    // independent of worker scheduling.
    std::vector<std::size_t> slot_order(instances.size());
    for (std::size_t i = 0; i < slot_order.size(); ++i) slot_order[i] = i;
    std::sort(slot_order.begin(), slot_order.end(), [&](std::size_t a, std::size_t b) {
        return instances[a].instance_id < instances[b].instance_id;
    });
    std::vector<Plane> pooled_in;
    std::vector<Plane> pooled_out;
    for (std::size_t slot : slot_order) {
        pooled_in.insert(pooled_in.end(), mattes[slot].inputs.begin(), mattes[slot].inputs.end());
        pooled_out.insert(pooled_out.end(), mattes[slot].outputs.begin(), mattes[slot].outputs.end());
    }

    for (const InstanceResult& row : report.rows) {
        if (row.status == "ok") {
            ++report.ok_count;
        } else {
            ++report.error_count;
        }
    }

    const auto min_set = static_cast<std::size_t>(kAlphaFeatureDim + 1);
    if (pooled_in.size() >= min_set && pooled_out.size() >= min_set) {
        report.alpha_frechet = alpha_frechet(pooled_in, pooled_out);
    } else {
        report.alpha_frechet_note = "needs at least " + std::to_string(kAlphaFeatureDim + 1) +
                                    " edited masks per set, run produced " +
                                    std::to_string(pooled_out.size());
    }

    if (config.timings) {
        report.total_wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_run0).count();
        report.timestamp = iso_timestamp();
    }
    return report;
}

std::string to_ndjson(const BenchReport& report) {
    std::string out;

    ordered_json header;
    header["record"] = "header";
    header["tool"] = "limecross";
    header["report_version"] = 1;
    ordered_json cfg;
    cfg["steps"] = report.config.edit.steps;
    cfg["switch_ratio"] = report.config.edit.switch_ratio;
    cfg["cfg_src"] = report.config.edit.cfg_src;
    cfg["cfg_tgt"] = report.config.edit.cfg_tgt;
    cfg["seed"] = report.config.edit.seed;
    cfg["schedule"] = "linear";
    cfg["model"] = report.config.edit.model == ModelKind::toy ? "toy" : "analytic";
    cfg["context_noise"] = report.config.edit.context_noise == ContextNoise::fresh ? "fresh" : "fixed";
    cfg["codec_downsample"] = report.config.edit.codec_downsample;
    cfg["prompt_tokens"] = report.config.edit.prompt_tokens;
    header["config"] = cfg;
    header["jobs"] = report.config.jobs;
    header["timings"] = report.config.timings;
    ordered_json metric_params;
    metric_params["binarize_threshold"] = kMaskThreshold;
    metric_params["cov_regularizer"] = kCovRegularizer;
    metric_params["feature_dim"] = kAlphaFeatureDim;
    header["metric_params"] = metric_params;
    header["instances"] = report.rows.size();
    if (report.config.timings) {
        header["timestamp"] = report.timestamp;
        header["total_wall_ms"] = json_metric(report.total_wall_ms);
    }
    out += header.dump();
    out += '\n';

    for (const InstanceResult& row : report.rows) {
        ordered_json record;
        record["record"] = "instance";
        record["instance_id"] = row.instance_id;
        record["scene_id"] = row.scene_id;
        record["mode"] = mode_name(row.mode);
        record["targets"] = row.targets;
        record["mse_preserved"] = json_metric(row.mse_preserved);
        record["psnr_preserved"] = json_metric(row.psnr_preserved);
        record["mse_edited"] = json_metric(row.mse_edited);
        record["preserved_mask_empty"] = row.preserved_mask_empty;
        record["edited_mask_empty"] = row.edited_mask_empty;
        // Reserved for externally computed metrics; always null here.
        record["hpsv2"] = nullptr;
        record["aesthetic"] = nullptr;
        record["clip_score"] = nullptr;
        record["image_reward"] = nullptr;
        record["lpips"] = nullptr;
        record["wall_ms"] = json_metric(row.wall_ms);
        record["status"] = row.status;
        out += record.dump();
        out += '\n';
    }

    ordered_json summary;
    summary["record"] = "summary";
    summary["ok"] = report.ok_count;
    summary["errors"] = report.error_count;
    summary["alpha_frechet"] = json_metric(report.alpha_frechet);
    summary["alpha_frechet_note"] = report.alpha_frechet_note;
    out += summary.dump();
    out += '\n';
    return out;
}

void write_report(const BenchReport& report, const std::string& path) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open report file '" + path + "' for writing");
    const std::string payload = to_ndjson(report);
    file.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!file) throw IoError("failed writing report file '" + path + "'");
}

}  // namespace limecross
