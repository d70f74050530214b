#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "limecross/engine.hpp"
#include "limecross/layers.hpp"

namespace limecross {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Alpha binarization threshold used for region masks; recorded in report
// headers.
inline constexpr double kMaskThreshold = 0.5;
inline constexpr int kAlphaFeatureDim = 8;
inline constexpr double kCovRegularizer = 1e-6;

struct NamedScene {
    std::string id;
    LayeredScene scene;
};

enum class ProtocolMode { single, multi };

// What protocol generation needs to know about a scene; pixel data stays
// out so thousands of scenes stay cheap.
struct SceneSummary {
    std::string scene_id;
    int layer_count = 0;
    std::vector<PromptPair> prompts;
};

struct EditInstance {
    std::uint64_t instance_id = 0;
    std::string scene_id;
    ProtocolMode mode = ProtocolMode::single;
    std::vector<int> target_indices;
    std::vector<PromptPair> prompts;
};

// single: one instance per layer. multi: one instance per layer subset of
// size 2..K, subsets enumerated in deterministic order (size ascending,
// then lexicographic), targets listed back-to-front. Instance ids are
// sequential over the emitted list.
std::vector<EditInstance> generate_protocol(const std::vector<SceneSummary>& scenes, ProtocolMode mode);

struct RegionMasks {
    Mask edited;
    Mask preserved;
};

// edited = union of the edited layers' visible regions, where a layer's
// region is its binarized alpha minus pixels covered by any binarized layer
// in front of it; preserved = complement.
RegionMasks region_masks(const LayeredScene& scene, const std::vector<int>& edited_set);

struct MseResult {
    double value = 0.0;
    bool empty_mask = false;
};

// Mean squared error over masked pixels, computed on [0,1]-mapped colors.
// An empty mask yields value 0 with the flag set.
MseResult masked_mse(const OpaqueImage& a, const OpaqueImage& b, const Mask& mask);

// 10*log10(1/MSE) over the mask; identical inputs give +infinity. Throws
// MetricError on an empty mask.
double masked_psnr(const OpaqueImage& a, const OpaqueImage& b, const Mask& mask);

OpaqueImage composite_on_gray(const RgbaLayer& layer);
OpaqueImage composite_on_gray(const LayeredScene& scene);

// 8-dim descriptor of an alpha matte in [0,1]: mean, variance, binarized
// coverage, mean gradient magnitude, and the four 2x2-quadrant means.
Eigen::VectorXd alpha_features(const Plane& alpha);

// Frechet distance between Gaussians fitted to two feature sets (rows are
// samples): |mu1-mu2|^2 + Tr(S1 + S2 - 2*(S1*S2)^(1/2)), with covariance
// regularizer 1e-6*I and the result clamped to >= 0. Each set needs at
// least D+1 samples.
double frechet_distance(const Eigen::MatrixXd& features_a, const Eigen::MatrixXd& features_b);

// frechet_distance over alpha_features of two mask sets.
double alpha_frechet(const std::vector<Plane>& masks_a, const std::vector<Plane>& masks_b);

struct BenchConfig {
    EditConfig edit;
    int jobs = 1;
    // Per-instance wall_ms plus a header timestamp and total time. Off by
    // default so reports are byte-identical across reruns.
    bool timings = false;
};

struct InstanceResult {
    std::uint64_t instance_id = 0;
    std::string scene_id;
    ProtocolMode mode = ProtocolMode::single;
    std::vector<int> targets;
    std::optional<double> mse_preserved;
    std::optional<double> psnr_preserved;  // +inf allowed
    std::optional<double> mse_edited;
    bool preserved_mask_empty = false;
    bool edited_mask_empty = false;
    std::optional<double> wall_ms;
    std::string status = "ok";
};

struct BenchReport {
    BenchConfig config;
    std::vector<InstanceResult> rows;  // sorted by instance_id
    std::optional<double> alpha_frechet;
    std::string alpha_frechet_note;
    int ok_count = 0;
    int error_count = 0;
    std::optional<double> total_wall_ms;
    std::string timestamp;
};

// Runs every instance through the engine (config.jobs workers), computes
// preservation/edited-region metrics against the input scene, and pools
// input-vs-output alpha mattes of the edited layers into one run-level
// alpha_frechet. Per-instance failures are recorded in the row status and
// the run continues. Output is a pure function of (scenes, instances,
// config) when timings are off.
BenchReport run_benchmark(const std::vector<NamedScene>& scenes,
                          const std::vector<EditInstance>& instances, const BenchConfig& config);

// Newline-delimited JSON: one header record, one record per instance
// (sorted by instance_id), one summary record.
std::string to_ndjson(const BenchReport& report);
void write_report(const BenchReport& report, const std::string& path);

}  // namespace limecross
