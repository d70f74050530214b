#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "limecross/codec.hpp"
#include "limecross/errors.hpp"
#include "limecross/layers.hpp"
#include "limecross/model.hpp"
#include "limecross/util.hpp"

namespace limecross {

enum class ModelKind { toy, analytic };
enum class NoiseSchedule { linear };
// Whether the context stream is re-noised with a fresh draw every step or
// with one draw fixed for the whole trajectory.
enum class ContextNoise { fresh, fixed };

struct EditConfig {
    int steps = 28;
    double switch_ratio = 0.5;
    double cfg_src = 1.5;
    double cfg_tgt = 5.5;
    std::uint64_t seed = 0;
    NoiseSchedule schedule = NoiseSchedule::linear;
    ModelKind model = ModelKind::toy;
    ContextNoise context_noise = ContextNoise::fresh;
    int codec_downsample = 8;
    int prompt_tokens = 8;

    // Number of leading bi-stream steps; the remaining steps run target-only.
    int switch_step() const { return static_cast<int>(std::floor(switch_ratio * steps)); }
    void validate() const;
};

// Linear schedule tau_i = 1 - i/T: T+1 values, strictly decreasing from 1
// to exactly 0.
std::vector<double> make_schedule(int steps);

// Linear forward noising: (1 - tau) * z + tau * eps.
Eigen::MatrixXd noise(const Eigen::MatrixXd& z, double tau, const Eigen::MatrixXd& eps);

struct TrajectoryStats {
    int bi_stream_steps = 0;
    int target_only_steps = 0;
};

// One delta-velocity integration over a packed target/context token pair.
// Per step i (tau = tau_i): draw fresh noise, re-noise the clean source and
// context latents, lift the editable state onto the noised source
// (z_t = z_s + (z_e - z_src)), evaluate guided velocities under the source
// and target prompts (bi-stream while i < switch_step, target-only after),
// and step z_e by (tau_{i+1} - tau_i) * (v_tgt - v_src). The context buffer
// is never written.
class EditTrajectory {
public:
    EditTrajectory(Eigen::MatrixXd z_src, Eigen::MatrixXd z_ctx, PromptEmbedding prompt_src,
                   PromptEmbedding prompt_tgt, const VelocityModel& model, const EditConfig& config,
                   std::uint64_t noise_seed, int grid_h, int grid_w);

    bool done() const { return step_index_ >= config_.steps; }
    void step();
    const Eigen::MatrixXd& run();

    int step_index() const { return step_index_; }
    double tau() const { return schedule_[static_cast<std::size_t>(step_index_)]; }
    const Eigen::MatrixXd& z_e() const { return z_e_; }
    const Eigen::MatrixXd& z_ctx() const { return z_ctx_; }
    const TrajectoryStats& stats() const { return stats_; }

private:
    Eigen::MatrixXd z_src_;
    Eigen::MatrixXd z_ctx_;
    PromptEmbedding prompt_src_;
    PromptEmbedding prompt_tgt_;
    const VelocityModel& model_;
    EditConfig config_;
    std::vector<double> schedule_;
    GaussianSource noise_source_;
    Eigen::MatrixXd eps_ctx_fixed_;
    Eigen::MatrixXd z_e_;
    int grid_h_;
    int grid_w_;
    int step_index_ = 0;
    TrajectoryStats stats_;
};

// Deterministic factories shared by every entry point (library, benchmark
// harness, CLI), so identical configs always build identical components.
Codec make_codec(const EditConfig& config);
std::unique_ptr<VelocityModel> make_model(const EditConfig& config, int token_dim);

// Edits one layer: build the opaque context from the scene, encode and pack
// both, run the trajectory, then unpack and decode. The scene itself is
// untouched; only the edited layer is returned.
RgbaLayer edit_layer(const LayeredScene& scene, int target_index, const PromptPair& prompts,
                     const EditConfig& config, const Codec& codec, const VelocityModel& model,
                     TrajectoryStats* stats = nullptr);
RgbaLayer edit_layer(const LayeredScene& scene, int target_index, const PromptPair& prompts,
                     const EditConfig& config, TrajectoryStats* stats = nullptr);

// Edits several layers sequentially back-to-front (ascending index); each
// edit sees the context built from the current scene, already-edited layers
// included. Non-target layers come through bit-identical.
LayeredScene edit_multi(const LayeredScene& scene, const std::vector<int>& target_indices,
                        const std::vector<PromptPair>& prompt_pairs, const EditConfig& config,
                        const Codec& codec, const VelocityModel& model);
LayeredScene edit_multi(const LayeredScene& scene, const std::vector<int>& target_indices,
                        const std::vector<PromptPair>& prompt_pairs, const EditConfig& config);

}  // namespace limecross
