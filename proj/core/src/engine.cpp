#include "limecross/engine.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <utility>

namespace limecross {

void EditConfig::validate() const {
    if (steps < 1) throw ModelError("edit config: steps must be >= 1");
    if (!(switch_ratio >= 0.0 && switch_ratio <= 1.0)) {
        throw ModelError("edit config: switch ratio " + std::to_string(switch_ratio) + " outside [0,1]");
    }
    if (cfg_src < 0.0 || cfg_tgt < 0.0) throw ModelError("edit config: guidance scales must be >= 0");
    if (codec_downsample < 1) throw ModelError("edit config: codec downsample must be >= 1");
    if (prompt_tokens < 1) throw ModelError("edit config: prompt_tokens must be >= 1");
}

std::vector<double> make_schedule(int steps) {
    if (steps < 1) throw ModelError("schedule: steps must be >= 1");
    std::vector<double> tau(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) {
        tau[static_cast<std::size_t>(i)] = 1.0 - static_cast<double>(i) / steps;
    }
    return tau;
}

Eigen::MatrixXd noise(const Eigen::MatrixXd& z, double tau, const Eigen::MatrixXd& eps) {
    if (z.rows() != eps.rows() || z.cols() != eps.cols()) {
        throw DimensionError("noise: z is " + std::to_string(z.rows()) + "x" + std::to_string(z.cols()) +
                             ", eps is " + std::to_string(eps.rows()) + "x" + std::to_string(eps.cols()));
    }
    if (!(tau >= 0.0 && tau <= 1.0)) throw ModelError("noise: tau outside [0,1]");
    return (1.0 - tau) * z + tau * eps;
}

EditTrajectory::EditTrajectory(Eigen::MatrixXd z_src, Eigen::MatrixXd z_ctx, PromptEmbedding prompt_src,
                               PromptEmbedding prompt_tgt, const VelocityModel& model,
                               const EditConfig& config, std::uint64_t noise_seed, int grid_h,
                               int grid_w)
    : z_src_(std::move(z_src)),
      z_ctx_(std::move(z_ctx)),
      prompt_src_(std::move(prompt_src)),
      prompt_tgt_(std::move(prompt_tgt)),
      model_(model),
      config_(config),
      schedule_(make_schedule(config.steps)),
      noise_source_(noise_seed),
      grid_h_(grid_h),
      grid_w_(grid_w) {
    config_.validate();
    if (z_src_.rows() != z_ctx_.rows() || z_src_.cols() != z_ctx_.cols()) {
        throw DimensionError("trajectory: source and context token shapes differ");
    }
    if (z_src_.cols() != model_.token_dim()) {
        throw ModelError("trajectory: token width " + std::to_string(z_src_.cols()) +
                         " does not match model dim " + std::to_string(model_.token_dim()));
    }
    if (static_cast<Eigen::Index>(grid_h_) * grid_w_ != z_src_.rows()) {
        throw DimensionError("trajectory: grid does not cover the token count");
    }
    if (config_.context_noise == ContextNoise::fixed) {
        eps_ctx_fixed_ = noise_source_.matrix(z_src_.rows(), z_src_.cols());
    }
    z_e_ = z_src_;
}

void EditTrajectory::step() {
    if (done()) throw ModelError("trajectory: all steps already taken");
    const int i = step_index_;
    const double tau_i = schedule_[static_cast<std::size_t>(i)];
    const double d_tau = schedule_[static_cast<std::size_t>(i) + 1] - tau_i;
    const Eigen::Index n = z_src_.rows();
    const Eigen::Index d = z_src_.cols();

    // Noise draw order per step: target first, then context. Both streams
    // are drawn even in the target-only phase so the target noise sequence
    // does not depend on the switching ratio.
    Eigen::MatrixXd eps_tgt = noise_source_.matrix(n, d);
    Eigen::MatrixXd eps_ctx;
    if (config_.context_noise == ContextNoise::fresh) {
        eps_ctx = noise_source_.matrix(n, d);
    } else {
        eps_ctx = eps_ctx_fixed_;
    }

    Eigen::MatrixXd z_s = noise(z_src_, tau_i, eps_tgt);
    // Written so that z_e == z_src gives z_t == z_s bitwise, which makes
    // identity edits cancel exactly.
    Eigen::MatrixXd z_t = z_s + (z_e_ - z_src_);

    const bool bi = i < config_.switch_step();
    std::optional<Eigen::MatrixXd> noised_ctx;
    if (bi) noised_ctx = noise(z_ctx_, tau_i, eps_ctx);

    VelocityRequest req_src;
    req_src.target_tokens = std::move(z_s);
    req_src.context_tokens = noised_ctx;
    req_src.prompt = prompt_src_;
    req_src.tau = tau_i;
    req_src.mode = bi ? ForwardMode::bi_stream : ForwardMode::target_only;
    req_src.grid_h = grid_h_;
    req_src.grid_w = grid_w_;

    VelocityRequest req_tgt = req_src;
    req_tgt.target_tokens = std::move(z_t);
    req_tgt.prompt = prompt_tgt_;

    Eigen::MatrixXd v_src;
    Eigen::MatrixXd v_tgt;
    try {
        v_src = cfg_velocity(model_, req_src, config_.cfg_src).topRows(n);
        v_tgt = cfg_velocity(model_, req_tgt, config_.cfg_tgt).topRows(n);
    } catch (const Error& e) {
        throw ModelError("edit step " + std::to_string(i) + ": " + e.what());
    }

    z_e_ += d_tau * (v_tgt - v_src);
    if (bi) {
        ++stats_.bi_stream_steps;
    } else {
        ++stats_.target_only_steps;
    }
    ++step_index_;
}

const Eigen::MatrixXd& EditTrajectory::run() {
    while (!done()) step();
    return z_e_;
}

Codec make_codec(const EditConfig& config) {
    return Codec(config.codec_downsample, derive_seed(config.seed, "codec"));
}

std::unique_ptr<VelocityModel> make_model(const EditConfig& config, int token_dim) {
    const std::uint64_t model_seed = derive_seed(config.seed, "model");
    if (config.model == ModelKind::analytic) {
        return std::make_unique<AnalyticVelocityModel>(token_dim, model_seed);
    }
    ToyTransformerConfig tc;
    tc.token_dim = token_dim;
    tc.prompt_tokens = config.prompt_tokens;
    return std::make_unique<ToyTransformer>(tc, model_seed);
}

RgbaLayer edit_layer(const LayeredScene& scene, int target_index, const PromptPair& prompts,
                     const EditConfig& config, const Codec& codec, const VelocityModel& model,
                     TrajectoryStats* stats) {
    config.validate();
    if (target_index < 0 || target_index >= static_cast<int>(scene.layers.size())) {
        throw IndexError("edit_layer: target index " + std::to_string(target_index) +
                         " out of range for " + std::to_string(scene.layers.size()) + " layers");
    }
    if (model.token_dim() != codec.channels()) {
        throw ModelError("edit_layer: model dim " + std::to_string(model.token_dim()) +
                         " does not match codec channels " + std::to_string(codec.channels()));
    }

    const RgbaLayer& source_layer = scene.layers[static_cast<std::size_t>(target_index)];
    OpaqueImage context = opaque_context(scene, target_index);

    LatentGrid x_src = codec.encode(source_layer);
    LatentGrid x_ctx = codec.encode(context);
    const int grid_h = x_src.grid_h;
    const int grid_w = x_src.grid_w;
    TokenStream z_src = pack(x_src, StreamId::target);
    TokenStream z_ctx = pack(x_ctx, StreamId::context);

    const std::uint64_t prompt_seed = derive_seed(config.seed, "prompt");
    const int d = codec.channels();
    PromptEmbedding p_src = embed_prompt(prompts.source, prompt_seed, config.prompt_tokens, d);
    PromptEmbedding p_tgt = embed_prompt(prompts.target, prompt_seed, config.prompt_tokens, d);

    const std::uint64_t noise_seed =
        derive_seed(derive_seed(config.seed, "noise"), static_cast<std::uint64_t>(target_index));

    EditTrajectory trajectory(std::move(z_src.tokens), std::move(z_ctx.tokens), std::move(p_src),
                              std::move(p_tgt), model, config, noise_seed, grid_h, grid_w);
    const Eigen::MatrixXd& z_final = trajectory.run();
    if (stats) *stats = trajectory.stats();

    TokenStream out_stream;
    out_stream.tokens = z_final;
    out_stream.stream_id = StreamId::target;
    out_stream.grid_h = grid_h;
    out_stream.grid_w = grid_w;
    RgbaLayer edited = codec.decode(unpack(out_stream));
    edited.name = source_layer.name;
    return edited;
}

RgbaLayer edit_layer(const LayeredScene& scene, int target_index, const PromptPair& prompts,
                     const EditConfig& config, TrajectoryStats* stats) {
    Codec codec = make_codec(config);
    std::unique_ptr<VelocityModel> model = make_model(config, codec.channels());
    return edit_layer(scene, target_index, prompts, config, codec, *model, stats);
}

LayeredScene edit_multi(const LayeredScene& scene, const std::vector<int>& target_indices,
                        const std::vector<PromptPair>& prompt_pairs, const EditConfig& config,
                        const Codec& codec, const VelocityModel& model) {
    if (target_indices.size() != prompt_pairs.size()) {
        throw DimensionError("edit_multi: " + std::to_string(target_indices.size()) + " targets but " +
                             std::to_string(prompt_pairs.size()) + " prompt pairs");
    }
    std::vector<std::size_t> order(target_indices.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return target_indices[a] < target_indices[b]; });
    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        if (target_indices[order[k]] == target_indices[order[k + 1]]) {
            throw IndexError("edit_multi: duplicate target index " +
                             std::to_string(target_indices[order[k]]));
        }
    }

    LayeredScene working = scene;
    for (std::size_t k : order) {
        const int index = target_indices[k];
        RgbaLayer edited = edit_layer(working, index, prompt_pairs[k], config, codec, model);
        working = replace_layer(working, index, std::move(edited));
    }
    return working;
}

LayeredScene edit_multi(const LayeredScene& scene, const std::vector<int>& target_indices,
                        const std::vector<PromptPair>& prompt_pairs, const EditConfig& config) {
    Codec codec = make_codec(config);
    std::unique_ptr<VelocityModel> model = make_model(config, codec.channels());
    return edit_multi(scene, target_indices, prompt_pairs, config, codec, *model);
}

}  // namespace limecross
