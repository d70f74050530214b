#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "limecross/errors.hpp"

namespace limecross {

// Deterministic stand-in for a text encoder: M unit-norm token rows drawn
// from a generator seeded by hash(text, seed). The empty string is the
// reserved unconditional embedding.
struct PromptEmbedding {
    Eigen::MatrixXd tokens;
    std::string source_text;
    std::uint64_t seed = 0;
};

PromptEmbedding embed_prompt(std::string_view text, std::uint64_t seed, int prompt_tokens = 8,
                             int token_dim = 16);

enum class ForwardMode { bi_stream, target_only };

// One velocity evaluation. In bi_stream mode the model attends over the
// concatenation [target tokens; context tokens; prompt tokens]; in
// target_only mode context_tokens must be absent. grid_h/grid_w give the
// latent grid shape behind the N image tokens (positions are keyed by grid
// coordinates, identically for both streams).
struct VelocityRequest {
    Eigen::MatrixXd target_tokens;
    std::optional<Eigen::MatrixXd> context_tokens;
    PromptEmbedding prompt;
    double tau = 0.0;
    ForwardMode mode = ForwardMode::target_only;
    int grid_h = 0;
    int grid_w = 0;
    // Diagnostic switch: forbid every token from attending to context
    // tokens. With it on, bi_stream target rows match target_only output.
    bool mask_context_reads = false;
    bool capture_attention = false;
};

// Captured attention weights: one row-stochastic matrix per (block, head),
// ordered block-major, over [target; context; prompt] rows/columns.
struct AttentionBlocks {
    std::vector<Eigen::MatrixXd> weights;
    int blocks = 0;
    int heads = 0;
    int n_target = 0;
    int n_context = 0;
    int n_prompt = 0;

    const Eigen::MatrixXd& at(int block, int head) const {
        return weights[static_cast<std::size_t>(block) * heads + head];
    }
    // 2x2 image-token block structure: target/context rows vs columns.
    Eigen::MatrixXd a_tt(int block, int head) const { return at(block, head).block(0, 0, n_target, n_target); }
    Eigen::MatrixXd a_tc(int block, int head) const { return at(block, head).block(0, n_target, n_target, n_context); }
    Eigen::MatrixXd a_ct(int block, int head) const { return at(block, head).block(n_target, 0, n_context, n_target); }
    Eigen::MatrixXd a_cc(int block, int head) const { return at(block, head).block(n_target, n_target, n_context, n_context); }
};

// Velocity model interface. forward returns one velocity row per image
// token (N rows in target_only mode, 2N in bi_stream); callers integrate
// only the first N (target) rows. forward never mutates the request.
class VelocityModel {
public:
    virtual ~VelocityModel() = default;
    virtual int token_dim() const = 0;
    virtual Eigen::MatrixXd forward(const VelocityRequest& request,
                                    AttentionBlocks* attention = nullptr) const = 0;
};

struct ToyTransformerConfig {
    int token_dim = 16;
    int hidden_dim = 0;  // MLP width; 0 means 2 * token_dim
    int blocks = 4;
    int heads = 4;
    int prompt_tokens = 8;

    int mlp_dim() const { return hidden_dim > 0 ? hidden_dim : 2 * token_dim; }
};

struct ToyBlockWeights {
    Eigen::VectorXd ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    Eigen::MatrixXd w_q, w_k, w_v, w_o;
    Eigen::VectorXd b_q, b_k, b_v, b_o;
    Eigen::MatrixXd w_mod_attn_scale, w_mod_attn_shift, w_mod_mlp_scale, w_mod_mlp_shift;
    Eigen::VectorXd b_mod_attn_scale, b_mod_attn_shift, b_mod_mlp_scale, b_mod_mlp_shift;
    Eigen::MatrixXd w_mlp_in, w_mlp_out;
    Eigen::VectorXd b_mlp_in, b_mlp_out;
};

struct ToyTransformerWeights {
    Eigen::VectorXd stream_target, stream_context, stream_prompt;
    std::vector<ToyBlockWeights> blocks;
    Eigen::VectorXd ln_f_gain, ln_f_bias;
    Eigen::MatrixXd w_out;
    Eigen::VectorXd b_out;

    static ToyTransformerWeights random(const ToyTransformerConfig& config, std::uint64_t seed);
    void set_zero();
};

// Small MMDiT-flavored transformer over the joint token sequence. Every
// normalization is token-wise (per row over the feature axis), the timestep
// enters only through per-token scale/shift modulation, and positions are
// keyed per segment (grid coordinates for image tokens, token index for
// prompt tokens), so target-row computation is independent of whether a
// masked context segment is present.
class ToyTransformer : public VelocityModel {
public:
    ToyTransformer(const ToyTransformerConfig& config, std::uint64_t seed);
    ToyTransformer(const ToyTransformerConfig& config, ToyTransformerWeights weights);

    int token_dim() const override { return config_.token_dim; }
    const ToyTransformerConfig& config() const { return config_; }
    const ToyTransformerWeights& weights() const { return weights_; }

    Eigen::MatrixXd forward(const VelocityRequest& request,
                            AttentionBlocks* attention = nullptr) const override;

private:
    ToyTransformerConfig config_;
    ToyTransformerWeights weights_;
};

// Affine per-token response v = A z + b + tau * g, selected by prompt text.
// Responses are derived deterministically from (model seed, prompt text)
// unless pinned with set_response. Context tokens never influence target
// rows.
struct LinearResponse {
    Eigen::MatrixXd gain;      // d x d
    Eigen::VectorXd bias;      // d
    Eigen::VectorXd tau_gain;  // d; empty means no timestep coupling
};

class AnalyticVelocityModel : public VelocityModel {
public:
    AnalyticVelocityModel(int token_dim, std::uint64_t seed);

    // Pins the response used for a given prompt text; setup-phase only, not
    // safe to call concurrently with forward.
    void set_response(std::string_view prompt_text, LinearResponse response);

    LinearResponse response_for(std::string_view prompt_text) const;

    int token_dim() const override { return token_dim_; }
    Eigen::MatrixXd forward(const VelocityRequest& request,
                            AttentionBlocks* attention = nullptr) const override;

private:
    int token_dim_;
    std::uint64_t seed_;
    std::map<std::string, LinearResponse, std::less<>> pinned_;
};

// Classifier-free guidance: v = v_uncond + scale * (v_cond - v_uncond),
// where the unconditional pass reuses the request with the reserved empty
// prompt. scale 1 returns the conditional velocities exactly (single pass);
// scale 0 returns the unconditional ones exactly.
Eigen::MatrixXd cfg_velocity(const VelocityModel& model, const VelocityRequest& request, double scale);

}  // namespace limecross
