#include "limecross/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <utility>

#include "limecross/util.hpp"

namespace limecross {

namespace {

constexpr double kNormEps = 1e-6;

// Fixed sinusoidal position for an image token at grid cell (i, j); the
// first half of the vector encodes the row, the second half the column.
Eigen::VectorXd pos_2d(int i, int j, int d) {
    Eigen::VectorXd p(d);
    const int q = d / 4;
    for (int k = 0; k < q; ++k) {
        const double freq = std::pow(10000.0, -static_cast<double>(k) / q);
        p(2 * k) = std::sin(freq * i);
        p(2 * k + 1) = std::cos(freq * i);
        p(d / 2 + 2 * k) = std::sin(freq * j);
        p(d / 2 + 2 * k + 1) = std::cos(freq * j);
    }
    return p;
}

// Prompt tokens are positioned by their index within the prompt segment, so
// their encoding does not depend on how many image tokens precede them.
Eigen::VectorXd pos_1d(int index, int d) {
    Eigen::VectorXd p(d);
    const int q = d / 2;
    for (int k = 0; k < q; ++k) {
        const double freq = std::pow(10000.0, -static_cast<double>(k) / q);
        p(2 * k) = std::sin(freq * index);
        p(2 * k + 1) = std::cos(freq * index);
    }
    return p;
}

Eigen::VectorXd tau_features(double tau, int d) {
    Eigen::VectorXd f(d);
    const int q = d / 2;
    const double t = 1000.0 * tau;
    for (int k = 0; k < q; ++k) {
        const double freq = std::pow(10000.0, -static_cast<double>(k) / q);
        f(2 * k) = std::sin(freq * t);
        f(2 * k + 1) = std::cos(freq * t);
    }
    return f;
}

// Token-wise layer norm: each row is normalized over its own features only,
// so a token's output never depends on other tokens in the sequence.
Eigen::MatrixXd token_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain,
                           const Eigen::VectorXd& bias) {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().mean();
        out.row(r) = ((x.row(r).array() - mean) / std::sqrt(var + kNormEps)) * gain.transpose().array() +
                     bias.transpose().array();
    }
    return out;
}

Eigen::MatrixXd modulate(const Eigen::MatrixXd& x, const Eigen::VectorXd& scale,
                         const Eigen::VectorXd& shift) {
    return (x.array().rowwise() * (1.0 + scale.transpose().array())).rowwise() +
           shift.transpose().array();
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

void validate_request(const VelocityRequest& req, int d) {
    if (req.target_tokens.cols() != d) {
        throw DimensionError("velocity request: target tokens have width " +
                             std::to_string(req.target_tokens.cols()) + ", model expects " +
                             std::to_string(d));
    }
    if (req.prompt.tokens.cols() != d) {
        throw DimensionError("velocity request: prompt tokens have width " +
                             std::to_string(req.prompt.tokens.cols()) + ", model expects " +
                             std::to_string(d));
    }
    if (!(req.tau >= 0.0 && req.tau <= 1.0)) {
        throw ModelError("velocity request: tau " + std::to_string(req.tau) + " outside [0,1]");
    }
    if (req.mode == ForwardMode::bi_stream) {
        if (!req.context_tokens.has_value()) {
            throw ModelError("velocity request: bi_stream mode without context tokens");
        }
        if (req.context_tokens->rows() != req.target_tokens.rows() ||
            req.context_tokens->cols() != req.target_tokens.cols()) {
            throw DimensionError("velocity request: context tokens shaped " +
                                 std::to_string(req.context_tokens->rows()) + "x" +
                                 std::to_string(req.context_tokens->cols()) + ", target tokens " +
                                 std::to_string(req.target_tokens.rows()) + "x" +
                                 std::to_string(req.target_tokens.cols()));
        }
    } else if (req.context_tokens.has_value()) {
        throw ModelError("velocity request: target_only mode with context tokens present");
    }
    if (static_cast<Eigen::Index>(req.grid_h) * req.grid_w != req.target_tokens.rows()) {
        throw DimensionError("velocity request: grid " + std::to_string(req.grid_h) + "x" +
                             std::to_string(req.grid_w) + " does not cover " +
                             std::to_string(req.target_tokens.rows()) + " image tokens");
    }
}

}  // namespace

PromptEmbedding embed_prompt(std::string_view text, std::uint64_t seed, int prompt_tokens,
                             int token_dim) {
    if (prompt_tokens < 1 || token_dim < 1) {
        throw ModelError("embed_prompt: prompt_tokens and token_dim must be positive");
    }
    GaussianSource source(derive_seed(seed, text));
    PromptEmbedding embedding;
    embedding.tokens = source.matrix(prompt_tokens, token_dim);
    for (Eigen::Index r = 0; r < embedding.tokens.rows(); ++r) {
        const double norm = embedding.tokens.row(r).norm();
        if (norm > 0.0) embedding.tokens.row(r) /= norm;
    }
    embedding.source_text = std::string(text);
    embedding.seed = seed;
    return embedding;
}

ToyTransformerWeights ToyTransformerWeights::random(const ToyTransformerConfig& config,
                                                    std::uint64_t seed) {
    const int d = config.token_dim;
    const int m = config.mlp_dim();
    const double ws = 1.0 / std::sqrt(static_cast<double>(d));
    GaussianSource g(seed);

    // Draw order is part of the determinism contract: embeddings, then each
    // block's fields in declaration order, then the output head.
    ToyTransformerWeights w;
    w.stream_target = 0.3 * g.matrix(d, 1);
    w.stream_context = 0.3 * g.matrix(d, 1);
    w.stream_prompt = 0.3 * g.matrix(d, 1);
    w.blocks.resize(static_cast<std::size_t>(config.blocks));
    for (ToyBlockWeights& blk : w.blocks) {
        blk.ln1_gain = Eigen::VectorXd::Ones(d) + 0.1 * g.matrix(d, 1);
        blk.ln1_bias = 0.1 * g.matrix(d, 1);
        blk.ln2_gain = Eigen::VectorXd::Ones(d) + 0.1 * g.matrix(d, 1);
        blk.ln2_bias = 0.1 * g.matrix(d, 1);
        blk.w_q = ws * g.matrix(d, d);
        blk.w_k = ws * g.matrix(d, d);
        blk.w_v = ws * g.matrix(d, d);
        blk.w_o = ws * g.matrix(d, d);
        blk.b_q = 0.05 * g.matrix(d, 1);
        blk.b_k = 0.05 * g.matrix(d, 1);
        blk.b_v = 0.05 * g.matrix(d, 1);
        blk.b_o = 0.05 * g.matrix(d, 1);
        blk.w_mod_attn_scale = 0.1 * ws * g.matrix(d, d);
        blk.w_mod_attn_shift = 0.1 * ws * g.matrix(d, d);
        blk.w_mod_mlp_scale = 0.1 * ws * g.matrix(d, d);
        blk.w_mod_mlp_shift = 0.1 * ws * g.matrix(d, d);
        blk.b_mod_attn_scale = 0.02 * g.matrix(d, 1);
        blk.b_mod_attn_shift = 0.02 * g.matrix(d, 1);
        blk.b_mod_mlp_scale = 0.02 * g.matrix(d, 1);
        blk.b_mod_mlp_shift = 0.02 * g.matrix(d, 1);
        blk.w_mlp_in = ws * g.matrix(d, m);
        blk.w_mlp_out = (1.0 / std::sqrt(static_cast<double>(m))) * g.matrix(m, d);
        blk.b_mlp_in = 0.05 * g.matrix(m, 1);
        blk.b_mlp_out = 0.05 * g.matrix(d, 1);
    }
    w.ln_f_gain = Eigen::VectorXd::Ones(d) + 0.1 * g.matrix(d, 1);
    w.ln_f_bias = 0.1 * g.matrix(d, 1);
    w.w_out = ws * g.matrix(d, d);
    w.b_out = 0.05 * g.matrix(d, 1);
    return w;
}

void ToyTransformerWeights::set_zero() {
    stream_target.setZero();
    stream_context.setZero();
    stream_prompt.setZero();
    for (ToyBlockWeights& blk : blocks) {
        blk.ln1_gain.setZero();
        blk.ln1_bias.setZero();
        blk.ln2_gain.setZero();
        blk.ln2_bias.setZero();
        blk.w_q.setZero();
        blk.w_k.setZero();
        blk.w_v.setZero();
        blk.w_o.setZero();
        blk.b_q.setZero();
        blk.b_k.setZero();
        blk.b_v.setZero();
        blk.b_o.setZero();
        blk.w_mod_attn_scale.setZero();
        blk.w_mod_attn_shift.setZero();
        blk.w_mod_mlp_scale.setZero();
        blk.w_mod_mlp_shift.setZero();
        blk.b_mod_attn_scale.setZero();
        blk.b_mod_attn_shift.setZero();
        blk.b_mod_mlp_scale.setZero();
        blk.b_mod_mlp_shift.setZero();
        blk.w_mlp_in.setZero();
        blk.w_mlp_out.setZero();
        blk.b_mlp_in.setZero();
        blk.b_mlp_out.setZero();
    }
    ln_f_gain.setZero();
    ln_f_bias.setZero();
    w_out.setZero();
    b_out.setZero();
}

ToyTransformer::ToyTransformer(const ToyTransformerConfig& config, std::uint64_t seed)
    : ToyTransformer(config, ToyTransformerWeights::random(config, seed)) {}

ToyTransformer::ToyTransformer(const ToyTransformerConfig& config, ToyTransformerWeights weights)
    : config_(config), weights_(std::move(weights)) {
    if (config_.token_dim < 4 || config_.token_dim % 4 != 0) {
        throw ModelError("toy transformer: token_dim must be a positive multiple of 4");
    }
    if (config_.heads < 1 || config_.token_dim % config_.heads != 0) {
        throw ModelError("toy transformer: heads must divide token_dim");
    }
    if (config_.blocks < 1 || config_.prompt_tokens < 1 || config_.mlp_dim() < 1) {
        throw ModelError("toy transformer: blocks, prompt_tokens, and mlp width must be positive");
    }
    if (static_cast<int>(weights_.blocks.size()) != config_.blocks) {
        throw ModelError("toy transformer: weights carry " + std::to_string(weights_.blocks.size()) +
                         " blocks, config says " + std::to_string(config_.blocks));
    }
}

Eigen::MatrixXd ToyTransformer::forward(const VelocityRequest& req, AttentionBlocks* attention) const {
    const int d = config_.token_dim;
    validate_request(req, d);

    const Eigen::Index n = req.target_tokens.rows();
    const bool bi = req.mode == ForwardMode::bi_stream;
    const Eigen::Index n_ctx = bi ? req.context_tokens->rows() : 0;
    const Eigen::Index n_prompt = req.prompt.tokens.rows();
    const Eigen::Index total = n + n_ctx + n_prompt;

    // Both image streams share the same grid-keyed positions; only the
    // additive stream embedding tells them apart.
    Eigen::MatrixXd img_pos(n, d);
    for (int i = 0; i < req.grid_h; ++i) {
        for (int j = 0; j < req.grid_w; ++j) {
            img_pos.row(static_cast<Eigen::Index>(i) * req.grid_w + j) = pos_2d(i, j, d).transpose();
        }
    }

    Eigen::MatrixXd x(total, d);
    x.topRows(n) = req.target_tokens + img_pos;
    x.topRows(n).rowwise() += weights_.stream_target.transpose();
    if (bi) {
        x.middleRows(n, n_ctx) = *req.context_tokens + img_pos;
        x.middleRows(n, n_ctx).rowwise() += weights_.stream_context.transpose();
    }
    for (Eigen::Index r = 0; r < n_prompt; ++r) {
        x.row(n + n_ctx + r) = req.prompt.tokens.row(r) +
                               (pos_1d(static_cast<int>(r), d) + weights_.stream_prompt).transpose();
    }

    const Eigen::VectorXd tf = tau_features(req.tau, d);
    const int heads = config_.heads;
    const int head_dim = d / heads;
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(head_dim));
    const bool mask_ctx = req.mask_context_reads && bi && n_ctx > 0;

    if (attention) {
        attention->weights.clear();
        attention->blocks = config_.blocks;
        attention->heads = heads;
        attention->n_target = static_cast<int>(n);
        attention->n_context = static_cast<int>(n_ctx);
        attention->n_prompt = static_cast<int>(n_prompt);
    }

    for (const ToyBlockWeights& blk : weights_.blocks) {
        Eigen::MatrixXd xn = token_norm(x, blk.ln1_gain, blk.ln1_bias);
        Eigen::MatrixXd xm = modulate(xn, blk.w_mod_attn_scale * tf + blk.b_mod_attn_scale,
                                      blk.w_mod_attn_shift * tf + blk.b_mod_attn_shift);

        Eigen::MatrixXd q = xm * blk.w_q;
        q.rowwise() += blk.b_q.transpose();
        Eigen::MatrixXd k = xm * blk.w_k;
        k.rowwise() += blk.b_k.transpose();
        Eigen::MatrixXd v = xm * blk.w_v;
        v.rowwise() += blk.b_v.transpose();

        Eigen::MatrixXd attn_out(total, d);
        for (int h = 0; h < heads; ++h) {
            Eigen::MatrixXd scores = q.middleCols(h * head_dim, head_dim) *
                                     k.middleCols(h * head_dim, head_dim).transpose() * inv_sqrt_hd;
            if (mask_ctx) {
                scores.middleCols(n, n_ctx).setConstant(-std::numeric_limits<double>::infinity());
            }
            // Row softmax; -inf logits come out as exact zeros.
            for (Eigen::Index r = 0; r < total; ++r) {
                const double row_max = scores.row(r).maxCoeff();
                Eigen::ArrayXd e = (scores.row(r).transpose().array() - row_max).exp();
                scores.row(r) = (e / e.sum()).transpose();
            }
            attn_out.middleCols(h * head_dim, head_dim) = scores * v.middleCols(h * head_dim, head_dim);
            if (attention && req.capture_attention) attention->weights.push_back(scores);
        }
        Eigen::MatrixXd proj = attn_out * blk.w_o;
        proj.rowwise() += blk.b_o.transpose();
        x += proj;

        Eigen::MatrixXd xn2 = token_norm(x, blk.ln2_gain, blk.ln2_bias);
        Eigen::MatrixXd xm2 = modulate(xn2, blk.w_mod_mlp_scale * tf + blk.b_mod_mlp_scale,
                                       blk.w_mod_mlp_shift * tf + blk.b_mod_mlp_shift);
        Eigen::MatrixXd hidden = xm2 * blk.w_mlp_in;
        hidden.rowwise() += blk.b_mlp_in.transpose();
        hidden = hidden.unaryExpr([](double u) { return gelu(u); });
        Eigen::MatrixXd mlp = hidden * blk.w_mlp_out;
        mlp.rowwise() += blk.b_mlp_out.transpose();
        x += mlp;
    }

    Eigen::MatrixXd xf = token_norm(x, weights_.ln_f_gain, weights_.ln_f_bias);
    Eigen::MatrixXd velocities = xf * weights_.w_out;
    velocities.rowwise() += weights_.b_out.transpose();
    return velocities.topRows(n + n_ctx);
}

AnalyticVelocityModel::AnalyticVelocityModel(int token_dim, std::uint64_t seed)
    : token_dim_(token_dim), seed_(seed) {
    if (token_dim_ < 1) throw ModelError("analytic model: token_dim must be positive");
}

void AnalyticVelocityModel::set_response(std::string_view prompt_text, LinearResponse response) {
    if (response.gain.rows() != token_dim_ || response.gain.cols() != token_dim_ ||
        response.bias.size() != token_dim_ ||
        (response.tau_gain.size() != 0 && response.tau_gain.size() != token_dim_)) {
        throw ModelError("analytic model: response shapes must be d x d and d for d = " +
                         std::to_string(token_dim_));
    }
    pinned_.insert_or_assign(std::string(prompt_text), std::move(response));
}

LinearResponse AnalyticVelocityModel::response_for(std::string_view prompt_text) const {
    if (auto it = pinned_.find(prompt_text); it != pinned_.end()) return it->second;
    GaussianSource g(derive_seed(seed_, prompt_text));
    LinearResponse response;
    response.gain = (0.8 / std::sqrt(static_cast<double>(token_dim_))) * g.matrix(token_dim_, token_dim_);
    response.bias = g.matrix(token_dim_, 1);
    return response;
}

Eigen::MatrixXd AnalyticVelocityModel::forward(const VelocityRequest& req, AttentionBlocks*) const {
    validate_request(req, token_dim_);
    const LinearResponse response = response_for(req.prompt.source_text);
    const Eigen::Index n = req.target_tokens.rows();
    const bool bi = req.mode == ForwardMode::bi_stream;
    const Eigen::Index n_ctx = bi ? req.context_tokens->rows() : 0;

    Eigen::MatrixXd v(n + n_ctx, token_dim_);
    v.topRows(n) = req.target_tokens * response.gain.transpose();
    if (bi) v.bottomRows(n_ctx) = *req.context_tokens * response.gain.transpose();
    v.rowwise() += response.bias.transpose();
    if (response.tau_gain.size() != 0) v.rowwise() += (req.tau * response.tau_gain).transpose();
    return v;
}

Eigen::MatrixXd cfg_velocity(const VelocityModel& model, const VelocityRequest& request, double scale) {
    if (scale < 0.0) throw ModelError("cfg scale must be >= 0");
    if (scale == 1.0) return model.forward(request);

    VelocityRequest uncond = request;
    uncond.capture_attention = false;
    uncond.prompt = embed_prompt("", request.prompt.seed, static_cast<int>(request.prompt.tokens.rows()),
                                 static_cast<int>(request.prompt.tokens.cols()));
    if (scale == 0.0) return model.forward(uncond);

    Eigen::MatrixXd v_uncond = model.forward(uncond);
    Eigen::MatrixXd v_cond = model.forward(request);
    return v_uncond + scale * (v_cond - v_uncond);
}

}  // namespace limecross
