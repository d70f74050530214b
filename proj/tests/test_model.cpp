#include <doctest.h>

#include <random>

#include "limecross/errors.hpp"
#include "limecross/model.hpp"
#include "limecross/util.hpp"

using namespace limecross;

namespace {

Eigen::MatrixXd random_tokens(std::uint64_t seed, Eigen::Index n, Eigen::Index d) {
    GaussianSource source(seed);
    return source.matrix(n, d);
}

VelocityRequest target_only_request(Eigen::MatrixXd tokens, int grid_h, int grid_w,
                                    const PromptEmbedding& prompt, double tau = 0.5) {
    VelocityRequest req;
    req.target_tokens = std::move(tokens);
    req.prompt = prompt;
    req.tau = tau;
    req.mode = ForwardMode::target_only;
    req.grid_h = grid_h;
    req.grid_w = grid_w;
    return req;
}

VelocityRequest bi_stream_request(Eigen::MatrixXd target, Eigen::MatrixXd context, int grid_h,
                                  int grid_w, const PromptEmbedding& prompt, double tau = 0.5) {
    VelocityRequest req;
    req.target_tokens = std::move(target);
    req.context_tokens = std::move(context);
    req.prompt = prompt;
    req.tau = tau;
    req.mode = ForwardMode::bi_stream;
    req.grid_h = grid_h;
    req.grid_w = grid_w;
    return req;
}

}  // namespace

TEST_CASE("prompt embeddings are deterministic and text-sensitive") {
    const PromptEmbedding a1 = embed_prompt("a red ball", 7);
    const PromptEmbedding a2 = embed_prompt("a red ball", 7);
    const PromptEmbedding b = embed_prompt("a blue ball", 7);
    const PromptEmbedding c = embed_prompt("a red ball", 8);

    CHECK((a1.tokens - a2.tokens).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a1.tokens - b.tokens).cwiseAbs().maxCoeff() > 1e-3);
    CHECK((a1.tokens - c.tokens).cwiseAbs().maxCoeff() > 1e-3);
    CHECK(a1.tokens.rows() == 8);
    CHECK(a1.tokens.cols() == 16);

    for (Eigen::Index row = 0; row < a1.tokens.rows(); ++row) {
        CHECK(a1.tokens.row(row).norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("the empty prompt is its own reserved embedding") {
    const PromptEmbedding uncond = embed_prompt("", 7);
    const PromptEmbedding cond = embed_prompt("anything", 7);
    CHECK((uncond.tokens - embed_prompt("", 7).tokens).cwiseAbs().maxCoeff() == 0.0);
    CHECK((uncond.tokens - cond.tokens).cwiseAbs().maxCoeff() > 1e-3);
    CHECK(uncond.source_text.empty());
}

TEST_CASE("zeroed weights with an output bias give a constant velocity field") {
    ToyTransformerConfig config;
    ToyTransformerWeights weights = ToyTransformerWeights::random(config, 1);
    weights.set_zero();
    weights.b_out = Eigen::VectorXd::LinSpaced(config.token_dim, 0.5, 2.0);
    const ToyTransformer model(config, weights);

    const PromptEmbedding prompt = embed_prompt("probe", 3);
    for (std::uint64_t token_seed : {10ULL, 11ULL}) {
        const auto req =
            target_only_request(random_tokens(token_seed, 6, config.token_dim), 2, 3, prompt);
        const Eigen::MatrixXd v = model.forward(req);
        REQUIRE(v.rows() == 6);
        for (Eigen::Index row = 0; row < v.rows(); ++row) {
            CHECK((v.row(row).transpose() - weights.b_out).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("attention rows are probability distributions") {
    const ToyTransformer model(ToyTransformerConfig{}, 5);
    const PromptEmbedding prompt = embed_prompt("attn probe", 9);
    auto req = bi_stream_request(random_tokens(1, 4, 16), random_tokens(2, 4, 16), 2, 2, prompt);
    req.capture_attention = true;

    AttentionBlocks attn;
    model.forward(req, &attn);
    REQUIRE(attn.blocks == 4);
    REQUIRE(attn.heads == 4);
    CHECK(attn.n_target == 4);
    CHECK(attn.n_context == 4);
    CHECK(attn.n_prompt == 8);
    for (const Eigen::MatrixXd& a : attn.weights) {
        REQUIRE(a.rows() == 16);
        REQUIRE(a.cols() == 16);
        CHECK(a.minCoeff() >= 0.0);
        CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("masking context reads zeroes exactly the context columns") {
    const ToyTransformer model(ToyTransformerConfig{}, 5);
    const PromptEmbedding prompt = embed_prompt("mask probe", 9);
    auto req = bi_stream_request(random_tokens(3, 4, 16), random_tokens(4, 4, 16), 2, 2, prompt);
    req.mask_context_reads = true;
    req.capture_attention = true;

    AttentionBlocks attn;
    model.forward(req, &attn);
    for (int block = 0; block < attn.blocks; ++block) {
        for (int head = 0; head < attn.heads; ++head) {
            CHECK(attn.a_tc(block, head).cwiseAbs().maxCoeff() == 0.0);
            CHECK(attn.a_cc(block, head).cwiseAbs().maxCoeff() == 0.0);
            CHECK((attn.at(block, head).rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
        }
    }
}

TEST_CASE("masked bi-stream target rows match the target-only pass") {
    const ToyTransformer model(ToyTransformerConfig{}, 13);
    const PromptEmbedding prompt = embed_prompt("equivalence probe", 17);
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::MatrixXd target = random_tokens(rng(), 6, 16);
        const Eigen::MatrixXd context = random_tokens(rng(), 6, 16);
        const double tau = static_cast<double>(trial) / 10.0;

        auto masked = bi_stream_request(target, context, 2, 3, prompt, tau);
        masked.mask_context_reads = true;
        const Eigen::MatrixXd v_masked = model.forward(masked);

        const auto solo = target_only_request(target, 2, 3, prompt, tau);
        const Eigen::MatrixXd v_solo = model.forward(solo);

        REQUIRE(v_masked.rows() == 12);
        REQUIRE(v_solo.rows() == 6);
        CHECK((v_masked.topRows(6) - v_solo).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("forward never mutates the request buffers") {
    const ToyTransformer model(ToyTransformerConfig{}, 13);
    const PromptEmbedding prompt = embed_prompt("immutability", 17);
    const auto req = bi_stream_request(random_tokens(5, 4, 16), random_tokens(6, 4, 16), 2, 2, prompt);
    const Eigen::MatrixXd target_before = req.target_tokens;
    const Eigen::MatrixXd context_before = *req.context_tokens;

    model.forward(req);
    CHECK((req.target_tokens - target_before).cwiseAbs().maxCoeff() == 0.0);
    CHECK((*req.context_tokens - context_before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("unmasked context changes the target velocities") {
    const ToyTransformer model(ToyTransformerConfig{}, 13);
    const PromptEmbedding prompt = embed_prompt("context influence", 17);
    const Eigen::MatrixXd target = random_tokens(7, 4, 16);
    const Eigen::MatrixXd ctx_a = random_tokens(8, 4, 16);
    Eigen::MatrixXd ctx_b = ctx_a;
    ctx_b.row(0).swap(ctx_b.row(3));

    const Eigen::MatrixXd va =
        model.forward(bi_stream_request(target, ctx_a, 2, 2, prompt)).topRows(4);
    const Eigen::MatrixXd vb =
        model.forward(bi_stream_request(target, ctx_b, 2, 2, prompt)).topRows(4);
    CHECK((va - vb).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("forward is deterministic") {
    const ToyTransformer model(ToyTransformerConfig{}, 29);
    const PromptEmbedding prompt = embed_prompt("determinism", 5);
    const auto req = bi_stream_request(random_tokens(9, 4, 16), random_tokens(10, 4, 16), 2, 2, prompt);
    const Eigen::MatrixXd v1 = model.forward(req);
    const Eigen::MatrixXd v2 = model.forward(req);
    CHECK((v1 - v2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("request validation rejects inconsistent shapes") {
    const ToyTransformer model(ToyTransformerConfig{}, 29);
    const PromptEmbedding prompt = embed_prompt("validation", 5);

    auto bad_grid = target_only_request(random_tokens(1, 4, 16), 2, 3, prompt);
    CHECK_THROWS_AS(model.forward(bad_grid), DimensionError);

    auto bad_width = target_only_request(random_tokens(1, 4, 8), 2, 2, prompt);
    CHECK_THROWS_AS(model.forward(bad_width), DimensionError);

    auto bad_tau = target_only_request(random_tokens(1, 4, 16), 2, 2, prompt);
    bad_tau.tau = 1.5;
    CHECK_THROWS_AS(model.forward(bad_tau), ModelError);

    auto missing_context = target_only_request(random_tokens(1, 4, 16), 2, 2, prompt);
    missing_context.mode = ForwardMode::bi_stream;
    CHECK_THROWS_AS(model.forward(missing_context), ModelError);

    auto stray_context = bi_stream_request(random_tokens(1, 4, 16), random_tokens(2, 4, 16), 2, 2, prompt);
    stray_context.mode = ForwardMode::target_only;
    CHECK_THROWS_AS(model.forward(stray_context), ModelError);

    auto context_shape = bi_stream_request(random_tokens(1, 4, 16), random_tokens(2, 5, 16), 2, 2, prompt);
    CHECK_THROWS_AS(model.forward(context_shape), DimensionError);
}

TEST_CASE("transformer construction validates its configuration") {
    ToyTransformerConfig bad_dim;
    bad_dim.token_dim = 14;
    CHECK_THROWS_AS(ToyTransformer(bad_dim, 1), ModelError);

    ToyTransformerConfig bad_heads;
    bad_heads.token_dim = 16;
    bad_heads.heads = 3;
    CHECK_THROWS_AS(ToyTransformer(bad_heads, 1), ModelError);

    ToyTransformerConfig bad_blocks;
    bad_blocks.blocks = 0;
    CHECK_THROWS_AS(ToyTransformer(bad_blocks, 1), ModelError);
}

TEST_CASE("the analytic model applies its affine response per token") {
    AnalyticVelocityModel model(4, 0);
    LinearResponse shift;
    shift.gain = Eigen::MatrixXd::Zero(4, 4);
    shift.bias = Eigen::VectorXd::LinSpaced(4, 1.0, 4.0);
    model.set_response("shift", shift);

    const PromptEmbedding prompt = embed_prompt("shift", 0, 8, 4);
    const Eigen::MatrixXd tokens = random_tokens(41, 6, 4);
    const Eigen::MatrixXd v = model.forward(target_only_request(tokens, 2, 3, prompt));
    for (Eigen::Index row = 0; row < 6; ++row) {
        CHECK((v.row(row).transpose() - shift.bias).cwiseAbs().maxCoeff() == 0.0);
    }

    LinearResponse scale;
    scale.gain = 2.0 * Eigen::MatrixXd::Identity(4, 4);
    scale.bias = Eigen::VectorXd::Zero(4);
    model.set_response("scale", scale);
    const Eigen::MatrixXd v2 =
        model.forward(target_only_request(tokens, 2, 3, embed_prompt("scale", 0, 8, 4)));
    CHECK((v2 - 2.0 * tokens).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("the analytic timestep coupling adds tau times its vector") {
    AnalyticVelocityModel model(4, 0);
    LinearResponse drift;
    drift.gain = Eigen::MatrixXd::Zero(4, 4);
    drift.bias = Eigen::VectorXd::Zero(4);
    drift.tau_gain = Eigen::VectorXd::LinSpaced(4, -2.0, 2.0);
    model.set_response("drift", drift);

    const PromptEmbedding prompt = embed_prompt("drift", 0, 8, 4);
    const Eigen::MatrixXd tokens = random_tokens(43, 6, 4);
    VelocityRequest request = target_only_request(tokens, 2, 3, prompt);

    request.tau = 0.0;
    CHECK(model.forward(request).cwiseAbs().maxCoeff() == 0.0);
    request.tau = 0.5;
    const Eigen::MatrixXd v = model.forward(request);
    for (Eigen::Index row = 0; row < 6; ++row) {
        CHECK((v.row(row).transpose() - 0.5 * drift.tau_gain).cwiseAbs().maxCoeff() < 1e-15);
    }

    LinearResponse bad = drift;
    bad.tau_gain = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(model.set_response("bad", bad), ModelError);
}

TEST_CASE("analytic responses are reproducible per prompt text") {
    AnalyticVelocityModel model(8, 77);
    const LinearResponse a1 = model.response_for("a cat");
    const LinearResponse a2 = model.response_for("a cat");
    const LinearResponse b = model.response_for("a dog");
    CHECK((a1.gain - a2.gain).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a1.bias - a2.bias).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a1.gain - b.gain).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("guidance shortcuts are exact at scale one and zero") {
    const ToyTransformer model(ToyTransformerConfig{}, 3);
    const PromptEmbedding prompt = embed_prompt("guided", 21);
    const auto req = target_only_request(random_tokens(50, 4, 16), 2, 2, prompt);

    const Eigen::MatrixXd v_cond = model.forward(req);
    CHECK((cfg_velocity(model, req, 1.0) - v_cond).cwiseAbs().maxCoeff() == 0.0);

    auto uncond_req = req;
    uncond_req.prompt = embed_prompt("", prompt.seed, 8, 16);
    const Eigen::MatrixXd v_uncond = model.forward(uncond_req);
    CHECK((cfg_velocity(model, req, 0.0) - v_uncond).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(cfg_velocity(model, req, -0.5), ModelError);
}

TEST_CASE("guidance interpolates linearly in the scale") {
    AnalyticVelocityModel model(4, 99);
    const PromptEmbedding prompt = embed_prompt("guided", 21, 8, 4);
    const auto req = target_only_request(random_tokens(51, 5, 4), 1, 5, prompt);

    const Eigen::MatrixXd v_cond = model.forward(req);
    auto uncond_req = req;
    uncond_req.prompt = embed_prompt("", 21, 8, 4);
    const Eigen::MatrixXd v_uncond = model.forward(uncond_req);

    const Eigen::MatrixXd v = cfg_velocity(model, req, 2.0);
    const Eigen::MatrixXd want = v_uncond + 2.0 * (v_cond - v_uncond);
    CHECK((v - want).cwiseAbs().maxCoeff() < 1e-12);
}
