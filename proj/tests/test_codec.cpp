#include <doctest.h>

#include <random>
#include <string>

#include "limecross/codec.hpp"
#include "limecross/errors.hpp"
#include "test_helpers.hpp"

using namespace limecross;
using limecross::testing::random_layer;

TEST_CASE("encode/decode round-trips a random layer") {
    std::mt19937_64 rng(21);
    const RgbaLayer layer = random_layer(rng, 16, 16, "subject");
    for (std::uint64_t seed : {0ULL, 7ULL}) {
        const Codec codec(2, seed);
        const RgbaLayer back = codec.decode(codec.encode(layer));
        for (int ch = 0; ch < 3; ++ch) {
            CHECK((back.color[ch] - layer.color[ch]).abs().maxCoeff() < 1e-9);
        }
        CHECK((back.alpha - layer.alpha).abs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("the identity codec keeps raw patch values") {
    const Codec codec = Codec::identity(2);
    RgbaLayer layer = make_layer(4, 4, "uniform");
    for (auto& channel : layer.color) channel = Plane::Constant(4, 4, 0.25);
    layer.alpha = Plane::Constant(4, 4, 0.75);

    const LatentGrid latent = codec.encode(layer);
    CHECK(latent.channels() == 16);
    CHECK(latent.grid_h == 2);
    CHECK(latent.grid_w == 2);
    // Uniform input: every latent column is the same patch vector.
    for (Eigen::Index col = 1; col < latent.data.cols(); ++col) {
        CHECK((latent.data.col(col) - latent.data.col(0)).cwiseAbs().maxCoeff() == 0.0);
    }
    // Channel slots 0..3 hold red samples, the final four hold remapped alpha.
    CHECK(latent.data(0, 0) == doctest::Approx(0.25));
    CHECK(latent.data(12, 0) == doctest::Approx(2.0 * 0.75 - 1.0));
}

TEST_CASE("the patch map is orthonormal") {
    for (int downsample : {1, 2, 4}) {
        const Codec codec(downsample, 99);
        const Eigen::MatrixXd m = codec.patch_map();
        const Eigen::Index c = 4 * downsample * downsample;
        REQUIRE(m.rows() == c);
        REQUIRE(m.cols() == c);
        const Eigen::MatrixXd gram = m.transpose() * m;
        CHECK((gram - Eigen::MatrixXd::Identity(c, c)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("encoding preserves signal energy") {
    std::mt19937_64 rng(22);
    const RgbaLayer layer = random_layer(rng, 8, 8, "energy");
    const Codec codec(2, 5);
    const LatentGrid latent = codec.encode(layer);

    double pixel_energy = 0.0;
    for (int ch = 0; ch < 3; ++ch) pixel_energy += layer.color[ch].square().sum();
    pixel_energy += (2.0 * layer.alpha - 1.0).square().sum();
    CHECK(latent.data.squaredNorm() == doctest::Approx(pixel_energy).epsilon(1e-9));
}

TEST_CASE("decode clamps out-of-range latents and stabilizes") {
    std::mt19937_64 rng(23);
    const RgbaLayer layer = random_layer(rng, 8, 8, "clamp");
    const Codec codec(2, 3);
    LatentGrid latent = codec.encode(layer);
    latent.data.array() += 10.0;

    const RgbaLayer decoded = codec.decode(latent);
    for (int ch = 0; ch < 3; ++ch) {
        CHECK(decoded.color[ch].maxCoeff() <= 1.0);
        CHECK(decoded.color[ch].minCoeff() >= -1.0);
    }
    CHECK(decoded.alpha.maxCoeff() <= 1.0);
    CHECK(decoded.alpha.minCoeff() >= 0.0);

    // Re-encoding the clamped image must reproduce it exactly on decode.
    const RgbaLayer again = codec.decode(codec.encode(decoded));
    for (int ch = 0; ch < 3; ++ch) {
        CHECK((again.color[ch] - decoded.color[ch]).abs().maxCoeff() < 1e-9);
    }
    CHECK((again.alpha - decoded.alpha).abs().maxCoeff() < 1e-9);
}

TEST_CASE("encode rejects dimensions the downsample factor does not divide") {
    std::mt19937_64 rng(24);
    const RgbaLayer layer = random_layer(rng, 6, 8, "odd");
    const Codec codec(4, 0);
    try {
        codec.encode(layer);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("pad") != std::string::npos);
    }
}

TEST_CASE("pack lays tokens out in row-major grid order") {
    const Codec codec = Codec::identity(1);
    RgbaLayer layer = make_layer(2, 3, "grid");
    // Encode the grid coordinates into the red channel so each cell is unique.
    for (Eigen::Index i = 0; i < 2; ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) {
            layer.color[0](i, j) = 0.1 * static_cast<double>(i * 3 + j);
        }
    }
    const LatentGrid latent = codec.encode(layer);
    const TokenStream stream = pack(latent);

    REQUIRE(stream.tokens.rows() == 6);
    REQUIRE(stream.tokens.cols() == 4);
    CHECK(stream.grid_h == 2);
    CHECK(stream.grid_w == 3);
    for (Eigen::Index i = 0; i < 2; ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) {
            CHECK(stream.tokens(i * 3 + j, 0) == doctest::Approx(0.1 * static_cast<double>(i * 3 + j)));
        }
    }
}

TEST_CASE("unpack inverts pack exactly") {
    std::mt19937_64 rng(25);
    const RgbaLayer layer = random_layer(rng, 8, 12, "roundtrip");
    const Codec codec(2, 17);
    const LatentGrid latent = codec.encode(layer);
    const LatentGrid back = unpack(pack(latent, StreamId::context));
    CHECK(back.grid_h == latent.grid_h);
    CHECK(back.grid_w == latent.grid_w);
    CHECK(back.downsample == latent.downsample);
    CHECK(back.origin_h == latent.origin_h);
    CHECK(back.origin_w == latent.origin_w);
    CHECK((back.data - latent.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("unpack rejects token counts that do not tile the grid") {
    TokenStream stream;
    stream.tokens = Eigen::MatrixXd::Zero(5, 16);
    stream.grid_h = 2;
    stream.grid_w = 3;
    CHECK_THROWS_AS(unpack(stream), DimensionError);

    stream.tokens = Eigen::MatrixXd::Zero(6, 15);
    CHECK_THROWS_AS(unpack(stream), DimensionError);
}

TEST_CASE("codecs with different seeds produce different latents") {
    std::mt19937_64 rng(26);
    const RgbaLayer layer = random_layer(rng, 8, 8, "seeded");
    const Codec a(2, 1);
    const Codec b(2, 2);
    const LatentGrid la = a.encode(layer);
    const LatentGrid lb = b.encode(layer);
    CHECK((la.data - lb.data).cwiseAbs().maxCoeff() > 1e-3);
    // Each codec still inverts its own encoding.
    CHECK((b.decode(lb).alpha - layer.alpha).abs().maxCoeff() < 1e-9);
}

TEST_CASE("codec construction is deterministic in the seed") {
    const Codec a(2, 123);
    const Codec b(2, 123);
    CHECK((a.patch_map() - b.patch_map()).cwiseAbs().maxCoeff() == 0.0);
}
