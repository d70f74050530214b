#include "limecross/codec.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "limecross/util.hpp"

namespace limecross {

namespace {

// Patch vector layout: channel-major, then row-major within the patch.
// Channel order is R, G, B, remapped alpha.
inline Eigen::Index patch_slot(int ch, int dy, int dx, int s) {
    return static_cast<Eigen::Index>(ch) * s * s + static_cast<Eigen::Index>(dy) * s + dx;
}

Eigen::MatrixXd orthonormal_map(int channels, std::uint64_t seed) {
    GaussianSource source(seed);
    Eigen::MatrixXd g = source.matrix(channels, channels);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::VectorXd r_diag = qr.matrixQR().diagonal();
    for (int k = 0; k < channels; ++k) {
        if (r_diag(k) < 0.0) q.col(k) = -q.col(k);
    }
    return q;
}

}  // namespace

TokenStream pack(const LatentGrid& latent, StreamId stream_id) {
    const auto cells = static_cast<Eigen::Index>(latent.grid_h) * latent.grid_w;
    if (latent.data.cols() != cells) {
        throw DimensionError("pack: latent has " + std::to_string(latent.data.cols()) +
                             " columns but grid is " + std::to_string(latent.grid_h) + "x" +
                             std::to_string(latent.grid_w));
    }
    TokenStream stream;
    stream.tokens = latent.data.transpose();
    stream.stream_id = stream_id;
    stream.grid_h = latent.grid_h;
    stream.grid_w = latent.grid_w;
    return stream;
}

LatentGrid unpack(const TokenStream& stream) {
    const auto cells = static_cast<Eigen::Index>(stream.grid_h) * stream.grid_w;
    if (stream.tokens.rows() != cells) {
        throw DimensionError("unpack: " + std::to_string(stream.tokens.rows()) +
                             " tokens but grid is " + std::to_string(stream.grid_h) + "x" +
                             std::to_string(stream.grid_w));
    }
    const auto d = static_cast<int>(stream.tokens.cols());
    const int s = static_cast<int>(std::lround(std::sqrt(d / 4.0)));
    if (d <= 0 || 4 * s * s != d) {
        throw DimensionError("unpack: token width " + std::to_string(d) +
                             " is not 4*s*s for any integer s");
    }
    LatentGrid latent;
    latent.data = stream.tokens.transpose();
    latent.downsample = s;
    latent.grid_h = stream.grid_h;
    latent.grid_w = stream.grid_w;
    latent.origin_h = stream.grid_h * s;
    latent.origin_w = stream.grid_w * s;
    return latent;
}

Codec::Codec(int downsample, std::uint64_t seed)
    : Codec(downsample, seed, orthonormal_map(4 * downsample * downsample, seed)) {}

Codec::Codec(int downsample, std::uint64_t seed, Eigen::MatrixXd map)
    : downsample_(downsample), channels_(4 * downsample * downsample), seed_(seed), map_(std::move(map)) {
    if (downsample_ < 1) throw DimensionError("codec downsample factor must be >= 1");
}

Codec Codec::identity(int downsample) {
    const int channels = 4 * downsample * downsample;
    return Codec(downsample, 0, Eigen::MatrixXd::Identity(channels, channels));
}

LatentGrid Codec::encode_planes(const std::array<Plane, 3>& color, const Plane& alpha_codec) const {
    const Eigen::Index h_px = alpha_codec.rows();
    const Eigen::Index w_px = alpha_codec.cols();
    const int s = downsample_;
    if (h_px % s != 0 || w_px % s != 0) {
        throw DimensionError("encode: image is " + std::to_string(h_px) + "x" + std::to_string(w_px) +
                             ", not divisible by downsample factor " + std::to_string(s) +
                             " (pad to " + std::to_string((h_px + s - 1) / s * s) + "x" +
                             std::to_string((w_px + s - 1) / s * s) + ")");
    }
    const int grid_h = static_cast<int>(h_px / s);
    const int grid_w = static_cast<int>(w_px / s);

    Eigen::MatrixXd patches(channels_, static_cast<Eigen::Index>(grid_h) * grid_w);
    for (int pi = 0; pi < grid_h; ++pi) {
        for (int pj = 0; pj < grid_w; ++pj) {
            const Eigen::Index cell = static_cast<Eigen::Index>(pi) * grid_w + pj;
            for (int dy = 0; dy < s; ++dy) {
                for (int dx = 0; dx < s; ++dx) {
                    const Eigen::Index y = static_cast<Eigen::Index>(pi) * s + dy;
                    const Eigen::Index x = static_cast<Eigen::Index>(pj) * s + dx;
                    for (int ch = 0; ch < 3; ++ch) {
                        patches(patch_slot(ch, dy, dx, s), cell) = color[static_cast<std::size_t>(ch)](y, x);
                    }
                    patches(patch_slot(3, dy, dx, s), cell) = alpha_codec(y, x);
                }
            }
        }
    }

    LatentGrid latent;
    latent.data = map_ * patches;
    latent.downsample = s;
    latent.grid_h = grid_h;
    latent.grid_w = grid_w;
    latent.origin_h = static_cast<int>(h_px);
    latent.origin_w = static_cast<int>(w_px);
    return latent;
}

LatentGrid Codec::encode(const RgbaLayer& layer) const {
    return encode_planes(layer.color, 2.0 * layer.alpha - 1.0);
}

LatentGrid Codec::encode(const OpaqueImage& image) const {
    Plane ones = Plane::Ones(image.height(), image.width());
    return encode_planes(image.color, ones);
}

RgbaLayer Codec::decode(const LatentGrid& latent) const {
    const int s = downsample_;
    if (latent.channels() != channels_) {
        throw DimensionError("decode: latent has " + std::to_string(latent.channels()) +
                             " channels, codec expects " + std::to_string(channels_));
    }
    if (latent.grid_h * s != latent.origin_h || latent.grid_w * s != latent.origin_w ||
        latent.data.cols() != static_cast<Eigen::Index>(latent.grid_h) * latent.grid_w) {
        throw DimensionError("decode: inconsistent latent grid metadata");
    }

    Eigen::MatrixXd patches = map_.transpose() * latent.data;

    RgbaLayer layer = make_layer(latent.origin_h, latent.origin_w);
    for (int pi = 0; pi < latent.grid_h; ++pi) {
        for (int pj = 0; pj < latent.grid_w; ++pj) {
            const Eigen::Index cell = static_cast<Eigen::Index>(pi) * latent.grid_w + pj;
            for (int dy = 0; dy < s; ++dy) {
                for (int dx = 0; dx < s; ++dx) {
                    const Eigen::Index y = static_cast<Eigen::Index>(pi) * s + dy;
                    const Eigen::Index x = static_cast<Eigen::Index>(pj) * s + dx;
                    for (int ch = 0; ch < 3; ++ch) {
                        double v = patches(patch_slot(ch, dy, dx, s), cell);
                        layer.color[static_cast<std::size_t>(ch)](y, x) = std::clamp(v, -1.0, 1.0);
                    }
                    double a = 0.5 * (patches(patch_slot(3, dy, dx, s), cell) + 1.0);
                    layer.alpha(y, x) = std::clamp(a, 0.0, 1.0);
                }
            }
        }
    }
    return layer;
}

}  // namespace limecross
