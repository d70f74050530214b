#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "limecross/errors.hpp"
#include "limecross/layers.hpp"

namespace limecross {

// Latent tensor for one image: C channels over an h x w grid, stored as a
// C x (h*w) matrix whose column i*w + j is grid cell (i, j).
struct LatentGrid {
    Eigen::MatrixXd data;
    int downsample = 1;
    int grid_h = 0;
    int grid_w = 0;
    int origin_h = 0;
    int origin_w = 0;

    int channels() const { return static_cast<int>(data.rows()); }
};

enum class StreamId { target, context };

// Token view of a latent: N = h*w rows of width d = C, row-major over the
// grid (token n corresponds to grid cell (n / w, n % w)).
struct TokenStream {
    Eigen::MatrixXd tokens;
    StreamId stream_id = StreamId::target;
    int grid_h = 0;
    int grid_w = 0;
};

TokenStream pack(const LatentGrid& latent, StreamId stream_id = StreamId::target);
LatentGrid unpack(const TokenStream& stream);

// Lossless latent codec: space-to-depth by factor s (so C = 4*s*s) followed
// by a fixed orthonormal linear map applied per patch vector. The alpha
// channel is remapped to 2a-1 on encode so all four channels share the
// [-1,1] range; decode inverts the remap and clamps.
class Codec {
public:
    // Orthonormal map built from the QR factorization of a seeded Gaussian
    // matrix, with column signs fixed so the construction is unambiguous.
    Codec(int downsample, std::uint64_t seed);

    // Identity patch map; useful anywhere the space-to-depth layout itself
    // is under test.
    static Codec identity(int downsample);

    LatentGrid encode(const RgbaLayer& layer) const;
    LatentGrid encode(const OpaqueImage& image) const;
    RgbaLayer decode(const LatentGrid& latent) const;

    int downsample() const { return downsample_; }
    int channels() const { return channels_; }
    std::uint64_t seed() const { return seed_; }
    const Eigen::MatrixXd& patch_map() const { return map_; }

private:
    Codec(int downsample, std::uint64_t seed, Eigen::MatrixXd map);

    LatentGrid encode_planes(const std::array<Plane, 3>& color, const Plane& alpha_codec) const;

    int downsample_;
    int channels_;
    std::uint64_t seed_;
    Eigen::MatrixXd map_;
};

}  // namespace limecross
