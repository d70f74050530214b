#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Core>

namespace limecross {

// FNV-1a 64-bit hash.  Used wherever text has to influence seeding so that
// results are identical across platforms and standard library versions
// (std::hash makes no such promise).
std::uint64_t fnv1a64(std::string_view text);

// splitmix64 finalizer.  Cheap, well-distributed mixing of a 64-bit state.
std::uint64_t mix64(std::uint64_t x);

// Derive a child seed from a base seed and a salt.  Different salts give
// statistically independent streams; the same pair always gives the same
// seed.  The string overload hashes the salt first.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);
std::uint64_t derive_seed(std::uint64_t base, std::string_view salt);

// Deterministic standard-normal source.  One mt19937_64 engine, values
// handed out one at a time; fill() writes matrices in column-major order
// (Eigen's default storage), so a given seed always produces the same
// matrix contents.
class GaussianSource {
public:
    explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}

    double next() { return dist_(engine_); }

    void fill(Eigen::Ref<Eigen::MatrixXd> out) {
        double* data = out.data();
        for (Eigen::Index i = 0; i < out.size(); ++i) data[i] = dist_(engine_);
    }

    Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        fill(m);
        return m;
    }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace limecross
