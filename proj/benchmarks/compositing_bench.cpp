#include <random>

#include <benchmark/benchmark.h>

#include "limecross/bench.hpp"
#include "limecross/codec.hpp"
#include "limecross/layers.hpp"

namespace {

using namespace limecross;

LayeredScene random_scene(int layers, Eigen::Index size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> color(-1.0, 1.0);
    std::uniform_real_distribution<double> alpha(0.0, 1.0);
    LayeredScene scene;
    scene.height = size;
    scene.width = size;
    for (int k = 0; k < layers; ++k) {
        RgbaLayer layer = make_layer(size, size, "l" + std::to_string(k));
        for (auto& plane : layer.color) {
            plane = Plane::NullaryExpr(size, size, [&]() { return color(rng); });
        }
        layer.alpha = Plane::NullaryExpr(size, size, [&]() { return alpha(rng); });
        scene.layers.push_back(std::move(layer));
        scene.prompts.push_back({"src", "tgt"});
    }
    return scene;
}

void BM_CompositeScene(benchmark::State& state) {
    const LayeredScene scene = random_scene(static_cast<int>(state.range(0)), 256, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(composite_scene(scene, kMidGray));
    }
}
BENCHMARK(BM_CompositeScene)->Arg(3)->Arg(5);

void BM_OpaqueContext(benchmark::State& state) {
    const LayeredScene scene = random_scene(3, 256, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(opaque_context(scene, 1));
    }
}
BENCHMARK(BM_OpaqueContext);

void BM_CodecRoundTrip(benchmark::State& state) {
    const LayeredScene scene = random_scene(1, 128, 3);
    const Codec codec(8, 42);
    for (auto _ : state) {
        benchmark::DoNotOptimize(codec.decode(codec.encode(scene.layers[0])));
    }
}
BENCHMARK(BM_CodecRoundTrip);

void BM_AlphaFrechet(benchmark::State& state) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> alpha(0.0, 1.0);
    std::vector<Plane> a;
    std::vector<Plane> b;
    for (int i = 0; i < 100; ++i) {
        a.push_back(Plane::NullaryExpr(32, 32, [&]() { return alpha(rng); }));
        b.push_back(Plane::NullaryExpr(32, 32, [&]() { return alpha(rng); }));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(alpha_frechet(a, b));
    }
}
BENCHMARK(BM_AlphaFrechet);

}  // namespace
