#include <benchmark/benchmark.h>

#include <random>

#include "echodfkd/model.hpp"
#include "echodfkd/phantom.hpp"
#include "echodfkd/phase_detect.hpp"
#include "echodfkd/seg_metrics.hpp"

using namespace echodfkd;

namespace {

VideoClip random_clip(int t, int hw, uint64_t seed) {
    VideoClip clip;
    clip.id = "bench";
    clip.fps = 50.0;
    clip.frames = Tensor<float>(t, 1, hw, hw);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& v : clip.frames.v) v = u(rng);
    return clip;
}

void BM_ForwardFrame(benchmark::State& state) {
    ModelConfig cfg;
    cfg.num_blocks = static_cast<int>(state.range(0));
    cfg.layers_per_block = 1;
    Model m = build_model(cfg, 1);
    VideoClip clip = random_clip(1, 64, 2);
    ModelState st;
    st.reset(m.layout, 1, 64, 64);
    net::Workspace<float> ws;
    for (auto _ : state) {
        Tensor<float> out = m.infer_frame(clip.frames, st, ws);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ForwardFrame)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_ConvLSTMCellStep(benchmark::State& state) {
    ConvLSTMCellConfig cfg;
    cfg.in_channels = 16;
    cfg.hidden_channels = 16;
    auto cell = make_convlstm_cell<float>(cfg, 3);
    Tensor<float> x(1, 16, 64, 64), h(1, 16, 64, 64), c(1, 16, 64, 64);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (auto& v : x.v) v = u(rng);
    net::Workspace<float> ws;
    for (auto _ : state) {
        net::cell_forward(cell.spec, cell.params.data(), x, h, c, ws,
                          static_cast<net::CellCache<float>*>(nullptr));
        benchmark::DoNotOptimize(h.data());
    }
}
BENCHMARK(BM_ConvLSTMCellStep)->Unit(benchmark::kMillisecond);

void BM_DiceFrame(benchmark::State& state) {
    std::mt19937_64 rng(5);
    BinaryMaskSequence a, b;
    a.t = b.t = 1;
    a.h = b.h = a.w = b.w = 112;
    a.masks.resize(112 * 112);
    b.masks.resize(112 * 112);
    for (auto& v : a.masks) v = rng() % 2;
    for (auto& v : b.masks) v = rng() % 2;
    for (auto _ : state) benchmark::DoNotOptimize(dice_frame(a, 0, b, 0));
}
BENCHMARK(BM_DiceFrame);

void BM_PhantomClip(benchmark::State& state) {
    PhantomParams p;
    p.t = 32;  // must cover a full default-period beat
    for (auto _ : state) {
        PhantomClip pc = generate_phantom(p, "bench");
        benchmark::DoNotOptimize(pc.clip.frames.data());
    }
    state.SetItemsProcessed(state.iterations() * p.t);
}
BENCHMARK(BM_PhantomClip)->Unit(benchmark::kMillisecond);

void BM_DetectExtreme(benchmark::State& state) {
    AreaSeries s;
    s.fps = 50.0;
    std::mt19937_64 rng(6);
    for (int i = 0; i < 256; ++i)
        s.values.push_back(static_cast<double>(rng() % 500));
    for (auto _ : state)
        benchmark::DoNotOptimize(detect_extreme_frame(s, 100, PhaseMode::ES));
}
BENCHMARK(BM_DetectExtreme);

}  // namespace

BENCHMARK_MAIN();
