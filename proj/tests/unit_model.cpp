#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "echodfkd/csv.hpp"
#include "echodfkd/model.hpp"
#include "echodfkd/phantom.hpp"

using namespace echodfkd;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() / ("echodfkd_test_" + tag);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// mixed criterion: |a-b| <= tol*max(|a|,|b|) + tol*1e-4 for tol=1e-4,
// so sub-1e-5 gradients are judged absolutely (FD noise floor ~1e-9)
double rel_err(double a, double b) {
    return std::abs(a - b) / (std::max(std::abs(a), std::abs(b)) + 1e-4);
}

// independent closed-form parameter arithmetic for the B{b}_l{l} family
int64_t oracle_param_count(int blocks, int layers, std::vector<int> w,
                           bool residual) {
    auto conv = [](int in, int out, int k) {
        return static_cast<int64_t>(in) * out * k * k + out;
    };
    int64_t total = 0;
    for (int b = 0; b < blocks; ++b)
        for (int j = 0; j < layers; ++j) {
            int in = j == 0 ? (b == 0 ? 1 : w[b - 1]) : w[b];
            total += conv(in + w[b], 4 * w[b], 3);
        }
    if (residual) {
        int in = blocks == 1 ? 1 : w[blocks - 2];
        if (in != w[blocks - 1]) total += conv(in, w[blocks - 1], 1);
    }
    for (int j = 0; j < blocks; ++j) {
        int level = blocks - 1 - j;
        int in = j == 0 ? w[blocks - 1] : w[level + 1];
        total += conv(in, w[level], 3) + conv(2 * w[level], w[level], 3);
    }
    total += conv(w[0], 1, 1);
    return total;
}

// scalar loss sum(weights * h_t) over a short double-precision rollout
double cell_rollout_loss(const net::CellSpec& spec, const std::vector<double>& params,
                         const std::vector<Tensor<double>>& xs,
                         const std::vector<Tensor<double>>& weights) {
    net::Workspace<double> ws;
    Tensor<double> h(1, spec.hid, xs[0].h, xs[0].w), c = h;
    double loss = 0.0;
    for (size_t t = 0; t < xs.size(); ++t) {
        net::cell_forward(spec, params.data(), xs[t], h, c, ws,
                          static_cast<net::CellCache<double>*>(nullptr));
        for (size_t i = 0; i < h.size(); ++i) loss += weights[t].v[i] * h.v[i];
    }
    return loss;
}

void gradcheck_cell(bool peephole) {
    ConvLSTMCellConfig cfg;
    cfg.in_channels = 2;
    cfg.hidden_channels = 3;
    cfg.uses_peephole = peephole;
    auto cell = make_convlstm_cell<double>(cfg, 42);

    int T = 3, H = 5, W = 6;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Tensor<double>> xs, wts;
    for (int t = 0; t < T; ++t) {
        xs.emplace_back(1, 2, H, W);
        wts.emplace_back(1, 3, H, W);
        for (auto& v : xs.back().v) v = u(rng);
        for (auto& v : wts.back().v) v = u(rng);
    }

    // analytic gradient via cached forward + reverse sweep
    net::Workspace<double> ws;
    Tensor<double> h(1, 3, H, W), c = h;
    std::vector<net::CellCache<double>> caches(T);
    for (int t = 0; t < T; ++t)
        net::cell_forward(cell.spec, cell.params.data(), xs[t], h, c, ws, &caches[t]);

    std::fill(cell.grads.begin(), cell.grads.end(), 0.0);
    Tensor<double> dh(1, 3, H, W), dc(1, 3, H, W);
    for (int t = T - 1; t >= 0; --t) {
        for (size_t i = 0; i < dh.size(); ++i) dh.v[i] += wts[t].v[i];
        Tensor<double> dx(1, 2, H, W);
        net::cell_backward(cell.spec, cell.params.data(), caches[t], dh, dc,
                           cell.grads.data(), dx, ws);
    }

    double eps = 1e-6, worst = 0.0;
    for (size_t p = 0; p < cell.params.size(); ++p) {
        double orig = cell.params[p];
        cell.params[p] = orig + eps;
        double lp = cell_rollout_loss(cell.spec, cell.params, xs, wts);
        cell.params[p] = orig - eps;
        double lm = cell_rollout_loss(cell.spec, cell.params, xs, wts);
        cell.params[p] = orig;
        worst = std::max(worst, rel_err(cell.grads[p], (lp - lm) / (2 * eps)));
    }
    CHECK(worst <= 1e-4);
}

double model_rollout_loss(net::UNet<double>& m, const std::vector<Tensor<double>>& xs,
                          const std::vector<Tensor<double>>& wts) {
    net::NetState<double> st;
    st.reset(m.layout, 1, xs[0].h, xs[0].w);
    net::Workspace<double> ws;
    double loss = 0.0;
    for (size_t t = 0; t < xs.size(); ++t) {
        Tensor<double> p = m.infer_frame(xs[t], st, ws);
        for (size_t i = 0; i < p.size(); ++i) loss += wts[t].v[i] * p.v[i];
    }
    return loss;
}

void gradcheck_model(const ModelConfig& cfg, uint64_t seed) {
    net::NetLayout lo = make_layout(cfg);
    REQUIRE(lo.num_params <= 5000);
    auto m = net::build_unet<double>(lo, seed);

    int T = 2, H = 8, W = 8;
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Tensor<double>> xs, wts;
    for (int t = 0; t < T; ++t) {
        xs.emplace_back(1, 1, H, W);
        wts.emplace_back(1, 1, H, W);
        for (auto& v : xs.back().v) v = u(rng);
        for (auto& v : wts.back().v) v = 2.0 * u(rng) - 1.0;
    }

    net::NetState<double> st;
    st.reset(lo, 1, H, W);
    net::Workspace<double> ws;
    std::vector<net::FrameCache<double>> caches(T);
    std::vector<Tensor<double>> preds;
    for (int t = 0; t < T; ++t)
        preds.push_back(m.forward_frame(xs[t], st, ws, &caches[t]));

    m.zero_grads();
    std::vector<std::vector<Tensor<double>>> dhc(lo.blocks), dcc(lo.blocks);
    for (int b = 0; b < lo.blocks; ++b)
        for (int j = 0; j < lo.layers; ++j) {
            dhc[b].emplace_back(1, lo.widths[b], H >> b, W >> b);
            dcc[b].emplace_back(1, lo.widths[b], H >> b, W >> b);
        }
    for (int t = T - 1; t >= 0; --t) {
        Tensor<double> dpre(1, 1, H, W);
        for (size_t i = 0; i < dpre.size(); ++i)
            dpre.v[i] = wts[t].v[i] * preds[t].v[i] * (1.0 - preds[t].v[i]);
        m.backward_frame(caches[t], dpre, dhc, dcc, ws);
    }

    double eps = 1e-6, worst = 0.0;
    for (size_t p = 0; p < m.params.size(); ++p) {
        double orig = m.params[p];
        m.params[p] = orig + eps;
        double lp = model_rollout_loss(m, xs, wts);
        m.params[p] = orig - eps;
        double lm = model_rollout_loss(m, xs, wts);
        m.params[p] = orig;
        worst = std::max(worst, rel_err(m.grads[p], (lp - lm) / (2 * eps)));
    }
    CHECK(worst <= 1e-4);
}

}  // namespace

TEST_CASE("cell gradcheck, plain and peephole") {
    gradcheck_cell(false);
    gradcheck_cell(true);
}

TEST_CASE("tiny full-model gradcheck (<=5k params)") {
    ModelConfig plain;
    plain.num_blocks = 2;
    plain.layers_per_block = 1;
    plain.channel_widths = {2, 3};
    gradcheck_model(plain, 10);

    ModelConfig res_proj = plain;
    res_proj.residual_last_block = true;  // 2 != 3 -> 1x1 projection path
    gradcheck_model(res_proj, 11);

    ModelConfig res_id = plain;
    res_id.channel_widths = {3, 3};  // identity residual path
    res_id.residual_last_block = true;
    gradcheck_model(res_id, 12);

    ModelConfig stacked = plain;
    stacked.num_blocks = 1;
    stacked.layers_per_block = 2;
    stacked.channel_widths = {3};
    gradcheck_model(stacked, 13);
}

TEST_CASE("convlstm_step basics") {
    ConvLSTMCellConfig cfg;
    cfg.in_channels = 1;
    cfg.hidden_channels = 2;
    auto cell = make_convlstm_cell<double>(cfg, 3);

    // zero everything -> output zero
    std::fill(cell.params.begin(), cell.params.end(), 0.0);
    Tensor<double> x(1, 1, 4, 4), h(1, 2, 4, 4), c(1, 2, 4, 4);
    convlstm_step(cell, x, h, c);
    for (double v : h.v) CHECK(v == doctest::Approx(0.0));

    // saturated forget gate behaves as pure memory: c' ~= c + i*g
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& v : cell.params) v = u(rng);
    for (int ch = 0; ch < 2; ++ch)
        cell.params[cell.spec.gates.b_off + cfg.hidden_channels + ch] = 20.0;  // forget bias
    for (auto& v : x.v) v = u(rng);
    for (auto& v : c.v) v = u(rng);
    std::fill(h.v.begin(), h.v.end(), 0.0);
    Tensor<double> c_before = c;

    net::CellCache<double> cc;
    net::Workspace<double> ws;
    net::cell_forward(cell.spec, cell.params.data(), x, h, c, ws, &cc);
    for (size_t i = 0; i < c.size(); ++i) {
        double expect = c_before.v[i] + cc.ia.v[i] * cc.ga.v[i];
        CHECK(std::abs(c.v[i] - expect) <= 1e-6);
    }

    // shape mismatch reporting
    Tensor<double> bad(1, 2, 4, 4);
    CHECK_THROWS_AS(convlstm_step(cell, bad, h, c), ShapeError);
}

TEST_CASE("peephole parameters change the output") {
    ConvLSTMCellConfig cfg;
    cfg.in_channels = 1;
    cfg.hidden_channels = 2;
    cfg.uses_peephole = true;
    auto cell = make_convlstm_cell<double>(cfg, 9);
    Tensor<double> x(1, 1, 4, 4), h(1, 2, 4, 4), c(1, 2, 4, 4);
    for (size_t i = 0; i < c.size(); ++i) c.v[i] = 0.5;
    for (size_t i = 0; i < x.size(); ++i) x.v[i] = 0.3;
    Tensor<double> h1 = h, c1 = c;
    convlstm_step(cell, x, h1, c1);
    for (size_t i = 0; i < 3 * 2u; ++i) cell.params[cell.spec.peep_off + i] += 0.5;
    Tensor<double> h2 = h, c2 = c;
    convlstm_step(cell, x, h2, c2);
    CHECK(h1.v != h2.v);
}

TEST_CASE("param budget: 16 default configs match arithmetic oracle") {
    for (int b = 1; b <= 4; ++b)
        for (int l = 1; l <= 4; ++l) {
            ModelConfig cfg;
            cfg.num_blocks = b;
            cfg.layers_per_block = l;
            int64_t n = param_count(cfg);
            CHECK(n == oracle_param_count(b, l, ModelConfig::default_widths(b), false));
            CHECK(n <= kParamBudget);
        }
}

TEST_CASE("width doubling roughly quadruples parameters") {
    ModelConfig a, b;
    a.num_blocks = b.num_blocks = 2;
    a.layers_per_block = b.layers_per_block = 2;
    a.channel_widths = {16, 24};
    b.channel_widths = {32, 48};
    double ratio = static_cast<double>(param_count(b)) / param_count(a);
    CHECK(ratio >= 3.8);
    CHECK(ratio <= 4.0);
}

TEST_CASE("budget error and config validation") {
    ModelConfig big;
    big.num_blocks = 4;
    big.layers_per_block = 4;
    big.channel_widths = {128, 128, 128, 128};
    REQUIRE(param_count(big) > kParamBudget);
    CHECK_THROWS_AS(build_model(big, 0), BudgetError);

    ModelConfig bad;
    bad.num_blocks = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.num_blocks = 2;
    bad.channel_widths = {8};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("flops estimate sane") {
    ModelConfig small, big;
    small.num_blocks = 1;
    small.layers_per_block = 1;
    big.num_blocks = 4;
    big.layers_per_block = 2;
    double fs = flops_estimate_gflops(small, 64, 64);
    double fb = flops_estimate_gflops(big, 64, 64);
    CHECK(fs > 0.0);
    CHECK(fb > fs);
    CHECK(kTeacherGflopsPerFrame == doctest::Approx(7.84));
}

TEST_CASE("build determinism") {
    ModelConfig cfg;
    cfg.num_blocks = 2;
    cfg.layers_per_block = 1;
    Model a = build_model(cfg, 77), b = build_model(cfg, 77), c = build_model(cfg, 78);
    CHECK(a.params == b.params);
    CHECK(a.params != c.params);
}

TEST_CASE("forward basics: T=1, output range, shape error") {
    ModelConfig cfg;
    cfg.num_blocks = 2;
    cfg.layers_per_block = 1;
    cfg.channel_widths = {4, 6};
    Model m = build_model(cfg, 5);

    VideoClip clip;
    clip.id = "one";
    clip.fps = 50;
    clip.frames = Tensor<float>(1, 1, 16, 16);
    for (auto& v : clip.frames.v) v = 0.5f;
    SoftMaskSequence out = forward(m, cfg, clip);
    CHECK(out.masks.n == 1);
    for (float v : out.masks.v) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }

    VideoClip bad = clip;
    bad.frames = Tensor<float>(1, 1, 18, 18);  // not divisible by 4
    CHECK_THROWS_AS(forward(m, cfg, bad), ShapeError);
}

TEST_CASE("causality: future frames cannot change past outputs") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        ModelConfig cfg;
        cfg.num_blocks = 1 + static_cast<int>(rng() % 2);
        cfg.layers_per_block = 1 + static_cast<int>(rng() % 2);
        cfg.channel_widths.assign(cfg.num_blocks, 3 + static_cast<int>(rng() % 3));
        cfg.residual_last_block = rng() % 2;
        Model m = build_model(cfg, rng());

        int T = 6;
        VideoClip clip;
        clip.id = "c";
        clip.fps = 50;
        clip.frames = Tensor<float>(T, 1, 16, 16);
        std::uniform_real_distribution<float> u(0.0f, 1.0f);
        for (auto& v : clip.frames.v) v = u(rng);

        int t = 1 + static_cast<int>(rng() % (T - 2));
        SoftMaskSequence base = forward(m, cfg, clip);

        VideoClip mut = clip;
        size_t hw = 16 * 16;
        for (size_t i = (t + 1) * hw; i < mut.frames.v.size(); ++i)
            mut.frames.v[i] = u(rng);
        SoftMaskSequence changed = forward(m, cfg, mut);

        CHECK(std::memcmp(base.masks.data(), changed.masks.data(),
                          (t + 1) * hw * sizeof(float)) == 0);
    }
}

TEST_CASE("checkpoint round trip is bit-exact") {
    auto dir = temp_dir("ckpt");
    ModelConfig cfg;
    cfg.num_blocks = 2;
    cfg.layers_per_block = 2;
    cfg.channel_widths = {4, 6};
    cfg.residual_last_block = true;
    cfg.threshold = 0.35;
    Model m = build_model(cfg, 123);

    CheckpointMeta meta;
    meta.config = cfg;
    meta.seed = 123;
    meta.epoch = 17;
    meta.val_loss = 0.125;
    save_checkpoint(dir / "m.ckpt", m, meta);

    auto [loaded, lm] = load_checkpoint(dir / "m.ckpt");
    REQUIRE(loaded.params.size() == m.params.size());
    CHECK(std::memcmp(loaded.params.data(), m.params.data(),
                      m.params.size() * sizeof(float)) == 0);
    CHECK(lm.epoch == 17);
    CHECK(lm.seed == 123);
    CHECK(lm.val_loss == doctest::Approx(0.125));
    CHECK(lm.config.threshold == doctest::Approx(0.35));
    CHECK(lm.config.channel_widths == cfg.channel_widths);
    CHECK(lm.config.residual_last_block);

    atomic_write(dir / "bad.ckpt", "NOPE****");
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), IoError);
}

TEST_CASE("model config json round trip") {
    ModelConfig cfg;
    cfg.num_blocks = 3;
    cfg.layers_per_block = 2;
    cfg.residual_last_block = true;
    cfg.threshold = 0.4;
    ModelConfig back = model_config_from_json_string(model_config_to_json_string(cfg));
    CHECK(back.num_blocks == 3);
    CHECK(back.layers_per_block == 2);
    CHECK(back.residual_last_block);
    CHECK(back.threshold == doctest::Approx(0.4));
    CHECK(back.widths_or_default() == cfg.widths_or_default());
    CHECK(cfg.family_name() == "B3_l2");
}
