#include "echodfkd/model.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace echodfkd {

using nlohmann::json;

void ConvLSTMCellConfig::validate() const {
    if (kernel_size % 2 == 0 || kernel_size < 1)
        throw ConfigError("kernel_size must be odd and positive");
    if (in_channels < 1 || hidden_channels < 1)
        throw ConfigError("channel counts must be >= 1");
}

std::vector<int> ModelConfig::default_widths(int b) {
    std::vector<int> base{16, 24, 32, 40};
    return std::vector<int>(base.begin(), base.begin() + b);
}

std::vector<int> ModelConfig::widths_or_default() const {
    return channel_widths.empty() ? default_widths(num_blocks) : channel_widths;
}

std::string ModelConfig::family_name() const {
    return "B" + std::to_string(num_blocks) + "_l" + std::to_string(layers_per_block);
}

void ModelConfig::validate() const {
    if (num_blocks < 1 || num_blocks > 4)
        throw ConfigError("num_blocks must be in 1..4");
    if (layers_per_block < 1 || layers_per_block > 4)
        throw ConfigError("layers_per_block must be in 1..4");
    if (!channel_widths.empty() &&
        static_cast<int>(channel_widths.size()) != num_blocks)
        throw ConfigError("channel_widths length must equal num_blocks");
    for (int wdt : widths_or_default())
        if (wdt < 1) throw ConfigError("channel widths must be >= 1");
    if (threshold <= 0.0 || threshold >= 1.0)
        throw ConfigError("threshold must be in (0,1)");
}

net::NetLayout make_layout(const ModelConfig& config) {
    config.validate();
    return net::NetLayout::make(config.num_blocks, config.layers_per_block,
                                config.widths_or_default(),
                                config.residual_last_block);
}

int64_t param_count(const ModelConfig& config) {
    return static_cast<int64_t>(make_layout(config).num_params);
}

double flops_estimate_gflops(const ModelConfig& config, int h, int w) {
    net::NetLayout lo = make_layout(config);
    double flops = 0.0;
    auto conv_flops = [](const net::ConvSpec& c, double hw) {
        return 2.0 * c.k * c.k * c.in_ch * c.out_ch * hw;
    };
    for (int b = 0; b < lo.blocks; ++b) {
        double hw = static_cast<double>(h >> b) * (w >> b);
        for (const auto& cell : lo.enc[b]) {
            flops += conv_flops(cell.gates, hw);
            // gate nonlinearities + cell/hidden elementwise updates
            flops += 9.0 * cell.hid * hw;
        }
        flops += static_cast<double>(h >> (b + 1)) * (w >> (b + 1)) * 4.0;  // pool
    }
    if (lo.res_proj_needed) {
        double hw = static_cast<double>(h >> (lo.blocks - 1)) * (w >> (lo.blocks - 1));
        flops += conv_flops(lo.res_proj, hw) + lo.widths[lo.blocks - 1] * hw;
    }
    for (int j = 0; j < lo.blocks; ++j) {
        int level = lo.blocks - 1 - j;
        double hw = static_cast<double>(h >> level) * (w >> level);
        flops += hw * lo.dec[j].up.in_ch;  // nearest upsample copies
        flops += conv_flops(lo.dec[j].up, hw) + lo.dec[j].up.out_ch * hw;
        flops += conv_flops(lo.dec[j].merge, hw) + lo.dec[j].merge.out_ch * hw;
    }
    flops += conv_flops(lo.head, static_cast<double>(h) * w) +
             static_cast<double>(h) * w;  // sigmoid
    return flops / 1e9;
}

Model build_model(const ModelConfig& config, uint64_t seed) {
    net::NetLayout lo = make_layout(config);
    if (static_cast<int64_t>(lo.num_params) > kParamBudget)
        throw BudgetError("parameter count " + std::to_string(lo.num_params) +
                          " exceeds budget " + std::to_string(kParamBudget));
    return net::build_unet<float>(lo, seed);
}

SoftMaskSequence forward(const Model& model, const ModelConfig& config,
                         const VideoClip& clip, int prepad_frames) {
    if (prepad_frames < 0) throw InputError("prepad_frames must be >= 0");
    int div = 1 << config.num_blocks;
    if (clip.height() % div || clip.width() % div)
        throw ShapeError("clip " + clip.id + ": H,W must be divisible by " +
                         std::to_string(div));

    ModelState state;
    state.reset(model.layout, 1, clip.height(), clip.width());
    net::Workspace<float> ws;

    SoftMaskSequence out;
    out.clip_id = clip.id;
    out.masks = Tensor<float>(clip.t(), 1, clip.height(), clip.width());

    size_t hw = static_cast<size_t>(clip.height()) * clip.width();
    Tensor<float> frame(1, 1, clip.height(), clip.width());
    auto load_frame = [&](int t) {
        std::copy(clip.frames.data() + static_cast<size_t>(t) * hw,
                  clip.frames.data() + static_cast<size_t>(t + 1) * hw,
                  frame.data());
    };
    for (int t = 0; t < prepad_frames; ++t) {
        load_frame(0);
        model.infer_frame(frame, state, ws);  // warm-up outputs dropped
    }
    for (int t = 0; t < clip.t(); ++t) {
        load_frame(t);
        Tensor<float> pred = model.infer_frame(frame, state, ws);
        std::copy(pred.data(), pred.data() + hw,
                  out.masks.data() + static_cast<size_t>(t) * hw);
    }
    return out;
}

// ---- config json ----

namespace {

json config_to_json(const ModelConfig& c) {
    return json{{"num_blocks", c.num_blocks},
                {"layers_per_block", c.layers_per_block},
                {"channel_widths", c.widths_or_default()},
                {"residual_last_block", c.residual_last_block},
                {"input_h", c.input_h},
                {"input_w", c.input_w},
                {"threshold", c.threshold}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.num_blocks = j.at("num_blocks").get<int>();
    c.layers_per_block = j.at("layers_per_block").get<int>();
    if (j.contains("channel_widths"))
        c.channel_widths = j.at("channel_widths").get<std::vector<int>>();
    c.residual_last_block = j.value("residual_last_block", false);
    c.input_h = j.value("input_h", 64);
    c.input_w = j.value("input_w", 64);
    c.threshold = j.value("threshold", 0.5);
    c.validate();
    return c;
}

}  // namespace

std::string model_config_to_json_string(const ModelConfig& config) {
    return config_to_json(config).dump();
}

ModelConfig model_config_from_json_string(const std::string& text) {
    return config_from_json(json::parse(text));
}

// ---- checkpoints ----
// Layout: "EDFK", u32 little-endian header length, JSON header, f32 blob.

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const CheckpointMeta& meta) {
    const net::NetLayout& lo = model.layout;
    json manifest = json::array();
    auto add = [&](const std::string& name, const net::ConvSpec& cs) {
        manifest.push_back({{"name", name + ".w"},
                            {"shape", {cs.out_ch, cs.in_ch, cs.k, cs.k}},
                            {"offset", cs.w_off}});
        manifest.push_back(
            {{"name", name + ".b"}, {"shape", {cs.out_ch}}, {"offset", cs.b_off}});
    };
    for (int b = 0; b < lo.blocks; ++b)
        for (int j = 0; j < lo.layers; ++j)
            add("enc." + std::to_string(b) + "." + std::to_string(j) + ".gates",
                lo.enc[b][j].gates);
    if (lo.res_proj_needed) add("res_proj", lo.res_proj);
    for (int j = 0; j < lo.blocks; ++j) {
        add("dec." + std::to_string(j) + ".up", lo.dec[j].up);
        add("dec." + std::to_string(j) + ".merge", lo.dec[j].merge);
    }
    add("head", lo.head);

    json header{{"config", config_to_json(meta.config)},
                {"seed", meta.seed},
                {"epoch", meta.epoch},
                {"val_loss", meta.val_loss},
                {"threshold", meta.config.threshold},
                {"params", manifest},
                {"num_params", lo.num_params}};
    std::string htext = header.dump();

    std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out.write("EDFK", 4);
        uint32_t len = static_cast<uint32_t>(htext.size());
        out.write(reinterpret_cast<const char*>(&len), 4);
        out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
        out.write(reinterpret_cast<const char*>(model.params.data()),
                  static_cast<std::streamsize>(model.params.size() * sizeof(float)));
    }
    std::filesystem::rename(tmp, path);
}

std::pair<Model, CheckpointMeta> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (std::memcmp(magic, "EDFK", 4) != 0)
        throw IoError(path.string() + ": not a checkpoint file");
    uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    std::string htext(len, '\0');
    in.read(htext.data(), len);
    json header = json::parse(htext);

    CheckpointMeta meta;
    meta.config = config_from_json(header.at("config"));
    meta.seed = header.at("seed").get<uint64_t>();
    meta.epoch = header.at("epoch").get<int>();
    meta.val_loss = header.at("val_loss").get<double>();

    Model model;
    model.layout = make_layout(meta.config);
    if (model.layout.num_params != header.at("num_params").get<size_t>())
        throw IoError(path.string() + ": parameter count mismatch");
    model.params.resize(model.layout.num_params);
    model.grads.assign(model.layout.num_params, 0.0f);
    in.read(reinterpret_cast<char*>(model.params.data()),
            static_cast<std::streamsize>(model.params.size() * sizeof(float)));
    if (!in) throw IoError(path.string() + ": truncated blob");
    return {std::move(model), meta};
}

}  // namespace echodfkd
