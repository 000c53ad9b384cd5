#pragma once

#include <filesystem>
#include <optional>

#include "echodfkd/data_model.hpp"
#include "echodfkd/unet.hpp"

namespace echodfkd {

inline constexpr int64_t kParamBudget = 4'000'000;
// Published teacher cost for report tables.
inline constexpr double kTeacherGflopsPerFrame = 7.84;

struct ConvLSTMCellConfig {
    int in_channels = 1;
    int hidden_channels = 8;
    int kernel_size = 3;
    bool uses_peephole = false;

    void validate() const;
};

struct ModelConfig {
    int num_blocks = 2;       // b in 1..4
    int layers_per_block = 1; // l in 1..4
    std::vector<int> channel_widths;  // defaults to [16,24,32,40][:b]
    bool residual_last_block = false;
    int input_h = 64, input_w = 64;
    double threshold = 0.5;  // filled by calibration

    void validate() const;
    std::vector<int> widths_or_default() const;
    std::string family_name() const;  // "B{b}_l{l}"
    static std::vector<int> default_widths(int b);
};

int64_t param_count(const ModelConfig& config);
// Analytic per-frame cost; multiply-accumulate counted as 2 FLOPs,
// nonlinearities and elementwise ops as 1 FLOP per element.
double flops_estimate_gflops(const ModelConfig& config, int h, int w);

using Model = net::UNet<float>;
using ModelState = net::NetState<float>;

net::NetLayout make_layout(const ModelConfig& config);

// Deterministic initialization; throws BudgetError above 4M parameters.
Model build_model(const ModelConfig& config, uint64_t seed);

// Strictly causal frame-by-frame inference. Prepadding repeats frame 0
// and drops the corresponding outputs.
SoftMaskSequence forward(const Model& model, const ModelConfig& config,
                         const VideoClip& clip, int prepad_frames = 0);

// ---- standalone ConvLSTM cell (scalar-generic, used by gradient checks) ----

template <typename S>
struct ConvLSTMCell {
    ConvLSTMCellConfig config;
    net::CellSpec spec;
    std::vector<S> params, grads;
};

template <typename S>
ConvLSTMCell<S> make_convlstm_cell(const ConvLSTMCellConfig& config, uint64_t seed) {
    config.validate();
    ConvLSTMCell<S> cell;
    cell.config = config;
    net::CellSpec& sp = cell.spec;
    sp.in_ch = config.in_channels;
    sp.hid = config.hidden_channels;
    sp.gates.in_ch = sp.in_ch + sp.hid;
    sp.gates.out_ch = 4 * sp.hid;
    sp.gates.k = config.kernel_size;
    sp.gates.w_off = 0;
    sp.gates.b_off = sp.gates.w_size();
    size_t total = sp.gates.b_off + sp.gates.out_ch;
    sp.peephole = config.uses_peephole;
    if (sp.peephole) {
        sp.peep_off = total;
        total += 3 * static_cast<size_t>(sp.hid);
    }
    cell.params.assign(total, S(0));
    cell.grads.assign(total, S(0));
    std::mt19937_64 rng(seed);
    double limit = std::sqrt(3.0 / (sp.gates.in_ch * sp.gates.k * sp.gates.k));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (size_t i = 0; i < sp.gates.w_size(); ++i)
        cell.params[i] = static_cast<S>(dist(rng));
    if (sp.peephole) {
        std::uniform_real_distribution<double> pd(-0.1, 0.1);
        for (size_t i = 0; i < 3 * static_cast<size_t>(sp.hid); ++i)
            cell.params[sp.peep_off + i] = static_cast<S>(pd(rng));
    }
    return cell;
}

template <typename S>
Tensor<S> convlstm_step(const ConvLSTMCell<S>& cell, const Tensor<S>& input,
                        Tensor<S>& hidden, Tensor<S>& cstate,
                        net::CellCache<S>* cache = nullptr) {
    net::Workspace<S> ws;
    net::cell_forward(cell.spec, cell.params.data(), input, hidden, cstate, ws, cache);
    return hidden;
}

// ---- checkpoints ----

struct CheckpointMeta {
    ModelConfig config;
    uint64_t seed = 0;
    int epoch = -1;
    double val_loss = 0.0;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const CheckpointMeta& meta);
std::pair<Model, CheckpointMeta> load_checkpoint(const std::filesystem::path& path);

std::string model_config_to_json_string(const ModelConfig& config);
ModelConfig model_config_from_json_string(const std::string& text);

}  // namespace echodfkd
