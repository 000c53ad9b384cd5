#include "echodfkd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "echodfkd/csv.hpp"
#include "echodfkd/image_io.hpp"
#include "echodfkd/seg_metrics.hpp"

namespace echodfkd {

namespace {

constexpr double kDiceSmooth = 1.0;
constexpr float kBceEps = 1e-7f;

uint64_t fnv1a(const std::string& s, uint64_t seed) {
    uint64_t h = 14695981039346656037ull ^ seed;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::DICE: return "DICE";
        case LossKind::BCE: return "BCE";
        case LossKind::DICE_PLUS_BCE: return "DICE_PLUS_BCE";
    }
    return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "DICE") return LossKind::DICE;
    if (s == "BCE") return LossKind::BCE;
    if (s == "DICE_PLUS_BCE") return LossKind::DICE_PLUS_BCE;
    throw ConfigError("unknown loss '" + s + "'");
}

void TrainingConfig::validate() const {
    if (sequence_length < 2) throw ConfigError("sequence_length must be >= 2");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
}

// ---- teacher ----

AnalyticPhantomTeacher::AnalyticPhantomTeacher(std::filesystem::path gt_dir,
                                               uint64_t seed)
    : gt_dir_(std::move(gt_dir)), seed_(seed) {}

SoftMaskSequence AnalyticPhantomTeacher::infer(const VideoClip& clip) {
    BinaryMaskSequence gt = load_binary_masks(gt_dir_, clip.id);
    if (gt.t != clip.t() || gt.h != clip.height() || gt.w != clip.width())
        throw ShapeError("ground truth shape mismatch for clip " + clip.id);

    SoftMaskSequence out;
    out.clip_id = clip.id;
    out.masks = Tensor<float>(gt.t, 1, gt.h, gt.w);
    size_t hw = static_cast<size_t>(gt.h) * gt.w;
    std::vector<uint8_t> frame(hw), morphed(hw);
    for (int t = 0; t < gt.t; ++t) {
        std::copy(gt.masks.begin() + t * hw, gt.masks.begin() + (t + 1) * hw,
                  frame.begin());
        switch (fnv1a(clip.id + "#" + std::to_string(t), seed_) % 3) {
            case 0:
                morphed = frame;
                break;
            case 1:
                dilate_chebyshev(frame.data(), morphed.data(), gt.h, gt.w, 1);
                break;
            default:
                erode_chebyshev(frame.data(), morphed.data(), gt.h, gt.w, 1);
                break;
        }
        for (size_t i = 0; i < hw; ++i)
            out.masks.v[t * hw + i] = morphed[i] ? 1.0f : 0.0f;
    }
    return out;
}

// ---- pseudo-label cache ----

PseudoLabelResult generate_pseudolabels(TeacherInterface& teacher,
                                        const DatasetManifest& manifest,
                                        const std::filesystem::path& data_dir,
                                        const std::filesystem::path& cache_dir) {
    PseudoLabelResult res;
    res.store_dir = cache_dir / (teacher.name() + "-v" + teacher.version());
    for (const auto& rec : manifest.records) {
        if (soft_masks_exist(res.store_dir, rec.clip_id)) {
            ++res.skipped_existing;
            continue;
        }
        try {
            VideoClip clip = load_clip(data_dir, rec.clip_id, rec.fps);
            SoftMaskSequence masks = teacher.infer(clip);
            if (masks.masks.n != clip.t() || masks.masks.h != clip.height() ||
                masks.masks.w != clip.width())
                throw ShapeError("teacher output shape mismatch");
            for (float v : masks.masks.v)
                if (!(v >= 0.0f && v <= 1.0f))
                    throw InputError("teacher output outside [0,1]");
            masks.clip_id = rec.clip_id;
            save_soft_masks(masks, res.store_dir);
            ++res.generated;
        } catch (const std::exception& e) {
            res.skip_list.push_back({rec.clip_id, e.what()});
        }
    }
    return res;
}

// ---- losses ----

double dice_loss(const std::vector<float>& pred, const std::vector<float>& target) {
    if (pred.size() != target.size()) throw ShapeError("loss input size mismatch");
    double inter = 0.0, psum = 0.0, tsum = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        inter += static_cast<double>(pred[i]) * target[i];
        psum += pred[i];
        tsum += target[i];
    }
    return 1.0 - (2.0 * inter + kDiceSmooth) / (psum + tsum + kDiceSmooth);
}

double bce_loss(const std::vector<float>& pred, const std::vector<float>& target) {
    if (pred.size() != target.size()) throw ShapeError("loss input size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double p = std::clamp(pred[i], kBceEps, 1.0f - kBceEps);
        s -= target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
    }
    return s / static_cast<double>(pred.size());
}

namespace {

// Window loss over [B, L, H, W] predictions and derivative wrt the
// pre-sigmoid activations, normalized so the loss is a per-sample mean.
struct WindowLoss {
    double value = 0.0;
    // dpre[t] laid out like the per-frame prediction tensors
    std::vector<Tensor<float>> dpre;
};

WindowLoss window_loss(const std::vector<Tensor<float>>& preds,
                       const std::vector<Tensor<float>>& targets, LossKind kind) {
    int frames = static_cast<int>(preds.size());
    int nb = preds[0].n;
    size_t hw = static_cast<size_t>(preds[0].h) * preds[0].w;
    size_t per_sample = static_cast<size_t>(frames) * hw;

    double w_dice = kind == LossKind::DICE ? 1.0 : kind == LossKind::BCE ? 0.0 : 0.5;
    double w_bce = kind == LossKind::BCE ? 1.0 : kind == LossKind::DICE ? 0.0 : 0.5;

    WindowLoss out;
    out.dpre.reserve(frames);
    for (int t = 0; t < frames; ++t)
        out.dpre.emplace_back(nb, 1, preds[0].h, preds[0].w);

    for (int s = 0; s < nb; ++s) {
        double inter = 0.0, psum = 0.0, tsum = 0.0, bce = 0.0;
        for (int t = 0; t < frames; ++t) {
            const float* p = preds[t].data() + s * hw;
            const float* tgt = targets[t].data() + s * hw;
            for (size_t i = 0; i < hw; ++i) {
                inter += static_cast<double>(p[i]) * tgt[i];
                psum += p[i];
                tsum += tgt[i];
                double pc = std::clamp(p[i], kBceEps, 1.0f - kBceEps);
                bce -= tgt[i] * std::log(pc) + (1.0 - tgt[i]) * std::log(1.0 - pc);
            }
        }
        double num = 2.0 * inter + kDiceSmooth;
        double den = psum + tsum + kDiceSmooth;
        out.value += (w_dice * (1.0 - num / den) + w_bce * bce / per_sample) / nb;

        for (int t = 0; t < frames; ++t) {
            const float* p = preds[t].data() + s * hw;
            const float* tgt = targets[t].data() + s * hw;
            float* d = out.dpre[t].data() + s * hw;
            for (size_t i = 0; i < hw; ++i) {
                // d(dice)/dp, then fold sigmoid; BCE folds to p - t
                double ddice = (num - 2.0 * tgt[i] * den) / (den * den);
                double dp = w_dice * ddice * p[i] * (1.0 - p[i]) +
                            w_bce * (p[i] - tgt[i]) / static_cast<double>(per_sample);
                d[i] = static_cast<float>(dp / nb);
            }
        }
    }
    return out;
}

std::vector<Tensor<float>> zero_like_states(const net::NetLayout& lo, int n,
                                            int h, int w, bool /*unused*/) {
    std::vector<Tensor<float>> v;
    for (int b = 0; b < lo.blocks; ++b)
        for (int j = 0; j < lo.layers; ++j)
            v.emplace_back(n, lo.widths[b], h >> b, w >> b);
    return v;
}

double evaluate_val_loss(const Model& model, const ModelConfig& mcfg,
                         const std::vector<const ManifestRecord*>& val,
                         const std::filesystem::path& labels_dir,
                         const std::filesystem::path& data_dir,
                         const TrainingConfig& cfg) {
    double total = 0.0;
    int count = 0;
    net::Workspace<float> ws;
    for (const auto* rec : val) {
        VideoClip clip = load_clip(data_dir, rec->clip_id, rec->fps);
        SoftMaskSequence label = load_soft_masks(labels_dir, rec->clip_id);
        int frames = cfg.val_window > 0 ? std::min(cfg.val_window, clip.t())
                                        : clip.t();
        ModelState state;
        state.reset(model.layout, 1, clip.height(), clip.width());
        size_t hw = static_cast<size_t>(clip.height()) * clip.width();
        std::vector<float> pred(static_cast<size_t>(frames) * hw);
        Tensor<float> frame(1, 1, clip.height(), clip.width());
        for (int t = 0; t < frames; ++t) {
            std::copy(clip.frames.data() + t * hw, clip.frames.data() + (t + 1) * hw,
                      frame.data());
            Tensor<float> p = model.infer_frame(frame, state, ws);
            std::copy(p.data(), p.data() + hw, pred.data() + t * hw);
        }
        std::vector<float> tgt(label.masks.v.begin(),
                               label.masks.v.begin() + static_cast<size_t>(frames) * hw);
        double d = dice_loss(pred, tgt), b = bce_loss(pred, tgt);
        switch (cfg.loss) {
            case LossKind::DICE: total += d; break;
            case LossKind::BCE: total += b; break;
            case LossKind::DICE_PLUS_BCE: total += 0.5 * d + 0.5 * b; break;
        }
        ++count;
    }
    return total / count;
}

}  // namespace

std::string TrainingHistory::to_csv() const {
    std::string s = "epoch,train_loss,val_loss\n";
    for (size_t e = 0; e < train_loss.size(); ++e)
        s += std::to_string(e) + ',' + fmt_float(train_loss[e]) + ',' +
             fmt_float(val_loss[e]) + '\n';
    return s;
}

TrainResult train(const ModelConfig& student_config,
                  const std::filesystem::path& pseudolabel_dir,
                  const DatasetManifest& manifest,
                  const std::filesystem::path& data_dir,
                  const TrainingConfig& cfg) {
    cfg.validate();
    auto train_recs = manifest.split_records(Split::TRAIN);
    auto val_recs = manifest.split_records(Split::VAL);
    if (train_recs.empty()) throw ConfigError("TRAIN split is empty");
    if (val_recs.empty()) throw ConfigError("VAL split is empty");

    Model model = build_model(student_config, cfg.seed);
    std::vector<float> best_params = model.params;
    std::vector<float> velocity(model.params.size(), 0.0f);
    std::mt19937_64 rng(cfg.seed);
    net::Workspace<float> ws;

    TrainResult result;
    int decay_epoch = static_cast<int>(cfg.decay_at_fraction * cfg.max_epochs);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        double lr = cfg.learning_rate * (epoch >= decay_epoch ? cfg.decay_factor : 1.0);

        std::vector<const ManifestRecord*> order = train_recs;
        std::shuffle(order.begin(), order.end(), rng);
        if (cfg.clips_per_epoch > 0 &&
            cfg.clips_per_epoch < static_cast<int>(order.size()))
            order.resize(cfg.clips_per_epoch);

        double epoch_loss = 0.0;
        int steps = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t stop = std::min(order.size(), start + cfg.batch_size);
            int nb = static_cast<int>(stop - start);

            // assemble batch windows
            std::vector<VideoClip> clips;
            std::vector<SoftMaskSequence> labels;
            std::vector<int> starts;
            int win = cfg.sequence_length;
            for (size_t i = start; i < stop; ++i) {
                clips.push_back(load_clip(data_dir, order[i]->clip_id, order[i]->fps));
                labels.push_back(load_soft_masks(pseudolabel_dir, order[i]->clip_id));
                win = std::min(win, clips.back().t());
            }
            for (const auto& c : clips) {
                int maxs = c.t() - win;
                starts.push_back(maxs > 0
                                     ? static_cast<int>(rng() % (maxs + 1))
                                     : 0);
            }
            int hgt = clips[0].height(), wid = clips[0].width();
            size_t hw = static_cast<size_t>(hgt) * wid;

            ModelState state;
            state.reset(model.layout, nb, hgt, wid);
            std::vector<net::FrameCache<float>> caches(win);
            std::vector<Tensor<float>> preds(win), targets(win);
            for (int t = 0; t < win; ++t) {
                Tensor<float> frame(nb, 1, hgt, wid);
                targets[t] = Tensor<float>(nb, 1, hgt, wid);
                for (int s = 0; s < nb; ++s) {
                    int ft = starts[s] + t;
                    std::copy(clips[s].frames.data() + ft * hw,
                              clips[s].frames.data() + (ft + 1) * hw,
                              frame.data() + s * hw);
                    std::copy(labels[s].masks.data() + ft * hw,
                              labels[s].masks.data() + (ft + 1) * hw,
                              targets[t].data() + s * hw);
                }
                preds[t] = model.forward_frame(frame, state, ws, &caches[t]);
            }

            WindowLoss loss = window_loss(preds, targets, cfg.loss);
            if (!std::isfinite(loss.value))
                throw DivergenceError("non-finite loss at epoch " +
                                      std::to_string(epoch) + " step " +
                                      std::to_string(steps));
            epoch_loss += loss.value;
            ++steps;

            model.zero_grads();
            std::vector<std::vector<Tensor<float>>> dh_carry(model.layout.blocks),
                dc_carry(model.layout.blocks);
            for (int b = 0; b < model.layout.blocks; ++b)
                for (int j = 0; j < model.layout.layers; ++j) {
                    dh_carry[b].emplace_back(nb, model.layout.widths[b], hgt >> b,
                                             wid >> b);
                    dc_carry[b].emplace_back(nb, model.layout.widths[b], hgt >> b,
                                             wid >> b);
                }
            for (int t = win - 1; t >= 0; --t)
                model.backward_frame(caches[t], loss.dpre[t], dh_carry, dc_carry, ws);

            for (size_t i = 0; i < model.params.size(); ++i) {
                velocity[i] = static_cast<float>(cfg.momentum) * velocity[i] -
                              static_cast<float>(lr) * model.grads[i];
                model.params[i] += velocity[i];
            }
        }

        double val = evaluate_val_loss(model, student_config, val_recs,
                                       pseudolabel_dir, data_dir, cfg);
        if (!std::isfinite(val))
            throw DivergenceError("non-finite validation loss at epoch " +
                                  std::to_string(epoch));
        result.history.train_loss.push_back(epoch_loss / std::max(steps, 1));
        result.history.val_loss.push_back(val);
        if (result.history.best_epoch < 0 ||
            val < result.history.val_loss[result.history.best_epoch]) {
            result.history.best_epoch = epoch;
            best_params = model.params;
        }
    }

    model.params = std::move(best_params);
    result.model = std::move(model);
    return result;
}

CalibrationResult calibrate_threshold(const Model& model, const ModelConfig& config,
                                      const DatasetManifest& val_manifest,
                                      const std::filesystem::path& pseudolabel_dir,
                                      const std::filesystem::path& data_dir,
                                      int prepad_frames) {
    auto val = val_manifest.split_records(Split::VAL);
    if (val.empty()) throw ConfigError("VAL split is empty");

    std::vector<double> grid;
    for (int i = 1; i <= 19; ++i) grid.push_back(i * 0.05);
    std::vector<double> dice_sum(grid.size(), 0.0);
    int64_t frames = 0;

    for (const auto* rec : val) {
        VideoClip clip = load_clip(data_dir, rec->clip_id, rec->fps);
        SoftMaskSequence teacher = load_soft_masks(pseudolabel_dir, rec->clip_id);
        SoftMaskSequence student = forward(model, config, clip, prepad_frames);
        BinaryMaskSequence tb = teacher.threshold(0.5f);
        size_t hw = static_cast<size_t>(clip.height()) * clip.width();
        for (int t = 0; t < clip.t(); ++t) {
            for (size_t g = 0; g < grid.size(); ++g) {
                int64_t inter = 0, a = 0, b = 0;
                const float* sp = student.masks.data() + t * hw;
                const uint8_t* tp = tb.masks.data() + t * hw;
                float tau = static_cast<float>(grid[g]);
                for (size_t i = 0; i < hw; ++i) {
                    bool s = sp[i] > tau;
                    a += s;
                    b += tp[i];
                    inter += s && tp[i];
                }
                dice_sum[g] += (a + b) == 0 ? 1.0 : 2.0 * inter / static_cast<double>(a + b);
            }
            ++frames;
        }
    }

    CalibrationResult res;
    double best = -1.0;
    for (size_t g = 0; g < grid.size(); ++g) {
        double d = dice_sum[g] / frames;
        bool better = d > best + 1e-12;
        bool tie = std::abs(d - best) <= 1e-12 &&
                   std::abs(grid[g] - 0.5) < std::abs(res.threshold - 0.5) - 1e-12;
        if (better || tie) {
            best = std::max(best, d);
            res.threshold = grid[g];
            res.best_dice = d;
        }
    }
    if (best <= 1e-12) {
        res.threshold = 0.5;  // flat zero curve: fall back to the midpoint
        res.degenerate = true;
    }
    return res;
}

}  // namespace echodfkd
