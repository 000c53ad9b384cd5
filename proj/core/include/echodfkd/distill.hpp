#pragma once

#include <functional>
#include <memory>

#include "echodfkd/data_model.hpp"
#include "echodfkd/model.hpp"

namespace echodfkd {

class TeacherInterface {
  public:
    virtual ~TeacherInterface() = default;
    virtual SoftMaskSequence infer(const VideoClip& clip) = 0;
    virtual std::string name() const = 0;
    virtual std::string version() const = 0;
};

// Ground-truth masks corrupted by seeded +/-1 px boundary dilation or
// erosion per frame, standing in for an imperfect pretrained segmenter.
class AnalyticPhantomTeacher : public TeacherInterface {
  public:
    AnalyticPhantomTeacher(std::filesystem::path ground_truth_dir, uint64_t seed);
    SoftMaskSequence infer(const VideoClip& clip) override;
    std::string name() const override { return "analytic-phantom"; }
    std::string version() const override { return "1"; }

  private:
    std::filesystem::path gt_dir_;
    uint64_t seed_;
};

struct PseudoLabelResult {
    int generated = 0;
    int skipped_existing = 0;
    std::vector<std::pair<std::string, std::string>> skip_list;  // id, error
    std::filesystem::path store_dir;  // cache_dir / (name-vversion)
};

// One soft-mask file per clip, content-addressed by (teacher version,
// clip id); reruns skip existing entries, failures land in a skip-list.
PseudoLabelResult generate_pseudolabels(TeacherInterface& teacher,
                                        const DatasetManifest& manifest,
                                        const std::filesystem::path& data_dir,
                                        const std::filesystem::path& cache_dir);

enum class LossKind { DICE, BCE, DICE_PLUS_BCE };
std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct TrainingConfig {
    LossKind loss = LossKind::DICE_PLUS_BCE;
    double learning_rate = 0.05;
    double momentum = 0.9;
    // step decay: lr *= decay_factor once at decay_at_fraction*max_epochs
    double decay_factor = 0.1;
    double decay_at_fraction = 0.7;
    int batch_size = 4;
    int sequence_length = 32;  // frames per training window
    int max_epochs = 400;
    int clips_per_epoch = 0;   // 0 = all TRAIN clips each epoch
    int val_window = 32;       // frames scored per VAL clip (0 = all)
    uint64_t seed = 0;

    void validate() const;
};

struct TrainingHistory {
    std::vector<double> train_loss, val_loss;
    int best_epoch = -1;

    std::string to_csv() const;  // epoch,train_loss,val_loss
};

struct TrainResult {
    Model model;  // parameters from best_epoch
    TrainingHistory history;
};

// Distills against the teacher's soft masks; returns the epoch with the
// best validation loss, not the last one.
TrainResult train(const ModelConfig& student_config,
                  const std::filesystem::path& pseudolabel_dir,
                  const DatasetManifest& manifest,
                  const std::filesystem::path& data_dir,
                  const TrainingConfig& config);

struct CalibrationResult {
    double threshold = 0.5;
    double best_dice = 0.0;
    bool degenerate = false;  // flat zero-Dice curve
};

// Grid {0.05,...,0.95}; maximizes mean Dice of thresholded student masks
// against teacher masks binarized at 0.5. Ties break toward 0.5.
CalibrationResult calibrate_threshold(const Model& model, const ModelConfig& config,
                                      const DatasetManifest& val_manifest,
                                      const std::filesystem::path& pseudolabel_dir,
                                      const std::filesystem::path& data_dir,
                                      int prepad_frames = 0);

// Training losses on soft targets (exposed for tests).
double dice_loss(const std::vector<float>& pred, const std::vector<float>& target);
double bce_loss(const std::vector<float>& pred, const std::vector<float>& target);

}  // namespace echodfkd
