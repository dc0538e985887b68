#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "acconet/archive.hpp"
#include "acconet/data.hpp"
#include "acconet/loss.hpp"
#include "acconet/model.hpp"

namespace acconet::train {

namespace fs = std::filesystem;

struct TrainConfig {
  double lr = 1e-4;
  int decay_epoch = 30;        // lr is divided from this epoch on
  double decay_factor = 10.0;
  int batch_size = 6;
  int epochs = 39;
  std::uint64_t seed = 0;
  std::string backbone = "vgg16-shaped";
  fs::path backbone_weights;   // empty: random initialization
  Ablation ablation = Ablation::full;
  loss::LossMode loss_mode = loss::LossMode::both;
  bool micro = false;
  bool augment = true;
  std::string normalization = "imagenet";
  double init_std = 0.0;       // <= 0: He scaling
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 0.0;      // global-norm clip, 0 disables
  std::int64_t max_iterations = 0;  // 0: run every epoch to the end

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  ShapeSchedule schedule() const;
  ModelConfig model_config() const;
  /// Hash over everything that determines the network's parameter layout
  /// and input convention. Checkpoints refuse to load under a different one.
  std::string fingerprint() const;
};

/// cfg.lr before cfg.decay_epoch, cfg.lr / cfg.decay_factor from it on.
double lr_at(int epoch, const TrainConfig& cfg);

using BackboneFactory =
    std::function<std::unique_ptr<encoder::Backbone>(const TrainConfig&)>;
/// Makes a backbone available under a name usable as TrainConfig::backbone.
/// "vgg16-shaped" is built in.
void register_backbone(const std::string& name, BackboneFactory factory);
bool backbone_registered(const std::string& name);

/// Backbone plus freshly initialized added layers, all seeded from cfg.seed.
std::unique_ptr<AcconetModel> build_model(const TrainConfig& cfg);

/// Adam with bias correction; touches only parameters that received a
/// gradient since their last zero_grad().
class Adam {
 public:
  Adam(double beta1, double beta2, double eps, double weight_decay = 0.0);

  void step(const std::vector<nn::Parameter*>& params, double lr);
  std::int64_t steps() const { return t_; }

  void save(io::TensorArchive& ar) const;
  void load(const io::TensorArchive& ar);

 private:
  struct Moments {
    Tensor m, v;
  };
  double beta1_, beta2_, eps_, weight_decay_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

/// Rescales all touched gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(const std::vector<nn::Parameter*>& params, double max_norm);

class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(std::int64_t iteration, double value);
  std::int64_t iteration;
};

class FingerprintMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepResult {
  loss::LossBreakdown loss;
  double lr = 0;
};

/// Owns a model and its optimizer; one step() per batch.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  StepResult step(const data::Batch& batch, double lr);

  AcconetModel& model() { return *model_; }
  Adam& optimizer() { return adam_; }
  const TrainConfig& config() const { return cfg_; }
  std::int64_t iteration() const { return iteration_; }
  int epoch() const { return epoch_; }
  void set_epoch(int e) { epoch_ = e; }

  void save_checkpoint(const fs::path& path) const;
  /// Restores parameters, normalization statistics, optimizer state and
  /// counters. Throws FingerprintMismatchError for an incompatible file.
  void load_checkpoint(const fs::path& path);

 private:
  TrainConfig cfg_;
  std::unique_ptr<AcconetModel> model_;
  Adam adam_;
  std::int64_t iteration_ = 0;  // completed optimizer steps
  int epoch_ = 0;               // completed epochs
};

/// Copies the model's parameters and buffers into / out of an archive under
/// "param/<name>" and "buffer/<name>".
void save_model_state(AcconetModel& model, io::TensorArchive& ar);
void load_model_state(AcconetModel& model, const io::TensorArchive& ar);

struct IterationLog {
  std::int64_t iteration = 0;
  int epoch = 0;
  double lr = 0;
  loss::LossBreakdown loss;
};

struct TrainResult {
  int epochs_completed = 0;
  std::int64_t iterations = 0;
  std::vector<double> loss_trace;  // totals of the iterations run by this call
  fs::path last_checkpoint;
};

inline constexpr const char* kLogFile = "train_log.csv";

/// Full epoch loop over `<dataset_root>/train`. Writes train_log.csv and
/// checkpoints/epoch_NNN.ckpt into out_dir and resumes from the newest
/// checkpoint found there.
TrainResult train(const TrainConfig& cfg, const fs::path& dataset_root,
                  const fs::path& out_dir,
                  const std::function<void(const IterationLog&)>& on_iteration = {});

/// Newest checkpoint in out_dir/checkpoints, or empty.
fs::path latest_checkpoint(const fs::path& out_dir);

/// Writes round(255 * S^1) for every image in image_dir to out_dir as an
/// 8-bit PNG with the same basename, resized back to the image's own size.
std::vector<fs::path> infer(const TrainConfig& cfg, const fs::path& checkpoint,
                            const fs::path& image_dir, const fs::path& out_dir);

/// Saliency map of one image in [0, 1] at the image's original size.
Tensor predict(AcconetModel& model, const fs::path& image, const TrainConfig& cfg);

}  // namespace acconet::train
