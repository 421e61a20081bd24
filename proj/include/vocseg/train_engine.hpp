#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <torch/optim/adam.h>

#include "vocseg/model_zoo.hpp"
#include "vocseg/objective_metrics.hpp"
#include "vocseg/paired_transforms.hpp"
#include "vocseg/voc_data.hpp"

namespace vocseg {

enum class Scheduler { none, cosine };

std::string_view to_string(Scheduler s);
Scheduler parse_scheduler(std::string_view name);

struct TrainConfig {
  double lr_max = 0.005;
  double lr_min = 0.0;
  int epochs_max = 50;
  int patience = 5;
  Scheduler scheduler = Scheduler::none;
  int t_max = 30;
  bool use_weights = false;
  int batch_size = 16;
  bool shuffle = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// lr_min + (lr_max - lr_min) * (1 + cos(pi * t_cur / t_max)) / 2, held at
/// lr_min once t_cur passes t_max.
double cosine_lr(int t_cur, int t_max, double lr_max, double lr_min);

/// Learning rate for the epoch that follows `completed_epochs` finished ones.
double lr_for_epoch(const TrainConfig& config, int completed_epochs);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  MetricReport train;
  MetricReport val;
};

/// Patience-based stopping on validation loss with a strict-improvement rule.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);

  /// Record the validation loss of `epoch`; returns true on a new best.
  bool observe(int epoch, double val_loss);
  bool should_stop() const { return epochs_since_improvement_ >= patience_; }

  int patience() const { return patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_val_loss() const { return best_val_loss_; }
  int epochs_since_improvement() const { return epochs_since_improvement_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_val_loss_;
  int epochs_since_improvement_ = 0;
};

/// Copy of every parameter and buffer, keyed by name.
class ModelSnapshot {
 public:
  ModelSnapshot() = default;
  static ModelSnapshot capture(const SegNet& model);
  void restore(SegNet& model) const;
  bool empty() const { return tensors_.empty(); }
  const std::vector<std::pair<std::string, torch::Tensor>>& tensors() const { return tensors_; }

 private:
  std::vector<std::pair<std::string, torch::Tensor>> tensors_;
};

/// Callbacks driving the epoch loop; `train` receives (epoch, lr).
struct EpochHooks {
  std::function<MetricReport(int, double)> train;
  std::function<MetricReport()> validate;
  std::function<void(const EpochRecord&)> on_improved;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct LoopSummary {
  std::vector<EpochRecord> records;
  int stop_epoch = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

/// Runs up to epochs_max epochs with early stopping; independent of any model.
LoopSummary run_epoch_loop(const TrainConfig& config, const EpochHooks& hooks);

/// Adam over the trainable parameters only, canonical betas/epsilon, no weight decay.
torch::optim::Adam make_optimizer(SegNet& model, double lr);
void set_learning_rate(torch::optim::Optimizer& optimizer, double lr);

/// One Adam step per batch, with per-sample augmentation drawn from `rng`.
MetricReport train_epoch(SegNet& model, std::span<const Batch> batches, torch::optim::Optimizer& optimizer,
                         const std::optional<ClassWeights>& weights, const AugmentPolicy& policy,
                         std::mt19937_64& rng);

/// Inference-mode pass: loss pooled over every pixel, confusion over the
/// whole split. Leaves the model's mode and parameters as they were.
MetricReport evaluate(SegNet& model, std::span<const Batch> batches,
                      const std::optional<ClassWeights>& weights);

/// Same pooling for any images -> logits function.
using Predictor = std::function<torch::Tensor(const Batch&)>;
MetricReport evaluate(const Predictor& predict, int num_classes, std::span<const Batch> batches,
                      const std::optional<ClassWeights>& weights);

struct FitData {
  std::span<const SegSample> train;
  std::vector<Batch> val;
};

struct FitResult {
  ModelSnapshot best;
  std::vector<EpochRecord> records;
  int stop_epoch = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

/// Full training run. The model ends holding the best weights, which are
/// also returned as a snapshot.
FitResult fit(SegNet& model, const TrainConfig& config, const FitData& data, const AugmentPolicy& policy,
              const std::optional<ClassWeights>& weights,
              const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Seed for the shuffle of a given epoch.
std::uint64_t epoch_seed(std::uint64_t seed, int epoch);

/// Checkpoint file: parameters, buffers, layer-plan descriptor and the
/// record of the epoch it was taken at.
struct Checkpoint {
  SegNet model{nullptr};
  EpochRecord record;
};

void save_checkpoint(const std::filesystem::path& path, SegNet& model, const EpochRecord& record);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vocseg
