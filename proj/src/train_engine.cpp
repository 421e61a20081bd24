#include "vocseg/train_engine.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <torch/torch.h>

#include "vocseg/errors.hpp"

namespace vocseg {

std::string_view to_string(Scheduler s) { return s == Scheduler::cosine ? "cosine" : "none"; }

Scheduler parse_scheduler(std::string_view name) {
  if (name == "none") return Scheduler::none;
  if (name == "cosine") return Scheduler::cosine;
  throw ConfigError("unknown scheduler '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(lr_min >= 0.0)) throw ConfigError("lr_min must be non-negative");
  if (!(lr_max > lr_min)) throw ConfigError("lr_max must exceed lr_min");
  if (epochs_max < 1) throw ConfigError("epochs_max must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (t_max < 1) throw ConfigError("t_max must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
}

double cosine_lr(int t_cur, int t_max, double lr_max, double lr_min) {
  if (t_max < 1) throw ConfigError("t_max must be at least 1");
  if (t_cur < 0) throw ConfigError("t_cur must be non-negative");
  if (t_cur >= t_max) return lr_min;
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t_cur / t_max));
}

double lr_for_epoch(const TrainConfig& config, int completed_epochs) {
  if (config.scheduler == Scheduler::none) return config.lr_max;
  return cosine_lr(completed_epochs, config.t_max, config.lr_max, config.lr_min);
}

EarlyStopping::EarlyStopping(int patience)
    : patience_(patience), best_val_loss_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ConfigError("patience must be at least 1");
}

bool EarlyStopping::observe(int epoch, double val_loss) {
  if (val_loss < best_val_loss_) {
    best_val_loss_ = val_loss;
    best_epoch_ = epoch;
    epochs_since_improvement_ = 0;
    return true;
  }
  ++epochs_since_improvement_;
  return false;
}

ModelSnapshot ModelSnapshot::capture(const SegNet& model) {
  torch::NoGradGuard no_grad;
  ModelSnapshot snap;
  for (const auto& p : model->named_parameters()) snap.tensors_.emplace_back(p.key(), p.value().detach().clone());
  for (const auto& b : model->named_buffers()) snap.tensors_.emplace_back(b.key(), b.value().detach().clone());
  return snap;
}

void ModelSnapshot::restore(SegNet& model) const {
  torch::NoGradGuard no_grad;
  auto params = model->named_parameters();
  auto buffers = model->named_buffers();
  for (const auto& [name, value] : tensors_) {
    if (auto* p = params.find(name)) {
      p->copy_(value);
    } else if (auto* b = buffers.find(name)) {
      b->copy_(value);
    } else {
      throw ModelError("snapshot tensor '" + name + "' has no counterpart in the model");
    }
  }
}

LoopSummary run_epoch_loop(const TrainConfig& config, const EpochHooks& hooks) {
  config.validate();
  EarlyStopping stopper(config.patience);
  LoopSummary summary;
  for (int epoch = 1; epoch <= config.epochs_max; ++epoch) {
    EpochRecord record;
    record.epoch = epoch;
    record.lr = lr_for_epoch(config, epoch - 1);
    record.train = hooks.train(epoch, record.lr);
    record.val = hooks.validate();
    summary.records.push_back(record);
    summary.stop_epoch = epoch;
    if (stopper.observe(epoch, record.val.loss) && hooks.on_improved) hooks.on_improved(record);
    if (hooks.on_epoch) hooks.on_epoch(record);
    if (stopper.should_stop()) {
      summary.stopped_early = epoch < config.epochs_max;
      break;
    }
  }
  summary.best_epoch = stopper.best_epoch();
  summary.best_val_loss = stopper.best_val_loss();
  return summary;
}

torch::optim::Adam make_optimizer(SegNet& model, double lr) {
  std::vector<torch::Tensor> trainable;
  for (auto& p : model->parameters()) {
    if (p.requires_grad()) trainable.push_back(p);
  }
  return torch::optim::Adam(trainable, torch::optim::AdamOptions(lr));
}

void set_learning_rate(torch::optim::Optimizer& optimizer, double lr) {
  for (auto& group : optimizer.param_groups()) group.options().set_lr(lr);
}

namespace {

struct Accumulator {
  double weighted_nll = 0.0;
  double weight_sum = 0.0;
  ConfusionMatrix cm;

  explicit Accumulator(int num_classes) : cm(num_classes) {}

  void add(const torch::Tensor& logits, const torch::Tensor& masks, const LossTerms& terms) {
    weighted_nll += terms.weighted_nll.item<double>();
    weight_sum += terms.weight_sum.item<double>();
    update_confusion(cm, argmax_classes(logits.detach()), masks);
  }

  MetricReport report() const { return make_report(cm, weighted_nll / weight_sum); }
};

}  // namespace

MetricReport train_epoch(SegNet& model, std::span<const Batch> batches, torch::optim::Optimizer& optimizer,
                         const std::optional<ClassWeights>& weights, const AugmentPolicy& policy,
                         std::mt19937_64& rng) {
  if (batches.empty()) throw DataError("train_epoch: no training batches");
  model->train();
  Accumulator acc(model->spec().num_classes);
  std::size_t index = 0;
  for (const Batch& raw : batches) {
    const Batch batch = augment_train_batch(raw, policy, rng);
    optimizer.zero_grad();
    const auto logits = model->forward(batch.images);
    LossTerms terms;
    try {
      terms = cross_entropy_terms(logits, batch.masks, weights);
    } catch (const TrainingError& e) {
      throw TrainingError("batch " + std::to_string(index) + ": " + e.what());
    }
    const auto loss = terms.mean();
    if (!std::isfinite(loss.item<double>())) {
      throw TrainingError("non-finite loss at batch " + std::to_string(index) + " (first id '" + batch.ids.front() +
                          "')");
    }
    loss.backward();
    optimizer.step();
    acc.add(logits, batch.masks, terms);
    ++index;
  }
  return acc.report();
}

MetricReport evaluate(SegNet& model, std::span<const Batch> batches, const std::optional<ClassWeights>& weights) {
  if (batches.empty()) throw DataError("evaluate: empty split");
  const bool was_training = model->is_training();
  model->eval();
  MetricReport report;
  try {
    report = evaluate([&](const Batch& b) { return model->forward(b.images); }, model->spec().num_classes, batches,
                      weights);
  } catch (...) {
    model->train(was_training);
    throw;
  }
  model->train(was_training);
  return report;
}

MetricReport evaluate(const Predictor& predict, int num_classes, std::span<const Batch> batches,
                      const std::optional<ClassWeights>& weights) {
  if (batches.empty()) throw DataError("evaluate: empty split");
  torch::NoGradGuard no_grad;
  Accumulator acc(num_classes);
  for (const Batch& batch : batches) {
    const auto logits = predict(batch);
    acc.add(logits, batch.masks, cross_entropy_terms(logits, batch.masks, weights));
  }
  return acc.report();
}

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  // splitmix64 step so neighbouring epochs get unrelated permutations
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

FitResult fit(SegNet& model, const TrainConfig& config, const FitData& data, const AugmentPolicy& policy,
              const std::optional<ClassWeights>& weights, const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (data.train.empty()) throw DataError("fit: empty training split");
  if (data.val.empty()) throw DataError("fit: empty validation split");

  auto optimizer = make_optimizer(model, config.lr_max);
  std::mt19937_64 augment_rng(epoch_seed(config.seed, -1));
  FitResult result;

  EpochHooks hooks;
  hooks.train = [&](int epoch, double lr) {
    set_learning_rate(optimizer, lr);
    const auto batches = make_batches(data.train, config.batch_size, config.shuffle, epoch_seed(config.seed, epoch));
    return train_epoch(model, batches, optimizer, weights, policy, augment_rng);
  };
  hooks.validate = [&] { return evaluate(model, data.val, weights); };
  hooks.on_improved = [&](const EpochRecord&) { result.best = ModelSnapshot::capture(model); };
  hooks.on_epoch = on_epoch;

  LoopSummary summary = run_epoch_loop(config, hooks);
  result.best.restore(model);
  result.records = std::move(summary.records);
  result.stop_epoch = summary.stop_epoch;
  result.best_epoch = summary.best_epoch;
  result.best_val_loss = summary.best_val_loss;
  result.stopped_early = summary.stopped_early;
  return result;
}

}  // namespace vocseg
