#include "vocseg/objective_metrics.hpp"

#include <numeric>
#include <string>

#include <torch/torch.h>

#include "vocseg/errors.hpp"

namespace vocseg {

torch::Tensor ClassWeights::tensor() const {
  return torch::tensor(weights, torch::dtype(torch::kFloat64)).to(torch::kFloat32);
}

ClassWeights class_weights(std::span<const std::int64_t> counts) {
  if (counts.empty()) throw ConfigError("class_weights needs at least one class count");
  std::int64_t total = 0;
  for (std::int64_t n : counts) {
    if (n < 0) throw ConfigError("class counts must be non-negative");
    total += n;
  }
  if (total == 0) throw ConfigError("class_weights: every class count is zero");
  ClassWeights w;
  w.weights.reserve(counts.size());
  for (std::int64_t n : counts) w.weights.push_back(1.0 - static_cast<double>(n) / static_cast<double>(total));
  return w;
}

LossTerms cross_entropy_terms(const torch::Tensor& logits, const torch::Tensor& targets,
                              const std::optional<ClassWeights>& weights) {
  if (logits.dim() != 4 || targets.dim() != 3 || logits.size(0) != targets.size(0) ||
      logits.size(2) != targets.size(1) || logits.size(3) != targets.size(2)) {
    throw ModelError("cross_entropy: logits " + c10::str(logits.sizes()) + " do not match targets " +
                     c10::str(targets.sizes()));
  }
  if (!torch::isfinite(logits).all().item<bool>()) throw TrainingError("cross_entropy: non-finite logits");
  const auto num_classes = logits.size(1);
  if (weights && weights->num_classes() != num_classes) {
    throw ConfigError("cross_entropy: " + std::to_string(weights->num_classes()) + " class weights for " +
                      std::to_string(num_classes) + " classes");
  }
  const auto t = targets.to(torch::kInt64);
  if (t.numel() > 0 && (t.min().item<std::int64_t>() < 0 || t.max().item<std::int64_t>() >= num_classes)) {
    throw DataError("cross_entropy: target class outside [0, " + std::to_string(num_classes) + ")");
  }

  const auto log_probs = torch::log_softmax(logits, 1);
  const auto nll = -log_probs.gather(1, t.unsqueeze(1)).squeeze(1);
  // sums in double so pooled losses do not depend on how pixels are batched
  if (!weights) {
    return {nll.sum(torch::kFloat64), torch::full({}, static_cast<double>(nll.numel()), torch::kFloat64)};
  }
  const auto w = weights->tensor().to(logits.device()).index_select(0, t.flatten()).view_as(nll);
  return {(w * nll).sum(torch::kFloat64), w.sum(torch::kFloat64)};
}

torch::Tensor cross_entropy(const torch::Tensor& logits, const torch::Tensor& targets,
                            const std::optional<ClassWeights>& weights) {
  return cross_entropy_terms(logits, targets, weights).mean();
}

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 1) throw ConfigError("confusion matrix needs at least one class");
}

std::size_t ConfusionMatrix::index(int truth, int predicted) const {
  if (truth < 0 || truth >= num_classes_ || predicted < 0 || predicted >= num_classes_) {
    throw DataError("class pair (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                    ") outside confusion matrix of " + std::to_string(num_classes_) + " classes");
  }
  return static_cast<std::size_t>(truth) * num_classes_ + predicted;
}

void ConfusionMatrix::add(int truth, int predicted, std::int64_t n) { counts_[index(truth, predicted)] += n; }

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) throw DataError("cannot merge confusion matrices of different size");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

std::int64_t ConfusionMatrix::row_sum(int c) const {
  std::int64_t s = 0;
  for (int p = 0; p < num_classes_; ++p) s += (*this)(c, p);
  return s;
}

std::int64_t ConfusionMatrix::col_sum(int c) const {
  std::int64_t s = 0;
  for (int g = 0; g < num_classes_; ++g) s += (*this)(g, c);
  return s;
}

void update_confusion(ConfusionMatrix& cm, const torch::Tensor& predictions, const torch::Tensor& targets) {
  if (predictions.sizes() != targets.sizes()) {
    throw DataError("update_confusion: predictions " + c10::str(predictions.sizes()) + " vs targets " +
                    c10::str(targets.sizes()));
  }
  if (predictions.numel() == 0) return;
  const auto p = predictions.to(torch::kCPU, torch::kInt64).flatten();
  const auto g = targets.to(torch::kCPU, torch::kInt64).flatten();
  const std::int64_t c = cm.num_classes();
  for (const auto* t : {&p, &g}) {
    if (t->min().item<std::int64_t>() < 0 || t->max().item<std::int64_t>() >= c) {
      throw DataError("update_confusion: class index outside [0, " + std::to_string(c) + ")");
    }
  }
  const auto counts = torch::bincount(g * c + p, {}, c * c).contiguous();
  const auto* data = counts.data_ptr<std::int64_t>();
  for (std::int64_t i = 0; i < c * c; ++i) {
    if (data[i]) cm.add(static_cast<int>(i / c), static_cast<int>(i % c), data[i]);
  }
}

double pixel_accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw DataError("pixel_accuracy of an empty confusion matrix");
  std::int64_t correct = 0;
  for (int c = 0; c < cm.num_classes(); ++c) correct += cm.true_positives(c);
  return static_cast<double>(correct) / static_cast<double>(total);
}

std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> iou(cm.num_classes());
  for (int c = 0; c < cm.num_classes(); ++c) {
    const auto tp = cm.true_positives(c);
    const auto denom = cm.row_sum(c) + cm.col_sum(c) - tp;
    if (denom > 0) iou[c] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return iou;
}

double mean_iou(const ConfusionMatrix& cm) {
  double sum = 0.0;
  int defined = 0;
  for (const auto& v : iou_per_class(cm)) {
    if (v) {
      sum += *v;
      ++defined;
    }
  }
  if (defined == 0) throw DataError("mean_iou: no class has a defined IoU");
  return sum / defined;
}

MetricReport make_report(const ConfusionMatrix& cm, double loss) {
  return {loss, pixel_accuracy(cm), mean_iou(cm), iou_per_class(cm)};
}

torch::Tensor argmax_classes(const torch::Tensor& logits) {
  // torch::argmax returns the first maximal index.
  return logits.argmax(1);
}

}  // namespace vocseg
