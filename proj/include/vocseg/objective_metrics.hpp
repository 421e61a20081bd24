#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <torch/types.h>

#include "vocseg/palette.hpp"

namespace vocseg {

/// Per-class loss weights w_i = 1 - n_i / sum_j n_j.
struct ClassWeights {
  std::vector<double> weights;

  int num_classes() const { return static_cast<int>(weights.size()); }
  torch::Tensor tensor() const;
};

/// Throws ConfigError when every count is zero.
ClassWeights class_weights(std::span<const std::int64_t> counts);

/// Numerator and denominator of the (weighted) mean cross-entropy, kept
/// separate so that losses can be pooled across batches exactly.
struct LossTerms {
  torch::Tensor weighted_nll;  // sum over pixels of w_y * -log p_y
  torch::Tensor weight_sum;    // sum over pixels of w_y (pixel count when unweighted)

  torch::Tensor mean() const { return weighted_nll / weight_sum; }
};

/// logits (B, C, H, W), targets (B, H, W) int64 in [0, C). Softmax over the
/// class axis, done as one log-softmax.
LossTerms cross_entropy_terms(const torch::Tensor& logits, const torch::Tensor& targets,
                              const std::optional<ClassWeights>& weights = std::nullopt);

/// Mean of -w_y log p_y over all pixels, normalised by the applied weights.
torch::Tensor cross_entropy(const torch::Tensor& logits, const torch::Tensor& targets,
                            const std::optional<ClassWeights>& weights = std::nullopt);

/// counts(g, p): pixels with ground truth g predicted as p.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes = kNumClasses);

  int num_classes() const { return num_classes_; }
  std::int64_t operator()(int truth, int predicted) const { return counts_[index(truth, predicted)]; }
  void add(int truth, int predicted, std::int64_t n = 1);
  void merge(const ConfusionMatrix& other);

  std::int64_t total() const;
  std::int64_t true_positives(int c) const { return (*this)(c, c); }
  std::int64_t row_sum(int c) const;
  std::int64_t col_sum(int c) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t index(int truth, int predicted) const;

  int num_classes_;
  std::vector<std::int64_t> counts_;
};

/// Accumulate argmax predictions (B, H, W) against targets of the same shape.
void update_confusion(ConfusionMatrix& cm, const torch::Tensor& predictions, const torch::Tensor& targets);

/// trace / total; throws on an empty matrix.
double pixel_accuracy(const ConfusionMatrix& cm);

/// TP / (TP + FP + FN) per class; nullopt when the class appears in neither
/// predictions nor targets.
std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm);

/// Mean over the classes with a defined IoU. Throws when none is defined.
double mean_iou(const ConfusionMatrix& cm);

struct MetricReport {
  double loss = 0.0;
  double pixel_accuracy = 0.0;
  double mean_iou = 0.0;
  std::vector<std::optional<double>> iou_per_class;
};

MetricReport make_report(const ConfusionMatrix& cm, double loss);

/// Per-pixel argmax over the class axis of (B, C, H, W) logits; ties resolve
/// to the lowest class index.
torch::Tensor argmax_classes(const torch::Tensor& logits);

}  // namespace vocseg
