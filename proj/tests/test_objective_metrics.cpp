#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "vocseg/errors.hpp"
#include "vocseg/objective_metrics.hpp"

using namespace vocseg;

namespace {

ClassWeights weights_of(std::vector<std::int64_t> counts) { return class_weights(counts); }

// Independent oracle: IoU via set intersection over pixel coordinates.
std::optional<double> brute_iou(const std::vector<int>& pred, const std::vector<int>& truth, int c) {
  std::set<std::size_t> p, t, both, either;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == c) p.insert(i);
    if (truth[i] == c) t.insert(i);
  }
  std::set_intersection(p.begin(), p.end(), t.begin(), t.end(), std::inserter(both, both.end()));
  std::set_union(p.begin(), p.end(), t.begin(), t.end(), std::inserter(either, either.end()));
  if (either.empty()) return std::nullopt;
  return static_cast<double>(both.size()) / static_cast<double>(either.size());
}

torch::Tensor grid(const std::vector<int>& v, int h, int w) {
  return torch::tensor(std::vector<std::int64_t>(v.begin(), v.end())).view({1, h, w});
}

}  // namespace

TEST(ClassWeights, Formula) {
  const auto w = weights_of({3, 1});
  EXPECT_DOUBLE_EQ(w.weights[0], 0.25);
  EXPECT_DOUBLE_EQ(w.weights[1], 0.75);
  const auto u = weights_of(std::vector<std::int64_t>(21, 1000));
  for (double x : u.weights) EXPECT_NEAR(x, 20.0 / 21.0, 1e-15);
  EXPECT_THROW(weights_of(std::vector<std::int64_t>(21, 0)), ConfigError);
  EXPECT_THROW(weights_of({1, -1}), ConfigError);
}

TEST(ClassWeights, SumIsClassesMinusOne) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::int64_t> counts(21);
    for (auto& n : counts) n = 1 + static_cast<std::int64_t>(rng() % 5000000);
    const auto w = class_weights(counts);
    double sum = 0;
    for (double x : w.weights) {
      EXPECT_GT(x, 0.0);
      EXPECT_LT(x, 1.0);
      sum += x;
    }
    EXPECT_NEAR(sum, 20.0, 1e-9);
  }
}

TEST(CrossEntropy, UniformLogitsGiveLn21) {
  const auto logits = torch::zeros({2, 21, 5, 7});
  const auto targets = torch::randint(0, 21, {2, 5, 7});
  EXPECT_NEAR(cross_entropy(logits, targets).item<double>(), std::log(21.0), 1e-6);
  const auto w = weights_of({5, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20});
  EXPECT_NEAR(cross_entropy(logits, targets, w).item<double>(), std::log(21.0), 1e-6);
}

TEST(CrossEntropy, ConfidentCorrectIsZero) {
  const auto targets = torch::randint(0, 21, {1, 4, 4});
  const auto logits = torch::one_hot(targets, 21).permute({0, 3, 1, 2}).to(torch::kFloat) * 100.0;
  EXPECT_NEAR(cross_entropy(logits, targets).item<double>(), 0.0, 1e-6);
}

TEST(CrossEntropy, WeightedMeanExample) {
  // 2 pixels, classes {0,1}, weights (0.25, 0.75), p_correct 0.5 each -> ln 2
  auto logits = torch::zeros({1, 2, 1, 2});
  const auto targets = torch::tensor({0L, 1L}).view({1, 1, 2});
  const auto w = weights_of({3, 1});
  EXPECT_NEAR(cross_entropy(logits, targets, w).item<double>(), std::log(2.0), 1e-7);
}

TEST(CrossEntropy, MatchesHandComputedWeightedMean) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  const int C = 4, P = 9;
  std::vector<double> lg(C * P);
  for (auto& v : lg) v = n01(rng);
  std::vector<std::int64_t> tg(P);
  for (auto& v : tg) v = static_cast<std::int64_t>(rng() % C);
  const auto w = weights_of({10, 3, 1, 6});
  double num = 0, den = 0;
  for (int p = 0; p < P; ++p) {
    double z = 0;
    for (int c = 0; c < C; ++c) z += std::exp(lg[c * P + p]);
    const double logp = lg[tg[p] * P + p] - std::log(z);
    num += -w.weights[tg[p]] * logp;
    den += w.weights[tg[p]];
  }
  const auto logits = torch::tensor(lg, torch::kFloat64).view({1, C, 3, 3});
  const auto targets = torch::tensor(tg).view({1, 3, 3});
  EXPECT_NEAR(cross_entropy(logits, targets, w).item<double>(), num / den, 1e-6);
}

TEST(CrossEntropy, Errors) {
  EXPECT_THROW(cross_entropy(torch::zeros({1, 21, 4, 4}), torch::zeros({1, 4, 5}, torch::kLong)), ModelError);
  auto bad = torch::zeros({1, 21, 2, 2});
  bad[0][3][1][1] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(cross_entropy(bad, torch::zeros({1, 2, 2}, torch::kLong)), TrainingError);
  EXPECT_THROW(cross_entropy(torch::zeros({1, 21, 2, 2}), torch::full({1, 2, 2}, 21, torch::kLong)), DataError);
}

TEST(Confusion, HandCases) {
  ConfusionMatrix cm(21);
  update_confusion(cm, torch::full({1, 2, 5}, 3, torch::kLong), torch::full({1, 2, 5}, 3, torch::kLong));
  EXPECT_EQ(cm(3, 3), 10);
  EXPECT_EQ(cm.total(), 10);
  ConfusionMatrix wrong(21);
  update_confusion(wrong, torch::zeros({1, 2, 2}, torch::kLong), torch::ones({1, 2, 2}, torch::kLong));
  EXPECT_EQ(wrong(1, 0), 4);
  EXPECT_EQ(pixel_accuracy(wrong), 0.0);

  ConfusionMatrix two(2);
  two.add(0, 0, 3);
  two.add(0, 1, 1);
  two.add(1, 1, 4);
  EXPECT_DOUBLE_EQ(pixel_accuracy(two), 0.875);
  const auto iou = iou_per_class(two);
  EXPECT_DOUBLE_EQ(*iou[0], 0.75);
  EXPECT_DOUBLE_EQ(*iou[1], 0.8);

  ConfusionMatrix tpfp(3);
  tpfp.add(2, 2, 2);
  tpfp.add(0, 2, 1);  // FP
  tpfp.add(2, 1, 1);  // FN
  EXPECT_DOUBLE_EQ(*iou_per_class(tpfp)[2], 0.5);

  EXPECT_THROW(pixel_accuracy(ConfusionMatrix(21)), DataError);
  EXPECT_THROW(mean_iou(ConfusionMatrix(21)), DataError);
  EXPECT_THROW(update_confusion(cm, torch::full({1, 1, 1}, 21, torch::kLong), torch::zeros({1, 1, 1}, torch::kLong)),
               DataError);
}

TEST(Confusion, SingleClassPerfectAndMeanOfTwo) {
  ConfusionMatrix cm(21);
  update_confusion(cm, torch::full({1, 3, 3}, 5, torch::kLong), torch::full({1, 3, 3}, 5, torch::kLong));
  const auto iou = iou_per_class(cm);
  for (int c = 0; c < 21; ++c) EXPECT_EQ(iou[c].has_value(), c == 5);
  EXPECT_DOUBLE_EQ(mean_iou(cm), 1.0);

  ConfusionMatrix m(21);
  m.add(1, 1, 2);
  m.add(1, 2, 2);  // IoU_1 = 2/4 = 0.5, IoU_2 = 0/2 = 0
  m.add(3, 3, 5);  // IoU_3 = 1
  EXPECT_DOUBLE_EQ(mean_iou(m), 0.5);
  ConfusionMatrix h(21);
  h.add(1, 1, 1);
  h.add(1, 0, 1);
  h.add(4, 4, 3);  // IoU_1 = 0.5 and IoU_0 = 0 (predicted only), IoU_4 = 1
  EXPECT_DOUBLE_EQ(mean_iou(h), 0.5);
}

TEST(Confusion, MatchesBruteForceOnRandomGrids) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 100; ++t) {
    std::vector<int> classes = {0, 3, 7, 15};
    std::vector<int> pred(64), truth(64);
    for (int i = 0; i < 64; ++i) {
      pred[i] = classes[rng() % 4];
      truth[i] = classes[rng() % 4];
    }
    ConfusionMatrix cm(21);
    update_confusion(cm, grid(pred, 8, 8), grid(truth, 8, 8));
    int correct = 0;
    for (int i = 0; i < 64; ++i) correct += pred[i] == truth[i];
    EXPECT_EQ(pixel_accuracy(cm), correct / 64.0);
    const auto iou = iou_per_class(cm);
    for (int c = 0; c < 21; ++c) EXPECT_EQ(iou[c], brute_iou(pred, truth, c)) << c;
  }
}

TEST(Confusion, BatchSplitAndPermutationInvariance) {
  std::mt19937_64 rng(13);
  std::vector<int> pred(128), truth(128);
  for (int i = 0; i < 128; ++i) {
    pred[i] = static_cast<int>(rng() % 21);
    truth[i] = static_cast<int>(rng() % 21);
  }
  ConfusionMatrix whole(21), halves(21), shuffled(21);
  update_confusion(whole, grid(pred, 8, 16), grid(truth, 8, 16));
  ConfusionMatrix a(21), b(21);
  update_confusion(a, grid({pred.begin(), pred.begin() + 64}, 8, 8), grid({truth.begin(), truth.begin() + 64}, 8, 8));
  update_confusion(b, grid({pred.begin() + 64, pred.end()}, 8, 8), grid({truth.begin() + 64, truth.end()}, 8, 8));
  halves.merge(b);
  halves.merge(a);
  EXPECT_EQ(whole, halves);
  std::vector<std::size_t> perm(128);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> pp(128), tt(128);
  for (int i = 0; i < 128; ++i) {
    pp[i] = pred[perm[i]];
    tt[i] = truth[perm[i]];
  }
  update_confusion(shuffled, grid(pp, 16, 8), grid(tt, 16, 8));
  EXPECT_EQ(whole, shuffled);
}

TEST(Argmax, TiesGoToLowestIndex) {
  auto logits = torch::zeros({1, 21, 1, 3});
  logits[0][4][0][1] = 1.0;
  logits[0][9][0][1] = 1.0;
  logits[0][20][0][2] = 2.0;
  const auto a = argmax_classes(logits);
  EXPECT_EQ(a[0][0][0].item<std::int64_t>(), 0);
  EXPECT_EQ(a[0][0][1].item<std::int64_t>(), 4);
  EXPECT_EQ(a[0][0][2].item<std::int64_t>(), 20);
}
