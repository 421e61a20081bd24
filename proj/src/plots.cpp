#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "vocseg/errors.hpp"
#include "vocseg/exp_runner.hpp"

namespace vocseg {
namespace {

constexpr int kWidth = 720;
constexpr int kHeight = 480;
constexpr int kLeft = 80, kRight = 30, kTop = 50, kBottom = 60;
const cv::Scalar kTrainColour(180, 119, 31);  // BGR
const cv::Scalar kValColour(14, 127, 255);
const cv::Scalar kInk(40, 40, 40);
const cv::Scalar kGrid(225, 225, 225);

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

void draw_chart(const std::vector<EpochRecord>& records, const std::string& title, const std::string& y_label,
                const std::function<double(const MetricReport&)>& metric, const std::filesystem::path& path) {
  cv::Mat canvas(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  std::vector<double> train, val;
  for (const auto& r : records) {
    train.push_back(metric(r.train));
    val.push_back(metric(r.val));
  }
  double lo = std::min(*std::min_element(train.begin(), train.end()), *std::min_element(val.begin(), val.end()));
  double hi = std::max(*std::max_element(train.begin(), train.end()), *std::max_element(val.begin(), val.end()));
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw DataError("cannot plot non-finite metrics");
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const int first = records.front().epoch;
  const int last = std::max(records.back().epoch, first + 1);

  const int plot_w = kWidth - kLeft - kRight;
  const int plot_h = kHeight - kTop - kBottom;
  auto to_px = [&](int epoch, double v) {
    const double fx = static_cast<double>(epoch - first) / (last - first);
    const double fy = (v - lo) / (hi - lo);
    return cv::Point(kLeft + static_cast<int>(std::lround(fx * plot_w)),
                     kTop + plot_h - static_cast<int>(std::lround(fy * plot_h)));
  };

  for (int i = 0; i <= 5; ++i) {
    const double v = lo + (hi - lo) * i / 5.0;
    const int y = kTop + plot_h - plot_h * i / 5;
    cv::line(canvas, {kLeft, y}, {kLeft + plot_w, y}, kGrid, 1);
    cv::putText(canvas, label(v), {8, y + 5}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kInk, 1, cv::LINE_AA);
  }
  const int step = std::max(1, (last - first) / 10);
  for (int e = first; e <= last; e += step) {
    const cv::Point p = to_px(e, lo);
    cv::line(canvas, p, {p.x, p.y + 5}, kInk, 1);
    cv::putText(canvas, std::to_string(e), {p.x - 6, p.y + 22}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kInk, 1,
                cv::LINE_AA);
  }
  cv::rectangle(canvas, {kLeft, kTop}, {kLeft + plot_w, kTop + plot_h}, kInk, 1);
  cv::putText(canvas, title, {kLeft, 30}, cv::FONT_HERSHEY_SIMPLEX, 0.7, kInk, 2, cv::LINE_AA);
  cv::putText(canvas, "epoch", {kLeft + plot_w / 2 - 20, kHeight - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.5, kInk, 1,
              cv::LINE_AA);
  cv::putText(canvas, y_label, {kLeft + 6, kTop + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kInk, 1, cv::LINE_AA);

  auto series = [&](const std::vector<double>& ys, const cv::Scalar& colour) {
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const cv::Point p = to_px(records[i].epoch, ys[i]);
      if (i > 0) cv::line(canvas, to_px(records[i - 1].epoch, ys[i - 1]), p, colour, 2, cv::LINE_AA);
      cv::circle(canvas, p, 3, colour, cv::FILLED, cv::LINE_AA);
    }
  };
  series(train, kTrainColour);
  series(val, kValColour);

  const int lx = kLeft + plot_w - 110;
  cv::line(canvas, {lx, kTop + 15}, {lx + 20, kTop + 15}, kTrainColour, 2);
  cv::putText(canvas, "train", {lx + 26, kTop + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kInk, 1, cv::LINE_AA);
  cv::line(canvas, {lx, kTop + 35}, {lx + 20, kTop + 35}, kValColour, 2);
  cv::putText(canvas, "validation", {lx + 26, kTop + 40}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kInk, 1, cv::LINE_AA);

  if (!cv::imwrite(path.string(), canvas)) throw DataError("cannot write plot " + path.string());
}

}  // namespace

PlotFiles emit_plots(const std::vector<EpochRecord>& records, const std::filesystem::path& out_dir) {
  if (records.empty()) throw DataError("emit_plots: no epoch records");
  std::filesystem::create_directories(out_dir);
  PlotFiles files{out_dir / "loss.png", out_dir / "iou.png", out_dir / "accuracy.png"};
  draw_chart(records, "Loss", "cross-entropy", [](const MetricReport& r) { return r.loss; }, files.loss);
  draw_chart(records, "Mean IoU", "mean IoU", [](const MetricReport& r) { return r.mean_iou; }, files.iou);
  draw_chart(records, "Pixel accuracy", "accuracy", [](const MetricReport& r) { return r.pixel_accuracy; },
             files.accuracy);
  return files;
}

}  // namespace vocseg
