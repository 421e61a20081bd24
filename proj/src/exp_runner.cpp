#include "vocseg/exp_runner.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>
#include <torch/torch.h>

#include "vocseg/errors.hpp"
#include "vocseg/png_io.hpp"

namespace vocseg {
namespace {

using nlohmann::json;

json report_json(const MetricReport& r) {
  json per_class = json::array();
  for (const auto& v : r.iou_per_class) per_class.push_back(v ? json(*v) : json(nullptr));
  return {{"loss", r.loss}, {"pixel_accuracy", r.pixel_accuracy}, {"mean_iou", r.mean_iou}, {"iou_per_class", per_class}};
}

void check_disjoint(const std::vector<std::string>& a, const std::vector<std::string>& b, std::string_view an,
                    std::string_view bn) {
  const std::set<std::string> seen(a.begin(), a.end());
  for (const auto& id : b) {
    if (seen.count(id)) {
      throw DataError("sample '" + id + "' appears in both " + std::string(an) + " and " + std::string(bn) + " splits");
    }
  }
}

}  // namespace

IndexedRaster render_segmentation_map(const torch::Tensor& logits) {
  if (logits.dim() != 3) throw ModelError("render_segmentation_map expects (C, H, W) logits");
  if (!torch::isfinite(logits).all().item<bool>()) throw ModelError("render_segmentation_map: non-finite logits");
  const auto classes = argmax_classes(logits.detach().unsqueeze(0)).squeeze(0);
  return tensor_to_mask(classes);
}

void render_image(const std::filesystem::path& checkpoint, const std::filesystem::path& image,
                  const std::filesystem::path& out) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  ckpt.model->eval();
  const Image raw = read_image(image);
  const ScaleMap map(raw.height, raw.width, kImageSize, kImageSize);
  const Image resized = warp_bilinear(raw, kImageSize, kImageSize, map);
  torch::NoGradGuard no_grad;
  const auto logits = ckpt.model->forward(image_to_tensor(resized).unsqueeze(0));
  write_indexed_png(out, render_segmentation_map(logits[0]));
}

RunArtifactSet run_experiment(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  if (config.data_root.empty()) {
    throw ConfigError("config key 'data_root' is empty and " + std::string(kDataRootEnv) + " is not set");
  }
  RunArtifactSet art;
  art.run_dir = config.run_dir();
  std::filesystem::create_directories(art.run_dir);
  art.config = art.run_dir / "config.cfg";
  art.metrics_log = art.run_dir / "metrics.csv";
  art.checkpoint = art.run_dir / "best.ckpt";
  art.results = art.run_dir / "results.json";
  std::filesystem::remove(art.results);
  {
    std::ofstream out(art.config);
    out << serialize_config(config);
  }

  torch::manual_seed(config.train.seed);
  const DatasetRoot root(config.data_root);
  const auto train_ids = load_split(root, Split::train);
  const auto val_ids = load_split(root, Split::val);
  const auto test_ids = load_split(root, Split::test);
  check_disjoint(train_ids, val_ids, "train", "val");
  check_disjoint(train_ids, test_ids, "train", "test");
  check_disjoint(val_ids, test_ids, "val", "test");
  log << "[" << config.name << "] splits: train " << train_ids.size() << ", val " << val_ids.size() << ", test "
      << test_ids.size() << "\n";

  const auto train = load_samples(root, train_ids, kImageSize, config.workers);
  const auto val = load_samples(root, val_ids, kImageSize, config.workers);
  const auto test = load_samples(root, test_ids, kImageSize, config.workers);

  std::optional<ClassWeights> weights;
  if (config.train.use_weights) {
    const auto counts = class_pixel_counts(train);
    weights = class_weights(counts);
    log << "[" << config.name << "] background weight " << weights->weights[0] << "\n";
  }

  SegNet model = build_model(config.arch);
  if (config.arch == ArchId::transfer_resnet34) {
    load_backbone_weights(model, config.backbone_weights);
    freeze_encoder(model);
  }
  xavier_init(model, config.train.seed);
  const auto params = param_count(model);
  log << "[" << config.name << "] " << to_string(config.arch) << ": " << params.total << " parameters, "
      << params.trainable << " trainable\n";

  FitData data{train, make_batches(val, config.train.batch_size, false, 0)};
  std::vector<EpochRecord> so_far;
  auto on_epoch = [&](const EpochRecord& r) {
    so_far.push_back(r);
    write_metrics_log(art.metrics_log, so_far);
    log << "[" << config.name << "] epoch " << r.epoch << " lr " << r.lr << " | train loss " << r.train.loss
        << " acc " << r.train.pixel_accuracy << " mIoU " << r.train.mean_iou << " | val loss " << r.val.loss
        << " acc " << r.val.pixel_accuracy << " mIoU " << r.val.mean_iou << std::endl;
  };
  const FitResult fitted = fit(model, config.train, data, config.augment, weights, on_epoch);
  const EpochRecord& best = fitted.records.at(fitted.best_epoch - 1);
  save_checkpoint(art.checkpoint, model, best);

  const auto test_batches = make_batches(test, config.train.batch_size, false, 0);
  const MetricReport test_report = evaluate(model, test_batches, weights);
  log << "[" << config.name << "] stopped at epoch " << fitted.stop_epoch << ", best epoch " << fitted.best_epoch
      << " | test loss " << test_report.loss << " acc " << test_report.pixel_accuracy << " mIoU "
      << test_report.mean_iou << "\n";

  art.plots = emit_plots(fitted.records, art.run_dir);

  const auto maps_dir = art.run_dir / "maps";
  std::filesystem::create_directories(maps_dir);
  model->eval();
  const int n_maps = std::min<int>(config.render_count, static_cast<int>(test.size()));
  for (int i = 0; i < n_maps; ++i) {
    torch::NoGradGuard no_grad;
    const auto logits = model->forward(image_to_tensor(test[i].image).unsqueeze(0));
    const auto pred_path = maps_dir / (test[i].id + "_pred.png");
    const auto truth_path = maps_dir / (test[i].id + "_truth.png");
    write_indexed_png(pred_path, render_segmentation_map(logits[0]));
    write_indexed_png(truth_path, test[i].mask);
    art.maps.push_back(pred_path);
    art.maps.push_back(truth_path);
  }

  const json results = {{"name", config.name},
                        {"arch", std::string(to_string(config.arch))},
                        {"best_epoch", fitted.best_epoch},
                        {"stop_epoch", fitted.stop_epoch},
                        {"stopped_early", fitted.stopped_early},
                        {"val", report_json(best.val)},
                        {"test", report_json(test_report)}};
  std::ofstream(art.results) << results.dump(2) << "\n";
  return art;
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

ResultsRow read_results_row(const std::filesystem::path& run_dir) {
  ResultsRow row;
  row.model = run_dir.filename().string();
  if (row.model.empty()) row.model = run_dir.parent_path().filename().string();
  const auto path = run_dir / "results.json";
  const auto fail = [&](const std::string& why) {
    row.failed = true;
    row.failure = why;
    return row;
  };
  for (const char* required : {"results.json", "metrics.csv", "best.ckpt"}) {
    if (!std::filesystem::is_regular_file(run_dir / required)) return fail(std::string("missing ") + required);
  }
  try {
    std::ifstream in(path);
    const json j = json::parse(in);
    row.model = j.at("name").get<std::string>();
    row.val_loss = j.at("val").at("loss").get<double>();
    row.val_iou = j.at("val").at("mean_iou").get<double>();
    row.val_accuracy = j.at("val").at("pixel_accuracy").get<double>();
    row.test_loss = j.at("test").at("loss").get<double>();
    row.test_iou = j.at("test").at("mean_iou").get<double>();
    row.test_accuracy = j.at("test").at("pixel_accuracy").get<double>();
    row.best_epoch = j.at("best_epoch").get<int>();
    row.stop_epoch = j.at("stop_epoch").get<int>();
  } catch (const std::exception& e) {
    return fail(std::string("unreadable results.json: ") + e.what());
  }
  return row;
}

std::string results_table(const std::vector<std::filesystem::path>& run_dirs) {
  std::ostringstream os;
  os << "| Model | Val Loss | Val IoU | Val Accuracy (%) | Test Loss | Test IoU | Test Accuracy (%) |\n"
     << "|---|---|---|---|---|---|---|\n";
  for (const auto& dir : run_dirs) {
    const ResultsRow r = read_results_row(dir);
    if (r.failed) {
      os << "| " << r.model << " | failed: " << r.failure << " | | | | | |\n";
      continue;
    }
    os << "| " << r.model << " | " << format_fixed(r.val_loss, 4) << " | " << format_fixed(r.val_iou, 4) << " | "
       << format_fixed(100.0 * r.val_accuracy, 2) << " | " << format_fixed(r.test_loss, 4) << " | "
       << format_fixed(r.test_iou, 4) << " | " << format_fixed(100.0 * r.test_accuracy, 2) << " |\n";
  }
  return os.str();
}

}  // namespace vocseg
