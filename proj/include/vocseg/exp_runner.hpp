#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vocseg/model_zoo.hpp"
#include "vocseg/paired_transforms.hpp"
#include "vocseg/train_engine.hpp"

namespace vocseg {

/// Environment variable consulted when a config names no data root.
inline constexpr const char* kDataRootEnv = "VOCSEG_DATA_ROOT";

struct ExperimentConfig {
  std::string name = "baseline";
  ArchId arch = ArchId::fcn_baseline;
  TrainConfig train;
  AugmentPolicy augment{.enabled = false};
  std::filesystem::path data_root;
  std::filesystem::path output_dir = "runs";
  std::filesystem::path backbone_weights;
  int workers = 4;
  int render_count = 4;

  void validate() const;
  std::filesystem::path run_dir() const { return output_dir / name; }
};

/// The seven experiment rows, in reporting order.
inline constexpr std::string_view kPresetNames[] = {"baseline", "annealing",  "augmentation", "weights",
                                                    "adv_fcn",  "transfer",   "unet"};

/// Canonical configuration of a named experiment; ConfigError if unknown.
ExperimentConfig preset(std::string_view name);

/// Flat `key = value` text, '#' starts a comment. Keys absent from the text
/// keep their defaults. Unknown keys or bad values raise ConfigError naming
/// the key.
ExperimentConfig parse_config(std::istream& in, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
void apply_override(ExperimentConfig& config, std::string_view key, std::string_view value);
std::string serialize_config(const ExperimentConfig& config);

// --- metrics log -----------------------------------------------------------

inline constexpr std::string_view kMetricsHeader =
    "epoch,lr,train_loss,train_acc,train_miou,val_loss,val_acc,val_miou";

void write_metrics_log(const std::filesystem::path& path, const std::vector<EpochRecord>& records);
/// DataError naming the line for malformed or truncated rows.
std::vector<EpochRecord> read_metrics_log(const std::filesystem::path& path);

// --- plots and maps ----------------------------------------------------------

struct PlotFiles {
  std::filesystem::path loss;
  std::filesystem::path iou;
  std::filesystem::path accuracy;
};

/// Train/val curves of loss, mean IoU and pixel accuracy as PNG files.
PlotFiles emit_plots(const std::vector<EpochRecord>& records, const std::filesystem::path& out_dir);

/// (C, H, W) logits -> class-index raster (lowest index wins ties). Write it
/// with write_indexed_png to get the VOC colours.
IndexedRaster render_segmentation_map(const torch::Tensor& logits);

/// Load an image, run the checkpointed model on it at 224 x 224 and write
/// the palette PNG.
void render_image(const std::filesystem::path& checkpoint, const std::filesystem::path& image,
                  const std::filesystem::path& out);

// --- runs and results --------------------------------------------------------

struct RunArtifactSet {
  std::filesystem::path run_dir;
  std::filesystem::path config;
  std::filesystem::path metrics_log;
  std::filesystem::path checkpoint;
  std::filesystem::path results;
  PlotFiles plots;
  std::vector<std::filesystem::path> maps;
};

struct ResultsRow {
  std::string model;
  double val_loss = 0, val_iou = 0, val_accuracy = 0;
  double test_loss = 0, test_iou = 0, test_accuracy = 0;
  int best_epoch = 0;
  int stop_epoch = 0;
  bool failed = false;
  std::string failure;
};

/// Train, evaluate the best checkpoint on the test split and write every
/// artifact under config.run_dir(). Progress lines go to `log`.
RunArtifactSet run_experiment(const ExperimentConfig& config, std::ostream& log);

/// Row for one run directory; failed rows carry the reason.
ResultsRow read_results_row(const std::filesystem::path& run_dir);

/// Markdown table of the given runs, values rounded to 4 decimals
/// (accuracies shown as percentages with 2).
std::string results_table(const std::vector<std::filesystem::path>& run_dirs);

/// Fixed-point rendering used by the table.
std::string format_fixed(double value, int decimals);

}  // namespace vocseg
