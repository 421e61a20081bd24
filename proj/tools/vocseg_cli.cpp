// vocseg: train, evaluate and compare the segmentation experiments.
//
//   vocseg run <config> [--seed N] [--data-root DIR] [--out DIR] [--set key=value]...
//   vocseg table <run_dir>... [--out FILE]
//   vocseg render <checkpoint> <image> <out.png>
//   vocseg plots <run_dir>

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "vocseg/errors.hpp"
#include "vocseg/exp_runner.hpp"

namespace {

int run_command(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                const std::string& data_root, const std::string& out, const std::vector<std::string>& sets) {
  vocseg::ExperimentConfig config = vocseg::load_config(config_path);
  if (seed) config.train.seed = *seed;
  if (!data_root.empty()) config.data_root = data_root;
  if (!out.empty()) config.output_dir = out;
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw vocseg::ConfigError("--set expects key=value, got '" + kv + "'");
    vocseg::apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  const auto art = vocseg::run_experiment(config, std::cout);
  std::cout << "run directory: " << art.run_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic segmentation experiments on VOC-layout data"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Train one experiment from a config file");
  std::string config_path, data_root, out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  run->add_option("config", config_path, "Experiment config file")->required();
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--data-root", data_root, "Override the dataset directory");
  run->add_option("--out", out_dir, "Override the output directory");
  run->add_option("--set", sets, "Override any config key (key=value)");

  auto* table = app.add_subcommand("table", "Results table over finished run directories");
  std::vector<std::string> run_dirs;
  std::string table_out;
  table->add_option("run_dirs", run_dirs, "Run directories");
  table->add_option("--out", table_out, "Also write the table to this file");

  auto* render = app.add_subcommand("render", "Render a segmentation map for one image");
  std::string ckpt, image, render_out;
  render->add_option("checkpoint", ckpt)->required();
  render->add_option("image", image)->required();
  render->add_option("out", render_out)->required();

  auto* plots = app.add_subcommand("plots", "Redraw the curves of a run from its metrics log");
  std::string plot_dir;
  plots->add_option("run_dir", plot_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_command(config_path, seed, data_root, out_dir, sets);
    if (*table) {
      std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
      const std::string text = vocseg::results_table(dirs);
      std::cout << text;
      if (!table_out.empty()) {
        std::ofstream out(table_out);
        if (!out) throw vocseg::DataError("cannot write " + table_out);
        out << text;
      }
      return 0;
    }
    if (*render) {
      vocseg::render_image(ckpt, image, render_out);
      return 0;
    }
    if (*plots) {
      const auto files = vocseg::emit_plots(vocseg::read_metrics_log(std::filesystem::path(plot_dir) / "metrics.csv"),
                                            plot_dir);
      std::cout << files.loss.string() << "\n" << files.iou.string() << "\n" << files.accuracy.string() << "\n";
      return 0;
    }
  } catch (const vocseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
