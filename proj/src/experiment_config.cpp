#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vocseg/errors.hpp"
#include "vocseg/exp_runner.hpp"

namespace vocseg {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("config key '" + std::string(key) + "': invalid value '" + std::string(value) + "' (expected " +
                    std::string(expected) + ")");
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end) bad_value(key, value, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value, "true or false");
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("config key 'name' must not be empty");
  if (name.find('/') != std::string::npos) throw ConfigError("config key 'name' must not contain '/'");
  train.validate();
  augment.validate();
  if (augment.output_size != kImageSize) throw ConfigError("config key 'aug_output_size' must be 224");
  if (workers < 1) throw ConfigError("config key 'workers' must be at least 1");
  if (render_count < 0) throw ConfigError("config key 'render_count' must be non-negative");
  if (arch == ArchId::transfer_resnet34 && backbone_weights.empty()) {
    throw ConfigError("config key 'backbone_weights' is required for transfer_resnet34");
  }
}

void apply_override(ExperimentConfig& c, std::string_view key, std::string_view value) {
  const std::string v(value);
  if (key == "name") c.name = v;
  else if (key == "arch") {
    try {
      c.arch = parse_arch(v);
    } catch (const ConfigError&) {
      bad_value(key, v, "fcn_baseline, advanced_fcn, transfer_resnet34 or unet");
    }
  } else if (key == "scheduler") {
    try {
      c.train.scheduler = parse_scheduler(v);
    } catch (const ConfigError&) {
      bad_value(key, v, "none or cosine");
    }
  }
  else if (key == "t_max") c.train.t_max = parse_number<int>(key, v);
  else if (key == "lr_max") c.train.lr_max = parse_number<double>(key, v);
  else if (key == "lr_min") c.train.lr_min = parse_number<double>(key, v);
  else if (key == "epochs_max") c.train.epochs_max = parse_number<int>(key, v);
  else if (key == "patience") c.train.patience = parse_number<int>(key, v);
  else if (key == "use_weights") c.train.use_weights = parse_bool(key, v);
  else if (key == "batch_size") c.train.batch_size = parse_number<int>(key, v);
  else if (key == "shuffle") c.train.shuffle = parse_bool(key, v);
  else if (key == "seed") c.train.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "augment") c.augment.enabled = parse_bool(key, v);
  else if (key == "aug_flip_prob") c.augment.flip_prob = parse_number<double>(key, v);
  else if (key == "aug_rotation_deg") c.augment.rotation_deg = parse_number<double>(key, v);
  else if (key == "aug_crop_size") c.augment.crop_size = parse_number<int>(key, v);
  else if (key == "aug_output_size") c.augment.output_size = parse_number<int>(key, v);
  else if (key == "data_root") c.data_root = v;
  else if (key == "output_dir") c.output_dir = v;
  else if (key == "backbone_weights") c.backbone_weights = v;
  else if (key == "workers") c.workers = parse_number<int>(key, v);
  else if (key == "render_count") c.render_count = parse_number<int>(key, v);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

ExperimentConfig parse_config(std::istream& in, const std::string& origin) {
  ExperimentConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    try {
      apply_override(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (config.data_root.empty()) {
    if (const char* env = std::getenv(kDataRootEnv)) config.data_root = env;
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in, path.string());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "name = " << c.name << "\n"
     << "arch = " << to_string(c.arch) << "\n"
     << "scheduler = " << to_string(c.train.scheduler) << "\n"
     << "t_max = " << c.train.t_max << "\n"
     << "lr_max = " << fmt_double(c.train.lr_max) << "\n"
     << "lr_min = " << fmt_double(c.train.lr_min) << "\n"
     << "epochs_max = " << c.train.epochs_max << "\n"
     << "patience = " << c.train.patience << "\n"
     << "use_weights = " << (c.train.use_weights ? "true" : "false") << "\n"
     << "batch_size = " << c.train.batch_size << "\n"
     << "shuffle = " << (c.train.shuffle ? "true" : "false") << "\n"
     << "seed = " << c.train.seed << "\n"
     << "augment = " << (c.augment.enabled ? "true" : "false") << "\n"
     << "aug_flip_prob = " << fmt_double(c.augment.flip_prob) << "\n"
     << "aug_rotation_deg = " << fmt_double(c.augment.rotation_deg) << "\n"
     << "aug_crop_size = " << c.augment.crop_size << "\n"
     << "aug_output_size = " << c.augment.output_size << "\n"
     << "data_root = " << c.data_root.string() << "\n"
     << "output_dir = " << c.output_dir.string() << "\n"
     << "backbone_weights = " << c.backbone_weights.string() << "\n"
     << "workers = " << c.workers << "\n"
     << "render_count = " << c.render_count << "\n";
  return os.str();
}

ExperimentConfig preset(std::string_view name) {
  ExperimentConfig c;
  c.name = std::string(name);
  // Each improvement row keeps the previous one's changes.
  const auto annealing = [&] {
    c.train.scheduler = Scheduler::cosine;
    c.train.t_max = 30;
  };
  const auto augmentation = [&] {
    annealing();
    c.augment.enabled = true;
  };
  const auto weights = [&] {
    augmentation();
    c.train.use_weights = true;
  };

  if (name == "baseline") {
  } else if (name == "annealing") {
    annealing();
  } else if (name == "augmentation") {
    augmentation();
  } else if (name == "weights") {
    weights();
  } else if (name == "adv_fcn") {
    weights();
    c.arch = ArchId::advanced_fcn;
  } else if (name == "transfer") {
    weights();
    c.arch = ArchId::transfer_resnet34;
    c.train.t_max = 40;
    c.backbone_weights = "weights/resnet34.pt";
  } else if (name == "unet") {
    weights();
    c.arch = ArchId::unet;
    c.train.t_max = 40;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  return c;
}

}  // namespace vocseg
