#include <fstream>

#include <json.hpp>
#include <torch/torch.h>

#include "vocseg/errors.hpp"
#include "vocseg/train_engine.hpp"

namespace vocseg {
namespace {

constexpr const char* kFormat = "vocseg-checkpoint";
constexpr int kVersion = 1;

using nlohmann::json;

json plan_to_json(const ModelSpec& spec) {
  json layers = json::array();
  for (const LayerPlan& l : spec.layers) {
    layers.push_back({{"name", l.name},
                      {"kind", std::string(to_string(l.kind))},
                      {"in", l.in_channels},
                      {"out", l.out_channels},
                      {"kernel", l.kernel},
                      {"stride", l.stride},
                      {"padding", l.padding},
                      {"output_padding", l.output_padding},
                      {"skip", l.skip_source ? json(*l.skip_source) : json(nullptr)}});
  }
  return {{"arch", std::string(to_string(spec.arch))},
          {"num_classes", spec.num_classes},
          {"frozen_prefix", spec.frozen_prefix},
          {"layers", layers}};
}

json report_to_json(const MetricReport& r) {
  json iou = json::array();
  for (const auto& v : r.iou_per_class) iou.push_back(v ? json(*v) : json(nullptr));
  return {{"loss", r.loss}, {"pixel_accuracy", r.pixel_accuracy}, {"mean_iou", r.mean_iou}, {"iou_per_class", iou}};
}

MetricReport report_from_json(const json& j) {
  MetricReport r;
  r.loss = j.at("loss").get<double>();
  r.pixel_accuracy = j.at("pixel_accuracy").get<double>();
  r.mean_iou = j.at("mean_iou").get<double>();
  for (const auto& v : j.value("iou_per_class", json::array())) {
    r.iou_per_class.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
  }
  return r;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, SegNet& model, const EpochRecord& record) {
  c10::Dict<std::string, torch::Tensor> tensors;
  for (const auto& p : model->named_parameters()) tensors.insert(p.key(), p.value().detach().cpu());
  for (const auto& b : model->named_buffers()) tensors.insert(b.key(), b.value().detach().cpu());

  const json meta = {{"format", kFormat},
                     {"version", kVersion},
                     {"spec", plan_to_json(model->spec())},
                     {"encoder_frozen", model->encoder_frozen()},
                     {"record",
                      {{"epoch", record.epoch},
                       {"lr", record.lr},
                       {"train", report_to_json(record.train)},
                       {"val", report_to_json(record.val)}}}};

  c10::impl::GenericDict root(c10::StringType::get(), c10::AnyType::get());
  root.insert("meta", meta.dump());
  root.insert("tensors", tensors);
  const std::vector<char> bytes = torch::pickle_save(root);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  c10::IValue root;
  try {
    root = torch::pickle_load(bytes);
  } catch (const c10::Error& e) {
    throw DataError("corrupt checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  if (!root.isGenericDict()) throw DataError("checkpoint " + path.string() + " has no top-level dict");
  const auto dict = root.toGenericDict();
  if (!dict.contains("meta") || !dict.contains("tensors")) {
    throw DataError("checkpoint " + path.string() + " lacks meta or tensors");
  }

  const json meta = json::parse(dict.at("meta").toStringRef());
  if (meta.value("format", "") != kFormat || meta.value("version", 0) != kVersion) {
    throw DataError("checkpoint " + path.string() + " has an unsupported format");
  }
  const json& spec_json = meta.at("spec");
  const ArchId arch = parse_arch(spec_json.at("arch").get<std::string>());
  SegNet model = build_model(arch, spec_json.at("num_classes").get<int>());
  if (plan_to_json(model->spec()) != spec_json) {
    throw DataError("checkpoint " + path.string() + " layer plan differs from the built " +
                    std::string(to_string(arch)) + " plan");
  }
  if (meta.at("encoder_frozen").get<bool>()) freeze_encoder(model);

  std::unordered_map<std::string, torch::Tensor> stored;
  for (const auto& kv : dict.at("tensors").toGenericDict()) {
    stored.emplace(kv.key().toStringRef(), kv.value().toTensor());
  }
  torch::NoGradGuard no_grad;
  auto load = [&](const std::string& name, torch::Tensor& target) {
    auto it = stored.find(name);
    if (it == stored.end()) throw DataError("checkpoint " + path.string() + " lacks tensor '" + name + "'");
    if (it->second.sizes() != target.sizes()) {
      throw DataError("checkpoint tensor '" + name + "' has shape " + c10::str(it->second.sizes()));
    }
    target.copy_(it->second);
  };
  for (auto& p : model->named_parameters()) load(p.key(), p.value());
  for (auto& b : model->named_buffers()) load(b.key(), b.value());

  Checkpoint ckpt;
  ckpt.model = model;
  const json& rec = meta.at("record");
  ckpt.record.epoch = rec.at("epoch").get<int>();
  ckpt.record.lr = rec.at("lr").get<double>();
  ckpt.record.train = report_from_json(rec.at("train"));
  ckpt.record.val = report_from_json(rec.at("val"));
  return ckpt;
}

}  // namespace vocseg
