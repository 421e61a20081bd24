#include <charconv>
#include <cstdio>
#include <fstream>

#include "vocseg/errors.hpp"
#include "vocseg/exp_runner.hpp"

namespace vocseg {
namespace {

std::string full_precision(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

}  // namespace

void write_metrics_log(const std::filesystem::path& path, const std::vector<EpochRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write metrics log " + path.string());
  out << kMetricsHeader << "\n";
  for (const EpochRecord& r : records) {
    out << r.epoch << ',' << full_precision(r.lr) << ',' << full_precision(r.train.loss) << ','
        << full_precision(r.train.pixel_accuracy) << ',' << full_precision(r.train.mean_iou) << ','
        << full_precision(r.val.loss) << ',' << full_precision(r.val.pixel_accuracy) << ','
        << full_precision(r.val.mean_iou) << "\n";
  }
  if (!out) throw DataError("failed writing metrics log " + path.string());
}

std::vector<EpochRecord> read_metrics_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics log " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw DataError(path.string() + ":1: missing or unexpected header");
  }
  std::vector<EpochRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    const auto fields = split_commas(line);
    if (fields.size() != 8) {
      throw DataError(where + ": expected 8 fields, found " + std::to_string(fields.size()));
    }
    double values[7];
    EpochRecord r;
    {
      const auto [ptr, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), r.epoch);
      if (ec != std::errc{} || ptr != fields[0].data() + fields[0].size()) {
        throw DataError(where + ": bad epoch '" + std::string(fields[0]) + "'");
      }
    }
    for (int i = 0; i < 7; ++i) {
      const auto f = fields[i + 1];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), values[i]);
      if (f.empty() || ec != std::errc{} || ptr != f.data() + f.size()) {
        throw DataError(where + ": bad number '" + std::string(f) + "' in column " + std::to_string(i + 2));
      }
    }
    r.lr = values[0];
    r.train.loss = values[1];
    r.train.pixel_accuracy = values[2];
    r.train.mean_iou = values[3];
    r.val.loss = values[4];
    r.val.pixel_accuracy = values[5];
    r.val.mean_iou = values[6];
    if (!records.empty() && r.epoch <= records.back().epoch) {
      throw DataError(where + ": epoch " + std::to_string(r.epoch) + " does not increase");
    }
    records.push_back(r);
  }
  return records;
}

}  // namespace vocseg
