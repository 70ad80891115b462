#include "cfa/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "cfa/error.hpp"
#include "cfa/grid_source.hpp"

namespace cfa {

namespace {

std::pair<std::size_t, std::size_t> class_counts(std::span<const std::uint8_t> labels) {
  std::size_t pos = 0;
  for (auto l : labels) pos += l ? 1 : 0;
  return {pos, labels.size() - pos};
}

std::vector<std::size_t> ascending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

}  // namespace

RocResult auroc(std::span<const double> scores, std::span<const std::uint8_t> labels, bool with_curve) {
  if (scores.size() != labels.size()) throw ShapeError("auroc: scores and labels differ in length");
  const auto [n_pos, n_neg] = class_counts(labels);
  if (n_pos == 0 || n_neg == 0) throw ConfigError("auroc: both classes must be present");

  const auto order = ascending_order(scores);
  // Rank sum of positives with midranks; ranks are 1-based.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t pos_in_block = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      pos_in_block += labels[order[j]] ? 1 : 0;
      ++j;
    }
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    rank_sum += midrank * static_cast<double>(pos_in_block);
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  RocResult roc;
  roc.auroc = (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);

  if (with_curve) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = order.size(); i > 0;) {
      const double thr = scores[order[i - 1]];
      while (i > 0 && scores[order[i - 1]] == thr) {
        (labels[order[i - 1]] ? tp : fp) += 1;
        --i;
      }
      roc.thresholds.push_back(thr);
      roc.tpr.push_back(static_cast<double>(tp) / np);
      roc.fpr.push_back(static_cast<double>(fp) / nn);
    }
  }
  return roc;
}

RocResult pixel_auroc(std::span<const Plane> maps, std::span<const GrayImage> masks, bool with_curve) {
  if (maps.size() != masks.size()) throw ShapeError("pixel_auroc: map and mask counts differ");
  std::size_t total = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].height != masks[i].height || maps[i].width != masks[i].width)
      throw ShapeError("pixel_auroc: map " + std::to_string(i) + " resolution differs from its mask");
    total += maps[i].values.size();
  }
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  scores.reserve(total);
  labels.reserve(total);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    scores.insert(scores.end(), maps[i].values.begin(), maps[i].values.end());
    for (auto v : masks[i].pixels) labels.push_back(v ? 1 : 0);
  }
  const auto [n_pos, n_neg] = class_counts(labels);
  if (n_pos == 0) throw ConfigError("pixel_auroc: no anomalous pixels");
  if (n_neg == 0) throw ConfigError("pixel_auroc: no normal pixels");
  return auroc(scores, labels, with_curve);
}

F1Result f1_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("f1_threshold: scores and labels differ in length");
  const auto [n_pos, n_neg] = class_counts(labels);
  if (n_pos == 0) throw ConfigError("f1_threshold: no positive labels");

  const auto order = ascending_order(scores);
  // Walking thresholds upward; tp/fp count scores >= current threshold.
  std::size_t tp = n_pos, fp = n_neg;
  F1Result best{scores[order.front()], -1.0};
  for (std::size_t i = 0; i < order.size();) {
    const double thr = scores[order[i]];
    const double f1 = 2.0 * static_cast<double>(tp) / (2.0 * static_cast<double>(tp) + static_cast<double>(fp) +
                                                       static_cast<double>(n_pos - tp));
    if (f1 > best.f1) best = {thr, f1};
    while (i < order.size() && scores[order[i]] == thr) {
      (labels[order[i]] ? tp : fp) -= 1;
      ++i;
    }
  }
  return best;
}

void write_report(const EvalReport& r, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["class_name"] = r.class_name;
  doc["i_auroc"] = r.i_auroc;
  doc["p_auroc"] = r.p_auroc;
  doc["f1_threshold"] = r.f1_threshold;
  doc["f1"] = r.f1;
  doc["sample_count"] = {{"train", r.train_count},
                         {"test_normal", r.test_normal_count},
                         {"test_anomalous", r.test_anomalous_count}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    const auto doc = nlohmann::json::parse(in);
    EvalReport r;
    r.class_name = doc.at("class_name").get<std::string>();
    r.i_auroc = doc.at("i_auroc").get<double>();
    r.p_auroc = doc.at("p_auroc").get<double>();
    r.f1_threshold = doc.at("f1_threshold").get<double>();
    r.f1 = doc.at("f1").get<double>();
    const auto& c = doc.at("sample_count");
    r.train_count = c.at("train").get<std::size_t>();
    r.test_normal_count = c.at("test_normal").get<std::size_t>();
    r.test_anomalous_count = c.at("test_anomalous").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::kInvalidLayout, path.string() + ": " + e.what());
  }
}

Evaluation evaluate_class(const DatasetManifest& manifest, const MemoryBank& bank, const PatchDescriptor& descriptor,
                          std::size_t k, bool with_curves, double sigma) {
  const auto test = manifest.split(Split::kTest);
  if (test.empty()) throw ConfigError("evaluate_class: test split is empty");

  Evaluation ev;
  auto& r = ev.report;
  r.class_name = manifest.class_name;
  r.train_count = manifest.split(Split::kTrain).size();

  std::vector<std::uint8_t> image_labels;
  std::vector<Plane> maps;
  std::vector<GrayImage> masks;
  maps.reserve(test.size());
  masks.reserve(test.size());
  for (const auto& e : test) {
    const bool anomalous = e.label == ImageLabel::kAnomalous;
    (anomalous ? r.test_anomalous_count : r.test_normal_count) += 1;
    AnomalyScoreMap map =
        score_sample(load_grid(e), descriptor, bank, k, manifest.input_height, manifest.input_width, sigma);
    ev.image_scores.push_back(map.image_score);
    image_labels.push_back(anomalous ? 1 : 0);
    maps.push_back(std::move(map.upsampled));
    if (e.mask_path) {
      masks.push_back(read_mask(*e.mask_path, manifest.input_height, manifest.input_width));
    } else {
      GrayImage blank;
      blank.height = manifest.input_height;
      blank.width = manifest.input_width;
      blank.pixels.assign(blank.height * blank.width, 0);
      masks.push_back(std::move(blank));
    }
  }

  ev.image_roc = auroc(ev.image_scores, image_labels, with_curves);
  ev.pixel_roc = pixel_auroc(maps, masks, with_curves);
  r.i_auroc = 100.0 * ev.image_roc.auroc;
  r.p_auroc = 100.0 * ev.pixel_roc.auroc;

  std::vector<double> pixels;
  std::vector<std::uint8_t> pixel_labels;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    pixels.insert(pixels.end(), maps[i].values.begin(), maps[i].values.end());
    for (auto v : masks[i].pixels) pixel_labels.push_back(v ? 1 : 0);
  }
  const F1Result f1 = f1_threshold(pixels, pixel_labels);
  r.f1_threshold = f1.threshold;
  r.f1 = f1.f1;
  return ev;
}

void write_roc_csv(const RocResult& roc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "threshold,tpr,fpr\n";
  char buf[128];
  for (std::size_t i = 0; i < roc.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", roc.thresholds[i], roc.tpr[i], roc.fpr[i]);
    out << buf;
  }
}

}  // namespace cfa
