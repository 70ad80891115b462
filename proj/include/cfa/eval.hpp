#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cfa/descriptor.hpp"
#include "cfa/feature_io.hpp"
#include "cfa/memory_bank.hpp"
#include "cfa/scoring.hpp"

namespace cfa {

// Area under the ROC curve. When requested, the curve is swept over the
// distinct scores in descending order (score >= threshold is positive), so
// tpr and fpr are non-decreasing.
struct RocResult {
  double auroc = 0.0;
  std::vector<double> thresholds;
  std::vector<double> tpr;
  std::vector<double> fpr;
};

// Exact AUROC from the Mann-Whitney U statistic with midranks for ties.
// `labels` are 1 for positive (anomalous), 0 for negative.
RocResult auroc(std::span<const double> scores, std::span<const std::uint8_t> labels, bool with_curve = false);

// Pools every pixel of every map (normal samples carry all-zero masks).
RocResult pixel_auroc(std::span<const Plane> maps, std::span<const GrayImage> masks, bool with_curve = false);

struct F1Result {
  double threshold = 0.0;
  double f1 = 0.0;
};

// Best F1 over thresholds drawn from the observed scores; ties go to the
// lower threshold. Needs at least one positive label.
F1Result f1_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct EvalReport {
  std::string class_name;
  double i_auroc = 0.0;  // percent
  double p_auroc = 0.0;  // percent
  double f1_threshold = 0.0;
  double f1 = 0.0;
  std::size_t train_count = 0;
  std::size_t test_normal_count = 0;
  std::size_t test_anomalous_count = 0;

  bool operator==(const EvalReport&) const = default;
};

void write_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_report(const std::filesystem::path& path);

struct Evaluation {
  EvalReport report;
  RocResult image_roc;
  RocResult pixel_roc;
  std::vector<double> image_scores;  // test split, manifest order
};

// Scores every test sample and computes I-AUROC over image scores, P-AUROC
// and the F1 threshold over pooled pixels of the blurred,
// pre-normalization maps.
Evaluation evaluate_class(const DatasetManifest& manifest, const MemoryBank& bank, const PatchDescriptor& descriptor,
                          std::size_t k, bool with_curves = false, double sigma = kDefaultSmoothingSigma);

// CSV with header threshold,tpr,fpr.
void write_roc_csv(const RocResult& roc, const std::filesystem::path& path);

}  // namespace cfa
