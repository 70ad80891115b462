#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cfa/feature_io.hpp"

namespace cfa {

// Desk-scale stand-in for CNN features of one object class.
//
// Normal patches follow a Gaussian mixture: each location blends the two
// mode means nearest to a smooth per-sample field, plus per-channel
// Gaussian noise. A `nuisance_fraction` of the channels carries the larger
// `nuisance_std` instead of `noise_std`, mimicking generic pretrained
// features whose dominant variance is irrelevant to the target class.
// Anomalous samples shift a rectangle of coarsest-scale cells by
// `anomaly_shift` along a random unit direction.
struct SyntheticSpec {
  std::uint64_t seed = 42;
  std::size_t train_count = 20;
  std::size_t test_normal_count = 10;
  std::size_t test_anomalous_count = 10;
  std::vector<std::size_t> scale_channels = {32, 64};
  // Spatial size of each scale as {height, width}; must divide the largest.
  std::vector<std::array<std::size_t, 2>> scale_sizes = {{16, 16}, {8, 8}};
  // Input pixels per cell of the largest scale along each axis.
  std::size_t pixel_stride = 4;
  std::size_t normal_modes = 6;
  double mode_scale = 1.0;
  double noise_std = 0.1;
  double nuisance_fraction = 0.0;
  double nuisance_std = 0.1;
  double anomaly_shift = 3.0;
  double anomaly_patch_fraction = 0.1;

  void validate() const;
  std::size_t input_height() const;
  std::size_t input_width() const;
};

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);
void save_synthetic_spec(const SyntheticSpec& spec, const std::filesystem::path& path);

struct SyntheticSample {
  MultiScaleFeatureSet features;
  GrayImage mask;  // input resolution, 1 on shifted pixels
  bool anomalous = false;
  // Anomalous rectangle in cells of the largest scale: [y0, y1) x [x0, x1).
  std::array<std::size_t, 4> region{};
};

// One sample; `index` counts within its (split, label) group.
SyntheticSample synthesize_sample(const SyntheticSpec& spec, Split split, bool anomalous, std::size_t index);

// Writes features/, masks/ and manifest.json under out_dir and returns the
// manifest path.
std::filesystem::path generate(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace cfa
