#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cfa/descriptor.hpp"
#include "cfa/feature_io.hpp"
#include "cfa/memory_bank.hpp"
#include "cfa/tensor.hpp"

namespace cfa {

// H x W grid of scalar scores, row-major.
struct Plane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Plane() = default;
  Plane(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}

  double& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }

  bool operator==(const Plane&) const = default;
};

// K distance maps; maps[k * T + t] is the squared distance from phi(p_t)
// to its (k+1)-th nearest center.
struct HeatmapStack {
  std::size_t k = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> maps;

  std::size_t patch_count() const noexcept { return height * width; }
  std::span<const double> map(std::size_t i) const { return {maps.data() + i * patch_count(), patch_count()}; }
  double at(std::size_t i, std::size_t t) const { return maps[i * patch_count() + t]; }
};

HeatmapStack build_heatmaps(const EmbeddedGrid& embedded, const MemoryBank& bank, std::size_t k);

// S_t = min_k H^k_t. Does not assume the stack is sorted.
Plane naive_score(const HeatmapStack& stack);

// Softmin weight of the nearest distance among the K distances of each
// patch: exp(-S_t) / sum_k exp(-H^k_t), evaluated with the minimum shifted
// out so large distances do not underflow.
Plane certainty(const HeatmapStack& stack);

// A_t = certainty_t * S_t.
Plane certainty_score(const HeatmapStack& stack);

// Normalized 1-D Gaussian taps for offsets -r..r with r = ceil(4 sigma).
std::vector<double> gaussian_kernel(double sigma);

// Separable Gaussian blur with symmetric (half-sample) reflection at the
// borders: ... b a | a b c ... c b | b ...
Plane gaussian_blur(const Plane& in, double sigma);

Plane bilinear_resize(const Plane& in, std::size_t height, std::size_t width);

struct AnomalyScoreMap {
  Plane raw;          // patch-grid resolution
  Plane upsampled;    // input resolution, blurred; used for evaluation
  Plane normalized;   // per-sample min-max of `upsampled`, for visualization
  double image_score = 0.0;  // max of `upsampled`
};

inline constexpr double kDefaultSmoothingSigma = 4.0;

// Bilinear upsample to the input resolution, Gaussian blur, image score,
// then min-max scaling (all zeros when the blurred map is constant).
AnomalyScoreMap finalize_map(const Plane& raw, std::size_t height, std::size_t width,
                             double sigma = kDefaultSmoothingSigma);

// Full test-time path for one sample: embed, K-NN heatmaps, certainty
// score, finalize.
AnomalyScoreMap score_sample(const PatchGrid& grid, const PatchDescriptor& descriptor, const MemoryBank& bank,
                             std::size_t k, std::size_t height, std::size_t width,
                             double sigma = kDefaultSmoothingSigma);

// 8-bit rendering of a [0,1] plane.
GrayImage to_gray(const Plane& normalized);

}  // namespace cfa
