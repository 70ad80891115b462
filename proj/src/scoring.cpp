#include "cfa/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cfa/error.hpp"
#include "cfa/parallel.hpp"
#include "cfa/patch_features.hpp"

namespace cfa {

HeatmapStack build_heatmaps(const EmbeddedGrid& embedded, const MemoryBank& bank, std::size_t k) {
  const GridNeighbors nn = knn_grid(bank, embedded, k);
  HeatmapStack stack;
  stack.k = k;
  stack.height = embedded.height;
  stack.width = embedded.width;
  const std::size_t T = embedded.patch_count();
  stack.maps.resize(k * T);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < k; ++i) stack.maps[i * T + t] = nn.distances[t * k + i];
  return stack;
}

Plane naive_score(const HeatmapStack& stack) {
  if (stack.k == 0) throw ShapeError("naive_score: empty heatmap stack");
  Plane out(stack.height, stack.width);
  for (std::size_t t = 0; t < stack.patch_count(); ++t) {
    double s = stack.at(0, t);
    for (std::size_t i = 1; i < stack.k; ++i) s = std::min(s, stack.at(i, t));
    out.values[t] = s;
  }
  return out;
}

Plane certainty(const HeatmapStack& stack) {
  const Plane s = naive_score(stack);
  Plane out(stack.height, stack.width);
  for (std::size_t t = 0; t < stack.patch_count(); ++t) {
    double denom = 0.0;
    for (std::size_t i = 0; i < stack.k; ++i) denom += std::exp(-(stack.at(i, t) - s.values[t]));
    out.values[t] = 1.0 / denom;
  }
  return out;
}

Plane certainty_score(const HeatmapStack& stack) {
  Plane out = certainty(stack);
  const Plane s = naive_score(stack);
  for (std::size_t t = 0; t < out.values.size(); ++t) out.values[t] *= s.values[t];
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("gaussian_kernel: sigma must be positive");
  const auto radius = static_cast<std::size_t>(std::ceil(4.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const double x = static_cast<double>(i) - static_cast<double>(radius);
    taps[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += taps[i];
  }
  for (auto& v : taps) v /= sum;
  return taps;
}

namespace {

// Half-sample symmetric reflection of an arbitrary index into [0, n).
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - 1 - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

Plane gaussian_blur(const Plane& in, double sigma) {
  if (in.height == 0 || in.width == 0) throw ShapeError("gaussian_blur: empty plane");
  const auto taps = gaussian_kernel(sigma);
  const std::size_t radius = taps.size() / 2;
  const std::size_t H = in.height, W = in.width;

  // Convolves `n` values read through `get` into `put`, via a reflected
  // scratch line of length n + 2 * radius.
  auto convolve_line = [&](std::size_t n, auto get, auto put, std::vector<double>& line) {
    line.resize(n + 2 * radius);
    for (std::size_t i = 0; i < line.size(); ++i)
      line[i] = get(reflect(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(radius), n));
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < taps.size(); ++k) acc += taps[k] * line[i + k];
      put(i, acc);
    }
  };

  Plane tmp(H, W);
  parallel_for(H, [&](std::size_t begin, std::size_t end) {
    std::vector<double> line;
    for (std::size_t y = begin; y < end; ++y)
      convolve_line(
          W, [&](std::size_t x) { return in.values[y * W + x]; },
          [&](std::size_t x, double v) { tmp.values[y * W + x] = v; }, line);
  });
  Plane out(H, W);
  parallel_for(W, [&](std::size_t begin, std::size_t end) {
    std::vector<double> line;
    for (std::size_t x = begin; x < end; ++x)
      convolve_line(
          H, [&](std::size_t y) { return tmp.values[y * W + x]; },
          [&](std::size_t y, double v) { out.values[y * W + x] = v; }, line);
  });
  return out;
}

Plane bilinear_resize(const Plane& in, std::size_t height, std::size_t width) {
  Plane out(height, width);
  bilinear_resize(in.values, in.height, in.width, out.values, height, width);
  return out;
}

AnomalyScoreMap finalize_map(const Plane& raw, std::size_t height, std::size_t width, double sigma) {
  if (raw.height == 0 || raw.width == 0 || height == 0 || width == 0)
    throw ShapeError("finalize_map: degenerate resolution");
  AnomalyScoreMap map;
  map.raw = raw;
  map.upsampled = gaussian_blur(bilinear_resize(raw, height, width), sigma);
  const auto [lo, hi] = std::minmax_element(map.upsampled.values.begin(), map.upsampled.values.end());
  map.image_score = *hi;
  map.normalized = Plane(height, width);
  const double range = *hi - *lo;
  if (range > 0.0)
    for (std::size_t i = 0; i < map.normalized.values.size(); ++i)
      map.normalized.values[i] = (map.upsampled.values[i] - *lo) / range;
  return map;
}

AnomalyScoreMap score_sample(const PatchGrid& grid, const PatchDescriptor& descriptor, const MemoryBank& bank,
                             std::size_t k, std::size_t height, std::size_t width, double sigma) {
  const EmbeddedGrid emb = forward(descriptor, grid);
  return finalize_map(certainty_score(build_heatmaps(emb, bank, k)), height, width, sigma);
}

GrayImage to_gray(const Plane& normalized) {
  GrayImage img;
  img.height = normalized.height;
  img.width = normalized.width;
  img.pixels.resize(normalized.values.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = std::clamp(normalized.values[i], 0.0, 1.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

}  // namespace cfa
