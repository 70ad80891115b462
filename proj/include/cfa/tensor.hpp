#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cfa {

// Single-precision D x H x W tensor, channel-major: index = c*H*W + y*W + x.
struct FeatureTensor {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  FeatureTensor() = default;
  FeatureTensor(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::size_t plane() const noexcept { return height * width; }
  std::size_t size() const noexcept { return channels * height * width; }

  float& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }

  std::span<float> channel(std::size_t c) { return {data.data() + c * plane(), plane()}; }
  std::span<const float> channel(std::size_t c) const { return {data.data() + c * plane(), plane()}; }

  bool operator==(const FeatureTensor&) const = default;
};

// Descriptor outputs phi(p_t) for every patch of one sample, stored
// patch-major (data[t * dim + c]) so each embedding is contiguous.
struct EmbeddedGrid {
  std::size_t dim = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  EmbeddedGrid() = default;
  EmbeddedGrid(std::size_t d, std::size_t h, std::size_t w) : dim(d), height(h), width(w), data(d * h * w, 0.0) {}

  std::size_t patch_count() const noexcept { return height * width; }

  std::span<double> patch(std::size_t t) { return {data.data() + t * dim, dim}; }
  std::span<const double> patch(std::size_t t) const { return {data.data() + t * dim, dim}; }

  bool operator==(const EmbeddedGrid&) const = default;
};

// Dense row-major matrix in double precision.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

}  // namespace cfa
