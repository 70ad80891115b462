#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cfa/feature_io.hpp"
#include "cfa/tensor.hpp"

namespace cfa {

// Concatenated multi-scale features at the largest scale's resolution.
// Each spatial location t = y*W + x holds one patch feature of length D.
struct PatchGrid {
  FeatureTensor features;

  std::size_t dim() const noexcept { return features.channels; }
  std::size_t height() const noexcept { return features.height; }
  std::size_t width() const noexcept { return features.width; }
  std::size_t patch_count() const noexcept { return features.plane(); }
};

// Bilinear resize of one src_h x src_w plane with half-pixel centers
// (src = (dst + 0.5) * src_size / dst_size - 0.5, clamped at the border).
// Accumulation is in double; `dst` must hold dst_h * dst_w values.
void bilinear_resize(std::span<const double> src, std::size_t src_h, std::size_t src_w, std::span<double> dst,
                     std::size_t dst_h, std::size_t dst_w);

// Upsamples every scale to the largest spatial size and stacks the channel
// blocks in file order. Throws ShapeError when a scale's size does not
// divide the largest one.
PatchGrid assemble_patch_grid(const MultiScaleFeatureSet& set);

// Patch feature at 0-based spatial index t (t = y*W + x).
std::vector<float> patch_at(const PatchGrid& grid, std::size_t t);

}  // namespace cfa
