#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cfa/patch_features.hpp"
#include "cfa/tensor.hpp"

namespace cfa {

// 1x1 coordinate-augmented linear map: phi(p) = W [p; x; y] + b, where
// (x, y) are the patch's pixel-center coordinates normalized to [-1, 1].
// W is out_dim x (in_dim + 2); the last two columns act on the coordinates.
struct PatchDescriptor {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  bool has_bias = true;
  Matrix weight;
  std::vector<double> bias;

  std::size_t augmented_dim() const noexcept { return in_dim + 2; }
  std::size_t parameter_count() const noexcept { return weight.data.size() + bias.size(); }

  bool operator==(const PatchDescriptor&) const = default;
};

// Normalized coordinate of pixel index i along an axis of length n.
inline double normalized_coordinate(std::size_t i, std::size_t n) {
  return (static_cast<double>(i) + 0.5) / static_cast<double>(n) * 2.0 - 1.0;
}

// He-normal weights with std sqrt(2 / (in_dim + 2)), zero bias.
PatchDescriptor init_descriptor(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed, bool has_bias = true);

// Output dimension for a feature-dimension reduction ratio: max(1, round(ratio * in_dim)).
std::size_t reduced_dim(std::size_t in_dim, double ratio);

// Patch-major T x (D + 2) matrix of [p_t; x_t; y_t] rows.
Matrix augment(const PatchGrid& grid);

EmbeddedGrid forward(const PatchDescriptor& desc, const PatchGrid& grid);
EmbeddedGrid forward(const PatchDescriptor& desc, const Matrix& augmented, std::size_t height, std::size_t width);

struct DescriptorGradients {
  Matrix weight;
  std::vector<double> bias;

  static DescriptorGradients zeros_like(const PatchDescriptor& desc);
  DescriptorGradients& operator+=(const DescriptorGradients& other);
  DescriptorGradients& operator*=(double s);
};

// dL/dW = sum_t g_t [p_t; x_t; y_t]^T and dL/db = sum_t g_t for upstream
// gradients g_t = dL/dphi(p_t).
DescriptorGradients backward(const PatchDescriptor& desc, const PatchGrid& grid, const EmbeddedGrid& upstream);
DescriptorGradients backward(const PatchDescriptor& desc, const Matrix& augmented, const EmbeddedGrid& upstream);

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool amsgrad = true;
};

// Moments over the flattened parameters (weight row-major, then bias).
struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::vector<double> max_second_moment;
  std::uint64_t step_count = 0;

  static OptimizerState for_descriptor(const PatchDescriptor& desc);
  bool operator==(const OptimizerState&) const = default;
};

// One AdamW step with decoupled weight decay applied before the moment
// update. Throws NumericError and leaves everything untouched when a
// gradient is non-finite.
void optimizer_step(PatchDescriptor& desc, OptimizerState& state, const DescriptorGradients& grads,
                    const AdamWConfig& config);

}  // namespace cfa
