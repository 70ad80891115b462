#include "cfa/descriptor.hpp"

#include <cmath>
#include <random>
#include <string>

#include "cfa/error.hpp"
#include "cfa/parallel.hpp"

namespace cfa {

PatchDescriptor init_descriptor(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed, bool has_bias) {
  if (in_dim == 0 || out_dim == 0) throw ConfigError("descriptor dimensions must be at least 1");
  PatchDescriptor desc;
  desc.in_dim = in_dim;
  desc.out_dim = out_dim;
  desc.has_bias = has_bias;
  desc.weight = Matrix(out_dim, in_dim + 2);
  desc.bias.assign(has_bias ? out_dim : 0, 0.0);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in_dim + 2)));
  for (auto& w : desc.weight.data) w = normal(rng);
  return desc;
}

std::size_t reduced_dim(std::size_t in_dim, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("gamma_d must be in (0, 1]");
  const auto d = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(in_dim)));
  return std::max<std::size_t>(1, d);
}

Matrix augment(const PatchGrid& grid) {
  const std::size_t D = grid.dim(), H = grid.height(), W = grid.width(), T = grid.patch_count();
  Matrix a(T, D + 2);
  parallel_for(T, [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      auto row = a.row(t);
      for (std::size_t c = 0; c < D; ++c) row[c] = grid.features.data[c * T + t];
      row[D] = normalized_coordinate(t % W, W);
      row[D + 1] = normalized_coordinate(t / W, H);
    }
  });
  return a;
}

EmbeddedGrid forward(const PatchDescriptor& desc, const PatchGrid& grid) {
  if (grid.dim() != desc.in_dim)
    throw ShapeError("descriptor expects D=" + std::to_string(desc.in_dim) + ", grid has D=" +
                     std::to_string(grid.dim()));
  return forward(desc, augment(grid), grid.height(), grid.width());
}

EmbeddedGrid forward(const PatchDescriptor& desc, const Matrix& augmented, std::size_t height, std::size_t width) {
  if (augmented.cols != desc.augmented_dim() || augmented.rows != height * width)
    throw ShapeError("augmented input does not match descriptor or grid size");
  EmbeddedGrid out(desc.out_dim, height, width);
  parallel_for(augmented.rows, [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      const auto a = augmented.row(t);
      auto y = out.patch(t);
      for (std::size_t o = 0; o < desc.out_dim; ++o) {
        const auto w = desc.weight.row(o);
        double acc = desc.has_bias ? desc.bias[o] : 0.0;
        for (std::size_t c = 0; c < a.size(); ++c) acc += w[c] * a[c];
        y[o] = acc;
      }
    }
  });
  return out;
}

DescriptorGradients DescriptorGradients::zeros_like(const PatchDescriptor& desc) {
  return {Matrix(desc.weight.rows, desc.weight.cols), std::vector<double>(desc.bias.size(), 0.0)};
}

DescriptorGradients& DescriptorGradients::operator+=(const DescriptorGradients& other) {
  if (other.weight.data.size() != weight.data.size() || other.bias.size() != bias.size())
    throw ShapeError("gradient shapes differ");
  for (std::size_t i = 0; i < weight.data.size(); ++i) weight.data[i] += other.weight.data[i];
  for (std::size_t i = 0; i < bias.size(); ++i) bias[i] += other.bias[i];
  return *this;
}

DescriptorGradients& DescriptorGradients::operator*=(double s) {
  for (auto& v : weight.data) v *= s;
  for (auto& v : bias) v *= s;
  return *this;
}

DescriptorGradients backward(const PatchDescriptor& desc, const PatchGrid& grid, const EmbeddedGrid& upstream) {
  if (grid.dim() != desc.in_dim) throw ShapeError("backward: grid dimension does not match descriptor");
  return backward(desc, augment(grid), upstream);
}

DescriptorGradients backward(const PatchDescriptor& desc, const Matrix& augmented, const EmbeddedGrid& upstream) {
  if (upstream.dim != desc.out_dim || upstream.patch_count() != augmented.rows ||
      augmented.cols != desc.augmented_dim())
    throw ShapeError("backward: upstream gradient shape mismatch");
  auto grads = DescriptorGradients::zeros_like(desc);
  const std::size_t T = augmented.rows;
  parallel_for(desc.out_dim, [&](std::size_t begin, std::size_t end) {
    for (std::size_t o = begin; o < end; ++o) {
      auto gw = grads.weight.row(o);
      double gb = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const double g = upstream.data[t * desc.out_dim + o];
        if (g == 0.0) continue;
        const auto a = augmented.row(t);
        for (std::size_t c = 0; c < a.size(); ++c) gw[c] += g * a[c];
        gb += g;
      }
      if (desc.has_bias) grads.bias[o] = gb;
    }
  });
  return grads;
}

OptimizerState OptimizerState::for_descriptor(const PatchDescriptor& desc) {
  const std::size_t n = desc.parameter_count();
  return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0};
}

void optimizer_step(PatchDescriptor& desc, OptimizerState& state, const DescriptorGradients& grads,
                    const AdamWConfig& config) {
  const std::size_t nw = desc.weight.data.size();
  const std::size_t n = desc.parameter_count();
  if (grads.weight.data.size() != nw || grads.bias.size() != desc.bias.size())
    throw ShapeError("optimizer_step: gradient shape mismatch");
  if (state.first_moment.size() != n || state.second_moment.size() != n || state.max_second_moment.size() != n)
    throw ShapeError("optimizer_step: optimizer state shape mismatch");
  auto grad_at = [&](std::size_t i) { return i < nw ? grads.weight.data[i] : grads.bias[i - nw]; };
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(grad_at(i)))
      throw NumericError("optimizer_step: non-finite gradient at parameter " + std::to_string(i));

  state.step_count += 1;
  const double step = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(config.beta1, step);
  const double bc2 = 1.0 - std::pow(config.beta2, step);
  const double decay = 1.0 - config.lr * config.weight_decay;

  for (std::size_t i = 0; i < n; ++i) {
    double& p = i < nw ? desc.weight.data[i] : desc.bias[i - nw];
    const double g = grad_at(i);
    p *= decay;
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g * g;
    double v_used = v;
    if (config.amsgrad) {
      state.max_second_moment[i] = std::max(state.max_second_moment[i], v);
      v_used = state.max_second_moment[i];
    }
    const double denom = std::sqrt(v_used) / std::sqrt(bc2) + config.eps;
    p -= config.lr / bc1 * m / denom;
  }
}

}  // namespace cfa
