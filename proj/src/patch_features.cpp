#include "cfa/patch_features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cfa/error.hpp"
#include "cfa/parallel.hpp"

namespace cfa {

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

std::vector<Tap> taps(std::size_t src, std::size_t dst) {
  std::vector<Tap> out(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
    if (s < 0.0) s = 0.0;
    auto lo = static_cast<std::size_t>(std::floor(s));
    if (lo > src - 1) lo = src - 1;
    const std::size_t hi = std::min(lo + 1, src - 1);
    out[i] = {lo, hi, s - static_cast<double>(lo)};
  }
  return out;
}

}  // namespace

void bilinear_resize(std::span<const double> src, std::size_t src_h, std::size_t src_w, std::span<double> dst,
                     std::size_t dst_h, std::size_t dst_w) {
  if (src_h == 0 || src_w == 0 || dst_h == 0 || dst_w == 0) throw ShapeError("bilinear_resize: empty plane");
  if (src.size() != src_h * src_w || dst.size() != dst_h * dst_w) throw ShapeError("bilinear_resize: size mismatch");
  const auto ty = taps(src_h, dst_h);
  const auto tx = taps(src_w, dst_w);
  for (std::size_t y = 0; y < dst_h; ++y) {
    const auto& a = ty[y];
    const double* r0 = src.data() + a.lo * src_w;
    const double* r1 = src.data() + a.hi * src_w;
    for (std::size_t x = 0; x < dst_w; ++x) {
      const auto& b = tx[x];
      const double top = r0[b.lo] + (r0[b.hi] - r0[b.lo]) * b.frac;
      const double bottom = r1[b.lo] + (r1[b.hi] - r1[b.lo]) * b.frac;
      dst[y * dst_w + x] = top + (bottom - top) * a.frac;
    }
  }
}

PatchGrid assemble_patch_grid(const MultiScaleFeatureSet& set) {
  if (set.scales.empty()) throw ShapeError("assemble_patch_grid: no scales");
  std::size_t H = 0, W = 0, D = 0;
  for (const auto& s : set.scales) {
    H = std::max(H, s.height);
    W = std::max(W, s.width);
    D += s.channels;
  }
  for (const auto& s : set.scales)
    if (s.height == 0 || s.width == 0 || H % s.height != 0 || W % s.width != 0)
      throw ShapeError("scale " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                       " is not an integer divisor of " + std::to_string(H) + "x" + std::to_string(W));

  PatchGrid grid{FeatureTensor(D, H, W)};
  std::size_t base = 0;
  for (const auto& s : set.scales) {
    if (s.height == H && s.width == W) {
      std::copy(s.data.begin(), s.data.end(), grid.features.data.begin() + static_cast<std::ptrdiff_t>(base * H * W));
    } else {
      parallel_for(s.channels, [&](std::size_t begin, std::size_t end) {
        std::vector<double> src(s.plane()), dst(H * W);
        for (std::size_t c = begin; c < end; ++c) {
          const auto in = s.channel(c);
          std::copy(in.begin(), in.end(), src.begin());
          bilinear_resize(src, s.height, s.width, dst, H, W);
          auto out = grid.features.channel(base + c);
          for (std::size_t i = 0; i < dst.size(); ++i) out[i] = static_cast<float>(dst[i]);
        }
      });
    }
    base += s.channels;
  }
  return grid;
}

std::vector<float> patch_at(const PatchGrid& grid, std::size_t t) {
  if (t >= grid.patch_count())
    throw ShapeError("patch index " + std::to_string(t) + " out of range [0, " + std::to_string(grid.patch_count()) +
                     ")");
  std::vector<float> p(grid.dim());
  const std::size_t plane = grid.patch_count();
  for (std::size_t c = 0; c < p.size(); ++c) p[c] = grid.features.data[c * plane + t];
  return p;
}

}  // namespace cfa
