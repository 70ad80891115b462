#pragma once

// Central finite differences of the full loss with respect to every
// descriptor parameter, with the loss evaluated through the oracle
// transcriptions rather than the library's kernels.

#include <algorithm>
#include <cmath>
#include <random>

#include "cfa/descriptor.hpp"
#include "cfa/loss.hpp"
#include "cfa/memory_bank.hpp"
#include "test_support.hpp"

namespace testing {

inline double oracle_loss(const cfa::PatchDescriptor& d, const cfa::PatchGrid& g, const cfa::MemoryBank& bank,
                          const cfa::CfaHyperParams& hp) {
  const auto phi = oracle::embed(d.weight.data, d.bias, d.in_dim, d.out_dim, g.features.data, g.height(), g.width());
  const auto centers = to_points(bank);
  return oracle::l_att(phi, centers, hp.k, hp.radius) +
         oracle::l_rep(phi, centers, hp.k, hp.j, hp.radius, hp.alpha,
                       hp.rep_mode == cfa::RepMarginMode::kAsWritten);
}

inline double oracle_kink_margin(const cfa::PatchDescriptor& d, const cfa::PatchGrid& g, const cfa::MemoryBank& bank,
                                 const cfa::CfaHyperParams& hp) {
  const auto phi = oracle::embed(d.weight.data, d.bias, d.in_dim, d.out_dim, g.features.data, g.height(), g.width());
  return oracle::kink_margin(phi, to_points(bank), hp.k, hp.j, hp.radius, hp.alpha);
}

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t parameters = 0;
  bool kink_adjacent = false;  // a perturbation came within reach of a kink
};

// Compares library gradients with central differences at step h.
// `kink_guard` is the smallest admissible distance between any hinge
// argument or neighbor-order gap and its kink, at the base point and at
// every perturbed point.
inline FdReport fd_check(const cfa::PatchDescriptor& desc, const cfa::PatchGrid& grid, const cfa::MemoryBank& bank,
                         const cfa::CfaHyperParams& hp, double h = 1e-4, double kink_guard = 1e-6) {
  FdReport rep;
  const auto emb = cfa::forward(desc, grid);
  const auto loss = cfa::loss_cfa(emb, bank, hp);
  const auto grads = cfa::backward(desc, grid, loss.gradient);

  std::vector<double> analytic(grads.weight.data);
  analytic.insert(analytic.end(), grads.bias.begin(), grads.bias.end());

  if (oracle_kink_margin(desc, grid, bank, hp) < kink_guard) rep.kink_adjacent = true;
  auto probe = desc;
  const std::size_t nw = desc.weight.data.size();
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    double& p = i < nw ? probe.weight.data[i] : probe.bias[i - nw];
    const double saved = p;
    p = saved + h;
    const double up = oracle_loss(probe, grid, bank, hp);
    if (oracle_kink_margin(probe, grid, bank, hp) < kink_guard) rep.kink_adjacent = true;
    p = saved - h;
    const double down = oracle_loss(probe, grid, bank, hp);
    if (oracle_kink_margin(probe, grid, bank, hp) < kink_guard) rep.kink_adjacent = true;
    p = saved;
    const double numeric = (up - down) / (2.0 * h);
    // Relative error with a floor so that exactly-zero gradients compare
    // in absolute terms at the level of f64 cancellation noise.
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    rep.max_rel_error = std::max(rep.max_rel_error, std::abs(analytic[i] - numeric) / scale);
    ++rep.parameters;
  }
  return rep;
}

// Kink crossings inside [p-h, p+h] can hide between the two probes. A
// perturbation of size h moves every embedding by at most h*|a|, so the
// distances move by roughly 2*h*|a|*|phi-c|; guarding with a margin well
// above that keeps the whole interval on one smooth piece.
inline double safe_kink_guard(const cfa::PatchGrid& grid, const cfa::PatchDescriptor& desc,
                              const cfa::MemoryBank& bank, double h) {
  double amax = 1.0;
  for (float v : grid.features.data) amax = std::max(amax, static_cast<double>(std::abs(v)));
  const auto emb = cfa::forward(desc, grid);
  double reach = 0.0;
  for (std::size_t t = 0; t < emb.patch_count(); ++t)
    for (std::size_t j = 0; j < bank.size(); ++j)
      reach = std::max(reach, std::sqrt(cfa::squared_distance(emb.patch(t), bank.centers.row(j))));
  return 4.0 * h * amax * (reach + 1.0) + 1e-6;
}

}  // namespace testing
