#pragma once

#include <cstddef>

#include "cfa/memory_bank.hpp"
#include "cfa/tensor.hpp"

namespace cfa {

// How the margin alpha enters the repulsion hinge.
//   kAsWritten:     max{0, r^2 - D - alpha}
//   kNonDegenerate: max{0, r^2 + alpha - D}
// With r^2 < alpha the first form is identically zero, so the second is the
// default.
enum class RepMarginMode { kAsWritten, kNonDegenerate };

struct CfaHyperParams {
  double radius = 1e-5;
  double alpha = 1e-1;
  std::size_t k = 3;  // attracting neighbors
  std::size_t j = 3;  // hard negatives, the (K+1)..(K+J)-th neighbors
  std::size_t epochs = 30;
  std::size_t batch_size = 4;
  RepMarginMode rep_mode = RepMarginMode::kNonDegenerate;

  // Throws ConfigError unless r > 0, K, J >= 1 and K + J <= bank_size.
  void validate(std::size_t bank_size) const;
};

struct LossBreakdown {
  double l_att = 0.0;
  double l_rep = 0.0;
  double l_total = 0.0;
  std::size_t active_att = 0;
  std::size_t active_rep = 0;
};

// Loss value plus dL/dphi(p_t) for every patch (same layout as the input).
// Neighbor selection is held fixed while differentiating.
struct LossResult {
  LossBreakdown breakdown;
  EmbeddedGrid gradient;
};

// (1 / TK) sum_t sum_k max{0, D(phi_t, c^k_t) - r^2} over the K nearest centers.
LossResult loss_att(const EmbeddedGrid& embedded, const MemoryBank& bank, const CfaHyperParams& hp);

// (1 / TJ) sum_t sum_j hinge(D(phi_t, c^j_t)) over the (K+j)-th nearest centers.
LossResult loss_rep(const EmbeddedGrid& embedded, const MemoryBank& bank, const CfaHyperParams& hp);

// loss_att + loss_rep with one shared neighbor search.
LossResult loss_cfa(const EmbeddedGrid& embedded, const MemoryBank& bank, const CfaHyperParams& hp);

}  // namespace cfa
