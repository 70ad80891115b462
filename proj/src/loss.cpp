#include "cfa/loss.hpp"

#include <string>
#include <vector>

#include "cfa/error.hpp"
#include "cfa/parallel.hpp"

namespace cfa {

void CfaHyperParams::validate(std::size_t bank_size) const {
  if (!(radius > 0.0)) throw ConfigError("radius r must be positive");
  if (k < 1 || j < 1) throw ConfigError("K and J must be at least 1");
  if (k + j > bank_size)
    throw ConfigError("K+J=" + std::to_string(k + j) + " exceeds bank size M=" + std::to_string(bank_size));
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
}

namespace {

struct Terms {
  bool att = false;
  bool rep = false;
};

LossResult evaluate(const EmbeddedGrid& embedded, const MemoryBank& bank, const CfaHyperParams& hp, Terms terms) {
  if (embedded.dim != bank.dim()) throw ShapeError("loss: embedding dimension does not match bank");
  if (terms.rep) {
    hp.validate(bank.size());
  } else if (hp.k < 1 || hp.k > bank.size()) {
    throw ConfigError("K=" + std::to_string(hp.k) + " must be in [1, M=" + std::to_string(bank.size()) + "]");
  }

  const std::size_t T = embedded.patch_count();
  const std::size_t d = embedded.dim;
  const std::size_t depth = terms.rep ? hp.k + hp.j : hp.k;
  const GridNeighbors nn = knn_grid(bank, embedded, depth);

  const double r2 = hp.radius * hp.radius;
  const double att_scale = 1.0 / (static_cast<double>(T) * static_cast<double>(hp.k));
  const double rep_scale = 1.0 / (static_cast<double>(T) * static_cast<double>(hp.j));

  LossResult out;
  out.gradient = EmbeddedGrid(d, embedded.height, embedded.width);
  std::vector<double> att(T, 0.0), rep(T, 0.0);
  std::vector<std::size_t> att_active(T, 0), rep_active(T, 0);

  parallel_for(T, [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      const auto phi = embedded.patch(t);
      auto grad = out.gradient.patch(t);
      if (terms.att) {
        for (std::size_t i = 0; i < hp.k; ++i) {
          const double excess = nn.distances[t * depth + i] - r2;
          if (!(excess > 0.0)) continue;
          att[t] += excess;
          ++att_active[t];
          const auto c = bank.centers.row(nn.indices[t * depth + i]);
          for (std::size_t e = 0; e < d; ++e) grad[e] += 2.0 * att_scale * (phi[e] - c[e]);
        }
      }
      if (terms.rep) {
        for (std::size_t i = hp.k; i < depth; ++i) {
          const double dist = nn.distances[t * depth + i];
          const double arg =
              hp.rep_mode == RepMarginMode::kAsWritten ? r2 - dist - hp.alpha : r2 + hp.alpha - dist;
          if (!(arg > 0.0)) continue;
          rep[t] += arg;
          ++rep_active[t];
          const auto c = bank.centers.row(nn.indices[t * depth + i]);
          for (std::size_t e = 0; e < d; ++e) grad[e] -= 2.0 * rep_scale * (phi[e] - c[e]);
        }
      }
    }
  });

  auto& b = out.breakdown;
  for (std::size_t t = 0; t < T; ++t) {
    b.l_att += att[t];
    b.l_rep += rep[t];
    b.active_att += att_active[t];
    b.active_rep += rep_active[t];
  }
  b.l_att *= att_scale;
  b.l_rep *= rep_scale;
  b.l_total = b.l_att + b.l_rep;
  return out;
}

}  // namespace

LossResult loss_att(const EmbeddedGrid& embedded, const MemoryBank& bank, const CfaHyperParams& hp) {
  return evaluate(embedded, bank, hp, {.att = true, .rep = false});
}

LossResult loss_rep(const EmbeddedGrid& embedded, const MemoryBank& bank, const CfaHyperParams& hp) {
  return evaluate(embedded, bank, hp, {.att = false, .rep = true});
}

LossResult loss_cfa(const EmbeddedGrid& embedded, const MemoryBank& bank, const CfaHyperParams& hp) {
  return evaluate(embedded, bank, hp, {.att = true, .rep = true});
}

}  // namespace cfa
