#include "cfa/memory_bank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "cfa/descriptor.hpp"
#include "cfa/error.hpp"
#include "cfa/grid_source.hpp"
#include "cfa/parallel.hpp"

namespace cfa {

void BankConfig::validate() const {
  if (!(gamma_c > 0.0 && gamma_c <= 1.0)) throw ConfigError("gamma_c must be in (0, 1]");
  if (!(gamma_d > 0.0 && gamma_d <= 1.0)) throw ConfigError("gamma_d must be in (0, 1]");
  if (!(ema_beta > 0.0 && ema_beta <= 1.0)) throw ConfigError("ema_beta must be in (0, 1]");
  if (kmeans_iters < 1) throw ConfigError("kmeans_iters must be at least 1");
}

std::size_t bank_size(std::size_t patch_count, double gamma_c) {
  if (!(gamma_c > 0.0 && gamma_c <= 1.0)) throw ConfigError("gamma_c must be in (0, 1]");
  const auto m = static_cast<std::size_t>(std::llround(gamma_c * static_cast<double>(patch_count)));
  return std::max<std::size_t>(1, m);
}

namespace {

// Indices of the k smallest entries of `dist`, ordered by (distance, index).
void select_k(const std::vector<double>& dist, std::size_t k, std::vector<std::size_t>& order) {
  order.resize(dist.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
}

}  // namespace

NeighborSet knn(const MemoryBank& bank, std::span<const double> query, std::size_t k) {
  if (k < 1 || k > bank.size())
    throw ConfigError("knn: k=" + std::to_string(k) + " must be in [1, " + std::to_string(bank.size()) + "]");
  if (query.size() != bank.dim()) throw ShapeError("knn: query dimension does not match bank");
  std::vector<double> dist(bank.size());
  for (std::size_t j = 0; j < bank.size(); ++j) dist[j] = squared_distance(query, bank.centers.row(j));
  std::vector<std::size_t> order;
  select_k(dist, k, order);
  NeighborSet out;
  out.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  for (auto i : out.indices) out.distances.push_back(dist[i]);
  return out;
}

GridNeighbors knn_grid(const MemoryBank& bank, const EmbeddedGrid& embedded, std::size_t k) {
  if (k < 1 || k > bank.size())
    throw ConfigError("knn: k=" + std::to_string(k) + " must be in [1, " + std::to_string(bank.size()) + "]");
  if (embedded.dim != bank.dim()) throw ShapeError("knn: embedding dimension does not match bank");
  const std::size_t T = embedded.patch_count();
  GridNeighbors out;
  out.k = k;
  out.indices.resize(T * k);
  out.distances.resize(T * k);
  parallel_for(T, [&](std::size_t begin, std::size_t end) {
    std::vector<double> dist(bank.size());
    std::vector<std::size_t> order;
    for (std::size_t t = begin; t < end; ++t) {
      const auto q = embedded.patch(t);
      for (std::size_t j = 0; j < bank.size(); ++j) dist[j] = squared_distance(q, bank.centers.row(j));
      select_k(dist, k, order);
      for (std::size_t i = 0; i < k; ++i) {
        out.indices[t * k + i] = order[i];
        out.distances[t * k + i] = dist[order[i]];
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Assignment {
  std::vector<std::size_t> label;
  std::vector<double> dist;
  double inertia = 0.0;
};

Assignment assign(const Matrix& centers, const EmbeddedGrid& points) {
  const std::size_t T = points.patch_count();
  Assignment a;
  a.label.resize(T);
  a.dist.resize(T);
  parallel_for(T, [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t j = 0; j < centers.rows; ++j) {
        const double d = squared_distance(points.patch(t), centers.row(j));
        if (d < best) {
          best = d;
          arg = j;
        }
      }
      a.label[t] = arg;
      a.dist[t] = best;
    }
  });
  for (double d : a.dist) a.inertia += d;
  return a;
}

Matrix kmeans_pp_seed(const EmbeddedGrid& points, std::size_t m, std::mt19937_64& rng) {
  const std::size_t T = points.patch_count();
  Matrix centers(m, points.dim);
  std::vector<double> nearest(T, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(T, 0);

  auto take = [&](std::size_t j, std::size_t t) {
    chosen[t] = 1;
    const auto p = points.patch(t);
    std::copy(p.begin(), p.end(), centers.row(j).begin());
    for (std::size_t s = 0; s < T; ++s) nearest[s] = std::min(nearest[s], squared_distance(points.patch(s), p));
  };

  take(0, std::uniform_int_distribution<std::size_t>(0, T - 1)(rng));
  for (std::size_t j = 1; j < m; ++j) {
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t)
      if (!chosen[t]) total += nearest[t];
    std::size_t pick = T;
    if (total > 0.0) {
      const double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      double cum = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        if (chosen[t] || nearest[t] <= 0.0) continue;
        cum += nearest[t];
        pick = t;
        if (cum > r) break;
      }
    } else {
      // Every remaining point coincides with a center; pick uniformly among
      // the points not yet taken.
      std::vector<std::size_t> free;
      for (std::size_t t = 0; t < T; ++t)
        if (!chosen[t]) free.push_back(t);
      pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
    }
    take(j, pick);
  }
  return centers;
}

}  // namespace

MemoryBank kmeans_init(const EmbeddedGrid& embedded, std::size_t m, std::size_t iters, std::uint64_t seed,
                       double tol) {
  const std::size_t T = embedded.patch_count();
  if (m < 1) throw ConfigError("kmeans_init: M must be at least 1");
  if (m > T) throw ConfigError("kmeans_init: M=" + std::to_string(m) + " exceeds patch count T=" + std::to_string(T));
  if (iters < 1) throw ConfigError("kmeans_init: iters must be at least 1");

  std::mt19937_64 rng(seed);
  MemoryBank bank{kmeans_pp_seed(embedded, m, rng)};
  const std::size_t d = embedded.dim;

  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < iters; ++it) {
    Assignment a = assign(bank.centers, embedded);
    if (a.inertia == 0.0) break;
    if (it > 0 && std::abs(previous - a.inertia) <= tol * previous) break;
    previous = a.inertia;

    Matrix sums(m, d);
    std::vector<std::size_t> counts(m, 0);
    for (std::size_t t = 0; t < T; ++t) {
      auto row = sums.row(a.label[t]);
      const auto p = embedded.patch(t);
      for (std::size_t c = 0; c < d; ++c) row[c] += p[c];
      ++counts[a.label[t]];
    }
    for (std::size_t j = 0; j < m; ++j) {
      auto center = bank.centers.row(j);
      if (counts[j] > 0) {
        const auto row = sums.row(j);
        for (std::size_t c = 0; c < d; ++c) center[c] = row[c] / static_cast<double>(counts[j]);
        continue;
      }
      // Empty cluster: move it onto the worst-fit point, which is then
      // excluded from further re-seeds this round.
      std::size_t far = 0;
      for (std::size_t t = 1; t < T; ++t)
        if (a.dist[t] > a.dist[far]) far = t;
      const auto p = embedded.patch(far);
      std::copy(p.begin(), p.end(), center.begin());
      a.dist[far] = -1.0;
    }
  }
  return bank;
}

double inertia(const MemoryBank& bank, const EmbeddedGrid& embedded) { return assign(bank.centers, embedded).inertia; }

// ---------------------------------------------------------------------------

std::vector<std::size_t> match_nearest_unused_indices(const MemoryBank& prev, const EmbeddedGrid& embedded) {
  const std::size_t T = embedded.patch_count();
  const std::size_t M = prev.size();
  if (embedded.dim != prev.dim()) throw ShapeError("match_nearest_unused: embedding dimension does not match bank");
  if (T < M)
    throw ConfigError("match_nearest_unused: patch count T=" + std::to_string(T) + " is smaller than bank size M=" +
                      std::to_string(M));

  std::vector<char> used(T, 0);
  std::vector<std::size_t> match(M);
  const std::size_t workers = std::max<std::size_t>(1, std::min(thread_count(), T));
  std::vector<std::size_t> chunk_arg(workers);
  std::vector<double> chunk_best(workers);
  const std::size_t chunk = (T + workers - 1) / workers;

  for (std::size_t j = 0; j < M; ++j) {
    const auto center = prev.centers.row(j);
    std::fill(chunk_arg.begin(), chunk_arg.end(), T);
    std::fill(chunk_best.begin(), chunk_best.end(), std::numeric_limits<double>::infinity());
    parallel_for(workers, [&](std::size_t wb, std::size_t we) {
      for (std::size_t w = wb; w < we; ++w) {
        const std::size_t begin = w * chunk, end = std::min(T, begin + chunk);
        for (std::size_t t = begin; t < end; ++t) {
          if (used[t]) continue;
          const double dist = squared_distance(embedded.patch(t), center);
          if (chunk_arg[w] == T || dist < chunk_best[w]) {
            chunk_best[w] = dist;
            chunk_arg[w] = t;
          }
        }
      }
    });
    std::size_t arg = T;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t w = 0; w < workers; ++w)
      if (chunk_arg[w] != T && (arg == T || chunk_best[w] < best)) {
        best = chunk_best[w];
        arg = chunk_arg[w];
      }
    if (arg == T) throw Error("match_nearest_unused: ran out of unused patches");
    used[arg] = 1;
    match[j] = arg;
  }
  return match;
}

Matrix match_nearest_unused(const MemoryBank& prev, const EmbeddedGrid& embedded) {
  const auto idx = match_nearest_unused_indices(prev, embedded);
  Matrix out(prev.size(), prev.dim());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto p = embedded.patch(idx[j]);
    std::copy(p.begin(), p.end(), out.row(j).begin());
  }
  return out;
}

MemoryBank ema_update(const MemoryBank& prev, const Matrix& matched, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("ema_update: beta must be in (0, 1]");
  if (matched.rows != prev.centers.rows || matched.cols != prev.centers.cols)
    throw ShapeError("ema_update: matched features do not match bank shape");
  MemoryBank next{Matrix(prev.size(), prev.dim())};
  for (std::size_t i = 0; i < next.centers.data.size(); ++i)
    next.centers.data[i] = (1.0 - beta) * prev.centers.data[i] + beta * matched.data[i];
  return next;
}

MemoryBank build_bank(GridSource& samples, const PatchDescriptor& descriptor, const BankConfig& config) {
  config.validate();
  if (samples.size() == 0) throw ConfigError("build_bank: no training samples");

  MemoryBank bank;
  {
    const EmbeddedGrid first = forward(descriptor, samples.load(0));
    const std::size_t m = bank_size(first.patch_count(), config.gamma_c);
    bank = kmeans_init(first, m, config.kmeans_iters, config.seed, config.kmeans_tol);
  }
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const EmbeddedGrid emb = forward(descriptor, samples.load(i));
    if (emb.patch_count() < bank.size())
      throw ConfigError("build_bank: sample " + std::to_string(i) + " has T=" + std::to_string(emb.patch_count()) +
                        " < M=" + std::to_string(bank.size()));
    bank = ema_update(bank, match_nearest_unused(bank, emb), config.ema_beta);
  }
  return bank;
}

MemoryBank build_bank(const DatasetManifest& manifest, const PatchDescriptor& descriptor, const BankConfig& config) {
  ManifestGridSource source(manifest.split(Split::kTrain));
  return build_bank(source, descriptor, config);
}

}  // namespace cfa
