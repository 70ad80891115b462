#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cfa/tensor.hpp"

namespace cfa {

class GridSource;
struct DatasetManifest;
struct PatchDescriptor;

// M x D' matrix of memorized features. Distances are squared Euclidean.
struct MemoryBank {
  Matrix centers;

  std::size_t size() const noexcept { return centers.rows; }
  std::size_t dim() const noexcept { return centers.cols; }

  bool operator==(const MemoryBank&) const = default;
};

struct BankConfig {
  double gamma_c = 1.0;  // bank size relative to the patch count T
  double gamma_d = 1.0;  // descriptor output dimension relative to D
  // EMA weight of the matched features. Not given for the original method;
  // 0.1 keeps the k-means structure of the first sample dominant.
  double ema_beta = 0.1;
  std::size_t kmeans_iters = 100;
  double kmeans_tol = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;
};

// Number of centers for T patches: max(1, round(gamma_c * T)).
std::size_t bank_size(std::size_t patch_count, double gamma_c);

// Exact neighbors, ascending by distance, ties broken by lower index.
struct NeighborSet {
  std::vector<std::size_t> indices;
  std::vector<double> distances;
};

NeighborSet knn(const MemoryBank& bank, std::span<const double> query, std::size_t k);

// The k nearest centers of every patch, flattened patch-major:
// indices[t * k + i] / distances[t * k + i].
struct GridNeighbors {
  std::size_t k = 0;
  std::vector<std::size_t> indices;
  std::vector<double> distances;
};

GridNeighbors knn_grid(const MemoryBank& bank, const EmbeddedGrid& embedded, std::size_t k);

// Lloyd's algorithm with k-means++ seeding, deterministic in `seed`. Empty
// clusters are re-seeded to the point farthest from its assigned center.
// Stops after `iters` iterations or when the relative inertia change
// drops below `tol`.
MemoryBank kmeans_init(const EmbeddedGrid& embedded, std::size_t m, std::size_t iters, std::uint64_t seed,
                       double tol = 1e-6);

double inertia(const MemoryBank& bank, const EmbeddedGrid& embedded);

// Greedy one-to-one matching: centers in ascending index each take the
// nearest not-yet-taken patch (ties to the lowest patch index).
// Returns the matched patch index per center.
std::vector<std::size_t> match_nearest_unused_indices(const MemoryBank& prev, const EmbeddedGrid& embedded);

// Matched features as an M x D' matrix.
Matrix match_nearest_unused(const MemoryBank& prev, const EmbeddedGrid& embedded);

// (1 - beta) * prev + beta * matched, elementwise. beta must lie in (0, 1].
MemoryBank ema_update(const MemoryBank& prev, const Matrix& matched, double beta);

// Builds the bank from the embeddings of `samples`, in order: k-means on
// sample 0, then one match + EMA step for each later sample. Only one
// sample's embeddings are resident at a time.
MemoryBank build_bank(GridSource& samples, const PatchDescriptor& descriptor, const BankConfig& config);

// Same, over the manifest's train split in manifest order.
MemoryBank build_bank(const DatasetManifest& manifest, const PatchDescriptor& descriptor, const BankConfig& config);

}  // namespace cfa
