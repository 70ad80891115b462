#pragma once

#include <cstddef>
#include <vector>

#include "cfa/feature_io.hpp"
#include "cfa/patch_features.hpp"

namespace cfa {

// Ordered collection of samples that yields one assembled patch grid at a
// time. Bank modeling and training only ever hold the grid they asked for.
class GridSource {
 public:
  virtual ~GridSource() = default;
  virtual std::size_t size() const = 0;
  virtual PatchGrid load(std::size_t index) = 0;
};

class InMemoryGridSource final : public GridSource {
 public:
  explicit InMemoryGridSource(std::vector<PatchGrid> grids) : grids_(std::move(grids)) {}

  std::size_t size() const override { return grids_.size(); }
  PatchGrid load(std::size_t index) override { return grids_.at(index); }

 private:
  std::vector<PatchGrid> grids_;
};

// Reads and assembles feature files on demand.
class ManifestGridSource final : public GridSource {
 public:
  explicit ManifestGridSource(std::vector<ManifestEntry> entries) : entries_(std::move(entries)) {}

  std::size_t size() const override { return entries_.size(); }
  PatchGrid load(std::size_t index) override;
  const ManifestEntry& entry(std::size_t index) const { return entries_.at(index); }

 private:
  std::vector<ManifestEntry> entries_;
};

PatchGrid load_grid(const ManifestEntry& entry);

}  // namespace cfa
