#include "cfa/grid_source.hpp"

namespace cfa {

PatchGrid load_grid(const ManifestEntry& entry) { return assemble_patch_grid(read_feature_set(entry.feature_path)); }

PatchGrid ManifestGridSource::load(std::size_t index) { return load_grid(entries_.at(index)); }

}  // namespace cfa
