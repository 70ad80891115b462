#pragma once

#include <filesystem>

#include "cfa/descriptor.hpp"
#include "cfa/feature_io.hpp"
#include "cfa/memory_bank.hpp"
#include "cfa/scoring.hpp"

namespace cfa {

// Checkpoints use the feature-file container with their own magic. Values
// are stored as f32, so a save rounds double parameters once; a
// load/save cycle after that is bit-exact.
inline constexpr Magic kDescriptorMagic = {'C', 'F', 'A', 'D', 'E', 'S', 'C', '\0'};
inline constexpr Magic kBankMagic = {'C', 'F', 'A', 'B', 'A', 'N', 'K', '\0'};
inline constexpr Magic kScoreMagic = {'C', 'F', 'A', 'S', 'C', 'O', 'R', '\0'};

struct DescriptorCheckpoint {
  PatchDescriptor descriptor;
  OptimizerState state;
};

// Tensors: weight (D', D+2, 1), bias (D', 1, 1), then the three moment
// vectors (n, 1, 1). The trailer is JSON with dims, bias flag and step.
void save_descriptor(const PatchDescriptor& descriptor, const OptimizerState& state,
                     const std::filesystem::path& path);
DescriptorCheckpoint load_descriptor(const std::filesystem::path& path);

// One tensor (M, D', 1).
void save_bank(const MemoryBank& bank, const std::filesystem::path& path);
MemoryBank load_bank(const std::filesystem::path& path);

// Raw (1, h, w) and blurred input-resolution (1, H, W) maps; the trailer
// records the image score.
void save_score_map(const AnomalyScoreMap& map, const std::string& sample_id, const std::filesystem::path& path);

}  // namespace cfa
