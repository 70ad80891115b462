#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cfa/descriptor.hpp"
#include "cfa/feature_io.hpp"
#include "cfa/loss.hpp"
#include "cfa/memory_bank.hpp"

namespace cfa {

class GridSource;

// Per-epoch means of the per-sample losses; active counts are epoch totals.
struct EpochLog {
  std::size_t epoch = 0;
  LossBreakdown losses;
};

struct TrainResult {
  PatchDescriptor descriptor;
  OptimizerState state;
  std::vector<EpochLog> log;
};

// Adapts the descriptor against a frozen bank. Each epoch shuffles the
// samples with a PRNG seeded from `seed`, averages per-sample parameter
// gradients over each batch and takes one optimizer step per batch.
TrainResult train(GridSource& samples, PatchDescriptor descriptor, const MemoryBank& bank, const CfaHyperParams& hp,
                  const AdamWConfig& optimizer, std::uint64_t seed);

TrainResult train(const DatasetManifest& manifest, PatchDescriptor descriptor, const MemoryBank& bank,
                  const CfaHyperParams& hp, const AdamWConfig& optimizer, std::uint64_t seed);

// CSV with header epoch,l_att,l_rep,l_total,active_att,active_rep.
void write_loss_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

}  // namespace cfa
