#include "cfa/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "cfa/error.hpp"
#include "cfa/grid_source.hpp"

namespace cfa {

TrainResult train(GridSource& samples, PatchDescriptor descriptor, const MemoryBank& bank, const CfaHyperParams& hp,
                  const AdamWConfig& optimizer, std::uint64_t seed) {
  hp.validate(bank.size());
  if (samples.size() == 0) throw ConfigError("train: no training samples");
  if (descriptor.out_dim != bank.dim()) throw ShapeError("train: descriptor output dimension does not match bank");

  TrainResult result;
  result.state = OptimizerState::for_descriptor(descriptor);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(samples.size());

  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    EpochLog entry;
    entry.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t stop = std::min(order.size(), start + hp.batch_size);
      auto batch_grads = DescriptorGradients::zeros_like(descriptor);
      for (std::size_t b = start; b < stop; ++b) {
        const PatchGrid grid = samples.load(order[b]);
        if (grid.dim() != descriptor.in_dim) throw ShapeError("train: sample dimension does not match descriptor");
        const Matrix aug = augment(grid);
        const EmbeddedGrid emb = forward(descriptor, aug, grid.height(), grid.width());
        const LossResult loss = loss_cfa(emb, bank, hp);
        const auto& l = loss.breakdown;
        if (!std::isfinite(l.l_att) || !std::isfinite(l.l_rep))
          throw NumericError("train: non-finite " + std::string(std::isfinite(l.l_att) ? "l_rep" : "l_att") +
                             " at epoch " + std::to_string(epoch) + ", sample " + std::to_string(order[b]));
        batch_grads += backward(descriptor, aug, loss.gradient);
        entry.losses.l_att += l.l_att;
        entry.losses.l_rep += l.l_rep;
        entry.losses.active_att += l.active_att;
        entry.losses.active_rep += l.active_rep;
      }
      batch_grads *= 1.0 / static_cast<double>(stop - start);
      optimizer_step(descriptor, result.state, batch_grads, optimizer);
    }
    const double n = static_cast<double>(order.size());
    entry.losses.l_att /= n;
    entry.losses.l_rep /= n;
    entry.losses.l_total = entry.losses.l_att + entry.losses.l_rep;
    result.log.push_back(entry);
  }
  result.descriptor = std::move(descriptor);
  return result;
}

TrainResult train(const DatasetManifest& manifest, PatchDescriptor descriptor, const MemoryBank& bank,
                  const CfaHyperParams& hp, const AdamWConfig& optimizer, std::uint64_t seed) {
  ManifestGridSource source(manifest.split(Split::kTrain));
  return train(source, std::move(descriptor), bank, hp, optimizer, seed);
}

void write_loss_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "epoch,l_att,l_rep,l_total,active_att,active_rep\n";
  char buf[256];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%zu,%zu\n", e.epoch, e.losses.l_att, e.losses.l_rep,
                  e.losses.l_total, e.losses.active_att, e.losses.active_rep);
    out << buf;
  }
}

}  // namespace cfa
