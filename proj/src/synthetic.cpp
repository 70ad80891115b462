#include "cfa/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "cfa/error.hpp"

namespace cfa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::size_t max_height(const SyntheticSpec& s) {
  std::size_t h = 0;
  for (const auto& sz : s.scale_sizes) h = std::max(h, sz[0]);
  return h;
}

std::size_t max_width(const SyntheticSpec& s) {
  std::size_t w = 0;
  for (const auto& sz : s.scale_sizes) w = std::max(w, sz[1]);
  return w;
}

std::array<std::size_t, 2> coarsest(const SyntheticSpec& s) {
  std::size_t h = s.scale_sizes.front()[0], w = s.scale_sizes.front()[1];
  for (const auto& sz : s.scale_sizes) {
    h = std::min(h, sz[0]);
    w = std::min(w, sz[1]);
  }
  return {h, w};
}

std::size_t anomaly_area(const SyntheticSpec& s) {
  const auto [hc, wc] = coarsest(s);
  return static_cast<std::size_t>(std::llround(s.anomaly_patch_fraction * static_cast<double>(hc * wc)));
}

std::mt19937_64 seeded(std::uint64_t seed, std::initializer_list<std::uint32_t> tags) {
  std::vector<std::uint32_t> words = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  words.insert(words.end(), tags.begin(), tags.end());
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

// Mode means per scale and per-channel noise levels, shared by all samples.
struct ClassModel {
  std::vector<std::vector<std::vector<double>>> means;  // [scale][mode][channel]
  std::vector<std::vector<double>> noise;               // [scale][channel]
};

ClassModel class_model(const SyntheticSpec& spec) {
  auto rng = seeded(spec.seed, {0xC1A55u});
  std::normal_distribution<double> normal(0.0, 1.0);
  ClassModel model;
  std::size_t total = 0;
  for (std::size_t s = 0; s < spec.scale_channels.size(); ++s) {
    const std::size_t d = spec.scale_channels[s];
    total += d;
    std::vector<std::vector<double>> modes(spec.normal_modes, std::vector<double>(d));
    for (auto& m : modes)
      for (auto& v : m) v = spec.mode_scale * normal(rng);
    model.means.push_back(std::move(modes));
    model.noise.emplace_back(d, spec.noise_std);
  }
  std::vector<std::size_t> channels(total);
  for (std::size_t c = 0; c < total; ++c) channels[c] = c;
  std::shuffle(channels.begin(), channels.end(), rng);
  const auto nuisance = static_cast<std::size_t>(std::llround(spec.nuisance_fraction * static_cast<double>(total)));
  for (std::size_t i = 0; i < nuisance; ++i) {
    std::size_t c = channels[i];
    std::size_t s = 0;
    while (c >= spec.scale_channels[s]) c -= spec.scale_channels[s++];
    model.noise[s][c] = spec.nuisance_std;
  }
  return model;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (train_count < 1 || test_normal_count < 1 || test_anomalous_count < 1)
    throw ConfigError("synthetic: sample counts must be at least 1");
  if (scale_channels.empty() || scale_channels.size() != scale_sizes.size())
    throw ConfigError("synthetic: scale_channels and scale_sizes must be non-empty and equally long");
  for (auto c : scale_channels)
    if (c < 1) throw ConfigError("synthetic: every scale needs at least one channel");
  const std::size_t H = max_height(*this), W = max_width(*this);
  const auto [hc, wc] = coarsest(*this);
  for (const auto& sz : scale_sizes) {
    if (sz[0] < 1 || sz[1] < 1) throw ConfigError("synthetic: empty scale");
    if (H % sz[0] != 0 || W % sz[1] != 0 || sz[0] % hc != 0 || sz[1] % wc != 0)
      throw ConfigError("synthetic: scale sizes must be integer multiples of the coarsest and divide the largest");
  }
  if (pixel_stride < 1) throw ConfigError("synthetic: pixel_stride must be at least 1");
  if (normal_modes < 1) throw ConfigError("synthetic: normal_modes must be at least 1");
  if (!(noise_std >= 0.0) || !(nuisance_std >= 0.0)) throw ConfigError("synthetic: noise levels must be non-negative");
  if (!(nuisance_fraction >= 0.0 && nuisance_fraction <= 1.0))
    throw ConfigError("synthetic: nuisance_fraction must be in [0, 1]");
  if (!(anomaly_shift > 0.0)) throw ConfigError("synthetic: anomaly_shift must be positive");
  if (!(anomaly_patch_fraction > 0.0 && anomaly_patch_fraction < 1.0))
    throw ConfigError("synthetic: anomaly_patch_fraction must be in (0, 1)");
  if (anomaly_area(*this) < 1) throw ConfigError("synthetic: anomaly_patch_fraction too small to cover one patch");
}

std::size_t SyntheticSpec::input_height() const { return max_height(*this) * pixel_stride; }
std::size_t SyntheticSpec::input_width() const { return max_width(*this) * pixel_stride; }

SyntheticSample synthesize_sample(const SyntheticSpec& spec, Split split, bool anomalous, std::size_t index) {
  spec.validate();
  const ClassModel model = class_model(spec);
  auto rng = seeded(spec.seed, {split == Split::kTrain ? 1u : 2u, anomalous ? 1u : 0u,
                                static_cast<std::uint32_t>(index)});
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Smooth mode field over normalized coordinates, mapped onto [0, modes - 1].
  double freq[2][2], phase[2];
  for (int i = 0; i < 2; ++i) {
    freq[i][0] = 0.5 + uniform(rng);
    freq[i][1] = 0.5 + uniform(rng);
    phase[i] = 2.0 * std::numbers::pi * uniform(rng);
  }
  auto field = [&](double v, double u) {
    double s = 0.0;
    for (int i = 0; i < 2; ++i) s += std::sin(2.0 * std::numbers::pi * (freq[i][0] * v + freq[i][1] * u) + phase[i]);
    return (s + 2.0) / 4.0 * static_cast<double>(spec.normal_modes - 1);
  };

  SyntheticSample out;
  out.anomalous = anomalous;
  const std::size_t H = max_height(spec), W = max_width(spec);
  const auto [hc, wc] = coarsest(spec);

  // Anomalous rectangle in coarsest cells, then a shift direction over all channels.
  std::size_t ry0 = 0, ry1 = 0, rx0 = 0, rx1 = 0;
  std::vector<double> direction;
  if (anomalous) {
    const std::size_t area = anomaly_area(spec);
    const std::size_t rh = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(area)))), 1, hc);
    const std::size_t rw = std::clamp<std::size_t>((area + rh - 1) / rh, 1, wc);
    ry0 = std::uniform_int_distribution<std::size_t>(0, hc - rh)(rng);
    rx0 = std::uniform_int_distribution<std::size_t>(0, wc - rw)(rng);
    ry1 = ry0 + rh;
    rx1 = rx0 + rw;
    std::size_t total = 0;
    for (auto c : spec.scale_channels) total += c;
    direction.resize(total);
    double norm = 0.0;
    for (auto& v : direction) {
      v = normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : direction) v *= spec.anomaly_shift / norm;
    out.region = {ry0 * (H / hc), ry1 * (H / hc), rx0 * (W / wc), rx1 * (W / wc)};
  }

  std::size_t channel_base = 0;
  for (std::size_t s = 0; s < spec.scale_channels.size(); ++s) {
    const std::size_t d = spec.scale_channels[s];
    const std::size_t h = spec.scale_sizes[s][0], w = spec.scale_sizes[s][1];
    const std::size_t fy = h / hc, fx = w / wc;
    FeatureTensor t(d, h, w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double u = field((static_cast<double>(y) + 0.5) / static_cast<double>(h),
                               (static_cast<double>(x) + 0.5) / static_cast<double>(w));
        const auto lo = static_cast<std::size_t>(std::floor(u));
        const std::size_t hi = std::min(lo + 1, spec.normal_modes - 1);
        const double frac = u - static_cast<double>(lo);
        const bool shifted = anomalous && y >= ry0 * fy && y < ry1 * fy && x >= rx0 * fx && x < rx1 * fx;
        for (std::size_t c = 0; c < d; ++c) {
          const double mean = model.means[s][lo][c] * (1.0 - frac) + model.means[s][hi][c] * frac;
          double v = mean + model.noise[s][c] * normal(rng);
          if (shifted) v += direction[channel_base + c];
          t.at(c, y, x) = static_cast<float>(v);
        }
      }
    out.features.scales.push_back(std::move(t));
    channel_base += d;
  }

  const char* group = split == Split::kTrain ? "train" : (anomalous ? "test_anomalous" : "test_normal");
  char id[64];
  std::snprintf(id, sizeof id, "%s_%03zu", group, index);
  out.features.sample_id = id;

  out.mask.height = spec.input_height();
  out.mask.width = spec.input_width();
  out.mask.pixels.assign(out.mask.height * out.mask.width, 0);
  if (anomalous) {
    const std::size_t st = spec.pixel_stride;
    for (std::size_t y = out.region[0] * st; y < out.region[1] * st; ++y)
      for (std::size_t x = out.region[2] * st; x < out.region[3] * st; ++x) out.mask.pixels[y * out.mask.width + x] = 1;
  }
  return out;
}

fs::path generate(const SyntheticSpec& spec, const fs::path& out_dir) {
  spec.validate();
  fs::create_directories(out_dir / "features");
  fs::create_directories(out_dir / "masks");

  DatasetManifest manifest;
  manifest.class_name = "synthetic";
  manifest.input_height = spec.input_height();
  manifest.input_width = spec.input_width();

  auto emit = [&](Split split, bool anomalous, std::size_t index) {
    const SyntheticSample s = synthesize_sample(spec, split, anomalous, index);
    ManifestEntry e;
    e.sample_id = s.features.sample_id;
    e.split = split;
    e.label = anomalous ? ImageLabel::kAnomalous : ImageLabel::kNormal;
    e.feature_path = fs::path("features") / (e.sample_id + ".cfaf");
    write_feature_set(s.features, out_dir / e.feature_path);
    if (split == Split::kTest) {
      e.mask_path = fs::path("masks") / (e.sample_id + ".pgm");
      write_pgm(s.mask, out_dir / *e.mask_path);
    }
    manifest.entries.push_back(std::move(e));
  };
  for (std::size_t i = 0; i < spec.train_count; ++i) emit(Split::kTrain, false, i);
  for (std::size_t i = 0; i < spec.test_normal_count; ++i) emit(Split::kTest, false, i);
  for (std::size_t i = 0; i < spec.test_anomalous_count; ++i) emit(Split::kTest, true, i);

  const fs::path path = out_dir / "manifest.json";
  save_manifest(manifest, path);
  return path;
}

SyntheticSpec load_synthetic_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  SyntheticSpec s;
  try {
    const json j = json::parse(in);
    s.seed = j.value("seed", s.seed);
    s.train_count = j.value("train_count", s.train_count);
    s.test_normal_count = j.value("test_normal_count", s.test_normal_count);
    s.test_anomalous_count = j.value("test_anomalous_count", s.test_anomalous_count);
    s.scale_channels = j.value("scale_channels", s.scale_channels);
    s.scale_sizes = j.value("scale_sizes", s.scale_sizes);
    s.pixel_stride = j.value("pixel_stride", s.pixel_stride);
    s.normal_modes = j.value("normal_modes", s.normal_modes);
    s.mode_scale = j.value("mode_scale", s.mode_scale);
    s.noise_std = j.value("noise_std", s.noise_std);
    s.nuisance_fraction = j.value("nuisance_fraction", s.nuisance_fraction);
    s.nuisance_std = j.value("nuisance_std", s.nuisance_std);
    s.anomaly_shift = j.value("anomaly_shift", s.anomaly_shift);
    s.anomaly_patch_fraction = j.value("anomaly_patch_fraction", s.anomaly_patch_fraction);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  s.validate();
  return s;
}

void save_synthetic_spec(const SyntheticSpec& s, const fs::path& path) {
  json j;
  j["seed"] = s.seed;
  j["train_count"] = s.train_count;
  j["test_normal_count"] = s.test_normal_count;
  j["test_anomalous_count"] = s.test_anomalous_count;
  j["scale_channels"] = s.scale_channels;
  j["scale_sizes"] = s.scale_sizes;
  j["pixel_stride"] = s.pixel_stride;
  j["normal_modes"] = s.normal_modes;
  j["mode_scale"] = s.mode_scale;
  j["noise_std"] = s.noise_std;
  j["nuisance_fraction"] = s.nuisance_fraction;
  j["nuisance_std"] = s.nuisance_std;
  j["anomaly_shift"] = s.anomaly_shift;
  j["anomaly_patch_fraction"] = s.anomaly_patch_fraction;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace cfa
