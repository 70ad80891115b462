#include "cfa/checkpoint.hpp"

#include <json.hpp>

#include "cfa/error.hpp"

namespace cfa {

using nlohmann::json;

namespace {

FeatureTensor pack(std::span<const double> values, std::size_t c, std::size_t h, std::size_t w) {
  FeatureTensor t(c, h, w);
  for (std::size_t i = 0; i < values.size(); ++i) t.data[i] = static_cast<float>(values[i]);
  return t;
}

std::vector<double> unpack(const FeatureTensor& t) { return {t.data.begin(), t.data.end()}; }

json parse_trailer(const std::string& trailer, const std::filesystem::path& path) {
  try {
    return json::parse(trailer);
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorKind::kInvalidLayout, path.string() + ": bad trailer: " + e.what());
  }
}

}  // namespace

void save_descriptor(const PatchDescriptor& d, const OptimizerState& state, const std::filesystem::path& path) {
  const std::size_t n = d.parameter_count();
  if (state.first_moment.size() != n || state.second_moment.size() != n || state.max_second_moment.size() != n)
    throw ShapeError("save_descriptor: optimizer state does not match descriptor");
  Container c;
  c.magic = kDescriptorMagic;
  c.tensors.push_back(pack(d.weight.data, d.out_dim, d.augmented_dim(), 1));
  c.tensors.push_back(pack(d.bias, d.bias.size(), 1, 1));
  c.tensors.push_back(pack(state.first_moment, n, 1, 1));
  c.tensors.push_back(pack(state.second_moment, n, 1, 1));
  c.tensors.push_back(pack(state.max_second_moment, n, 1, 1));
  json meta;
  meta["in_dim"] = d.in_dim;
  meta["out_dim"] = d.out_dim;
  meta["has_bias"] = d.has_bias;
  meta["step_count"] = state.step_count;
  c.trailer = meta.dump();
  write_container(c, path);
}

DescriptorCheckpoint load_descriptor(const std::filesystem::path& path) {
  Container c = read_container(path, kDescriptorMagic);
  if (c.tensors.size() != 5)
    throw FormatError(FormatErrorKind::kInvalidLayout, path.string() + ": expected 5 tensors in descriptor checkpoint");
  const json meta = parse_trailer(c.trailer, path);
  DescriptorCheckpoint ck;
  auto& d = ck.descriptor;
  try {
    d.in_dim = meta.at("in_dim").get<std::size_t>();
    d.out_dim = meta.at("out_dim").get<std::size_t>();
    d.has_bias = meta.at("has_bias").get<bool>();
    ck.state.step_count = meta.at("step_count").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorKind::kInvalidLayout, path.string() + ": " + e.what());
  }
  const auto& w = c.tensors[0];
  if (w.channels != d.out_dim || w.height != d.in_dim + 2 || c.tensors[1].size() != (d.has_bias ? d.out_dim : 0))
    throw FormatError(FormatErrorKind::kInvalidLayout, path.string() + ": descriptor tensor shapes do not match");
  d.weight = Matrix(d.out_dim, d.in_dim + 2);
  d.weight.data = unpack(w);
  d.bias = unpack(c.tensors[1]);
  ck.state.first_moment = unpack(c.tensors[2]);
  ck.state.second_moment = unpack(c.tensors[3]);
  ck.state.max_second_moment = unpack(c.tensors[4]);
  const std::size_t n = d.parameter_count();
  if (ck.state.first_moment.size() != n || ck.state.second_moment.size() != n ||
      ck.state.max_second_moment.size() != n)
    throw FormatError(FormatErrorKind::kInvalidLayout, path.string() + ": optimizer state size does not match");
  return ck;
}

void save_bank(const MemoryBank& bank, const std::filesystem::path& path) {
  Container c;
  c.magic = kBankMagic;
  c.tensors.push_back(pack(bank.centers.data, bank.size(), bank.dim(), 1));
  c.trailer = R"({"metric":"squared_euclidean"})";
  write_container(c, path);
}

MemoryBank load_bank(const std::filesystem::path& path) {
  Container c = read_container(path, kBankMagic);
  if (c.tensors.size() != 1 || c.tensors[0].width != 1 || c.tensors[0].channels == 0)
    throw FormatError(FormatErrorKind::kInvalidLayout, path.string() + ": expected one (M, D', 1) tensor");
  MemoryBank bank{Matrix(c.tensors[0].channels, c.tensors[0].height)};
  bank.centers.data = unpack(c.tensors[0]);
  return bank;
}

void save_score_map(const AnomalyScoreMap& map, const std::string& sample_id, const std::filesystem::path& path) {
  Container c;
  c.magic = kScoreMagic;
  c.tensors.push_back(pack(map.raw.values, 1, map.raw.height, map.raw.width));
  c.tensors.push_back(pack(map.upsampled.values, 1, map.upsampled.height, map.upsampled.width));
  json meta;
  meta["sample_id"] = sample_id;
  meta["image_score"] = map.image_score;
  c.trailer = meta.dump();
  write_container(c, path);
}

}  // namespace cfa
