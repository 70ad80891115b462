#include "cfa/feature_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cfa/error.hpp"

namespace cfa {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kBadMagic: return "bad magic";
    case FormatErrorKind::kUnsupportedVersion: return "unsupported version";
    case FormatErrorKind::kTruncated: return "truncated";
    case FormatErrorKind::kNonFinite: return "non-finite value";
    case FormatErrorKind::kDimensionOverflow: return "dimension overflow";
    case FormatErrorKind::kInvalidLayout: return "invalid layout";
  }
  return "unknown";
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::string magic_string(const Magic& m) {
  std::string s(m.begin(), m.end());
  while (!s.empty() && s.back() == '\0') s.pop_back();
  return s;
}

// Cursor over an in-memory file image.
class Reader {
 public:
  Reader(const std::vector<char>& bytes, const fs::path& path) : bytes_(bytes), path_(path) {}

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return bytes_.size() - pos_; }

  void need(std::uint64_t n, const char* what) const {
    if (remaining() < n)
      throw FormatError(FormatErrorKind::kTruncated,
                        path_.string() + ": truncated while reading " + what + " at byte " + std::to_string(pos_),
                        pos_);
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
    pos_ += 8;
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32("payload");
    return std::bit_cast<float>(bits);
  }

  void raw(char* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

 private:
  const std::vector<char>& bytes_;
  const fs::path& path_;
  std::uint64_t pos_ = 0;
};

std::vector<char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<char> bytes(size);
  if (size > 0 && !in.read(bytes.data(), static_cast<std::streamsize>(size)))
    throw IoError("failed reading " + path.string());
  return bytes;
}

void check_dim(std::uint64_t d, const fs::path& path, std::uint64_t offset) {
  if (d > kMaxDimension)
    throw FormatError(FormatErrorKind::kDimensionOverflow,
                      path.string() + ": dimension " + std::to_string(d) + " exceeds 2^31-1", offset);
}

void check_magic(const Magic& got, const Magic& expected, const fs::path& path) {
  if (got != expected)
    throw FormatError(FormatErrorKind::kBadMagic,
                      path.string() + ": bad magic, expected '" + magic_string(expected) + "'", 0);
}

}  // namespace

void write_container(const Container& container, const fs::path& path) {
  std::string out;
  std::size_t total = 0;
  for (const auto& t : container.tensors) total += t.size();
  out.reserve(24 + container.tensors.size() * 24 + total * 4 + container.trailer.size());

  out.append(container.magic.data(), container.magic.size());
  put_u32(out, kContainerVersion);
  put_u32(out, static_cast<std::uint32_t>(container.tensors.size()));
  for (const auto& t : container.tensors) {
    for (std::uint64_t d : {std::uint64_t{t.channels}, std::uint64_t{t.height}, std::uint64_t{t.width}}) {
      if (d > kMaxDimension)
        throw FormatError(FormatErrorKind::kDimensionOverflow,
                          path.string() + ": dimension " + std::to_string(d) + " exceeds 2^31-1");
      put_u64(out, d);
    }
    if (t.data.size() != t.size()) throw ShapeError("tensor payload length does not match its dims");
    for (float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  put_u64(out, container.trailer.size());
  out += container.trailer;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

Container read_container(const fs::path& path, const Magic& expected) {
  const std::vector<char> bytes = slurp(path);
  Reader r(bytes, path);
  Container c;
  r.raw(c.magic.data(), c.magic.size(), "magic");
  check_magic(c.magic, expected, path);
  const std::uint32_t version = r.u32("version");
  if (version != kContainerVersion)
    throw FormatError(FormatErrorKind::kUnsupportedVersion,
                      path.string() + ": unsupported version " + std::to_string(version), 8);
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint64_t dims[3];
    for (auto& d : dims) {
      const auto at = r.offset();
      d = r.u64("dims");
      check_dim(d, path, at);
    }
    const std::uint64_t n = dims[0] * dims[1] * dims[2];
    if (r.remaining() / 4 < n)
      throw FormatError(FormatErrorKind::kTruncated,
                        path.string() + ": payload of tensor " + std::to_string(i) + " is shorter than " +
                            std::to_string(n) + " values",
                        r.offset());
    FeatureTensor t(dims[0], dims[1], dims[2]);
    for (std::uint64_t k = 0; k < n; ++k) {
      const auto at = r.offset();
      const float v = r.f32();
      if (!std::isfinite(v))
        throw FormatError(FormatErrorKind::kNonFinite,
                          path.string() + ": non-finite value in tensor " + std::to_string(i) + " at byte offset " +
                              std::to_string(at),
                          at);
      t.data[k] = v;
    }
    c.tensors.push_back(std::move(t));
  }
  const std::uint64_t len = r.u64("trailer length");
  if (r.remaining() < len)
    throw FormatError(FormatErrorKind::kTruncated, path.string() + ": trailer truncated", r.offset());
  c.trailer.resize(len);
  r.raw(c.trailer.data(), len, "trailer");
  if (r.remaining() != 0)
    throw FormatError(FormatErrorKind::kInvalidLayout, path.string() + ": trailing bytes after trailer", r.offset());
  return c;
}

ContainerInfo probe_container(const fs::path& path, const Magic& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  ContainerInfo info;
  info.file_size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);

  std::vector<char> header(16);
  if (info.file_size < 16)
    throw FormatError(FormatErrorKind::kTruncated, path.string() + ": file shorter than header", info.file_size);
  in.read(header.data(), 16);
  Reader hr(header, path);
  Magic m{};
  hr.raw(m.data(), 8, "magic");
  check_magic(m, expected, path);
  if (hr.u32("version") != kContainerVersion)
    throw FormatError(FormatErrorKind::kUnsupportedVersion, path.string() + ": unsupported version", 8);
  const std::uint32_t count = hr.u32("tensor count");

  std::uint64_t pos = 16;
  std::vector<char> buf(24);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (info.file_size - pos < 24)
      throw FormatError(FormatErrorKind::kTruncated, path.string() + ": truncated dims", pos);
    in.seekg(static_cast<std::streamoff>(pos));
    in.read(buf.data(), 24);
    Reader dr(buf, path);
    std::array<std::uint64_t, 3> dims{};
    for (auto& d : dims) {
      d = dr.u64("dims");
      check_dim(d, path, pos);
    }
    pos += 24;
    const std::uint64_t bytes = dims[0] * dims[1] * dims[2] * 4;
    if (info.file_size - pos < bytes)
      throw FormatError(FormatErrorKind::kTruncated, path.string() + ": payload truncated", pos);
    pos += bytes;
    info.shapes.push_back(dims);
  }
  if (info.file_size - pos < 8) throw FormatError(FormatErrorKind::kTruncated, path.string() + ": no trailer", pos);
  in.seekg(static_cast<std::streamoff>(pos));
  in.read(buf.data(), 8);
  Reader tr(buf, path);
  const std::uint64_t len = tr.u64("trailer length");
  if (info.file_size - pos - 8 != len)
    throw FormatError(FormatErrorKind::kInvalidLayout, path.string() + ": trailer length mismatch", pos);
  return info;
}

// ---------------------------------------------------------------------------

void validate_feature_set(const MultiScaleFeatureSet& set) {
  if (set.scales.empty()) throw ShapeError("feature set '" + set.sample_id + "' has no scales");
  std::size_t max_h = 0, max_w = 0;
  for (const auto& s : set.scales) {
    if (s.channels == 0 || s.height == 0 || s.width == 0)
      throw ShapeError("feature set '" + set.sample_id + "' has an empty scale");
    if (s.data.size() != s.size()) throw ShapeError("scale payload length does not match its dims");
    max_h = std::max(max_h, s.height);
    max_w = std::max(max_w, s.width);
  }
  for (const auto& s : set.scales) {
    if (max_h % s.height != 0 || max_w % s.width != 0)
      throw ShapeError("scale " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                       " is not an integer divisor of " + std::to_string(max_h) + "x" + std::to_string(max_w));
    for (float v : s.data)
      if (!std::isfinite(v)) throw ShapeError("feature set '" + set.sample_id + "' contains non-finite values");
  }
}

void write_feature_set(const MultiScaleFeatureSet& set, const fs::path& path) {
  validate_feature_set(set);
  Container c;
  c.magic = kFeatureMagic;
  c.tensors = set.scales;
  c.trailer = set.sample_id;
  write_container(c, path);
}

MultiScaleFeatureSet read_feature_set(const fs::path& path) {
  Container c = read_container(path, kFeatureMagic);
  MultiScaleFeatureSet set;
  set.scales = std::move(c.tensors);
  set.sample_id = std::move(c.trailer);
  try {
    validate_feature_set(set);
  } catch (const ShapeError& e) {
    throw FormatError(FormatErrorKind::kInvalidLayout, path.string() + ": " + e.what());
  }
  return set;
}

// ---------------------------------------------------------------------------

std::vector<ManifestEntry> DatasetManifest::split(Split s) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(e);
  return out;
}

namespace {

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw ManifestError("unknown split '" + s + "'");
}

ImageLabel parse_label(const std::string& s) {
  if (s == "normal") return ImageLabel::kNormal;
  if (s == "anomalous") return ImageLabel::kAnomalous;
  throw ManifestError("unknown image_label '" + s + "'");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ManifestError(path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();

  DatasetManifest m;
  try {
    m.class_name = doc.value("class_name", std::string{});
    const auto& res = doc.at("input_resolution");
    m.input_height = res.at(0).get<std::size_t>();
    m.input_width = res.at(1).get<std::size_t>();
    for (const auto& je : doc.at("entries")) {
      ManifestEntry e;
      e.sample_id = je.at("sample_id").get<std::string>();
      e.split = parse_split(je.at("split").get<std::string>());
      e.label = parse_label(je.at("image_label").get<std::string>());
      e.feature_path = resolve(base, je.at("feature_path").get<std::string>());
      if (je.contains("mask_path") && !je["mask_path"].is_null())
        e.mask_path = resolve(base, je["mask_path"].get<std::string>());
      if (je.contains("image_path") && !je["image_path"].is_null())
        e.image_path = resolve(base, je["image_path"].get<std::string>());
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ManifestError(path.string() + ": " + e.what());
  }
  if (m.input_height == 0 || m.input_width == 0) throw ManifestError(path.string() + ": empty input_resolution");

  for (const auto& e : m.entries) {
    if (e.split == Split::kTrain && e.label != ImageLabel::kNormal)
      throw ManifestError("train entry '" + e.sample_id + "' is labeled anomalous; train split must be normal only");
    if (!fs::exists(e.feature_path))
      throw ManifestError("feature file for '" + e.sample_id + "' not found: " + e.feature_path.string());
    const auto info = probe_container(e.feature_path, kFeatureMagic);
    if (info.shapes.empty()) throw ManifestError("feature file for '" + e.sample_id + "' has no scales");
    if (e.mask_path) {
      if (!fs::exists(*e.mask_path))
        throw ManifestError("mask for '" + e.sample_id + "' not found: " + e.mask_path->string());
      read_mask(*e.mask_path, m.input_height, m.input_width);
    }
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  json doc;
  doc["class_name"] = manifest.class_name;
  doc["input_resolution"] = {manifest.input_height, manifest.input_width};
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    json je;
    je["sample_id"] = e.sample_id;
    je["split"] = e.split == Split::kTrain ? "train" : "test";
    je["image_label"] = e.label == ImageLabel::kNormal ? "normal" : "anomalous";
    je["feature_path"] = e.feature_path.generic_string();
    if (e.mask_path) je["mask_path"] = e.mask_path->generic_string();
    if (e.image_path) je["image_path"] = e.image_path->generic_string();
    entries.push_back(std::move(je));
  }
  doc["entries"] = std::move(entries);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

void write_pgm(const GrayImage& image, const fs::path& path) {
  if (image.pixels.size() != image.height * image.width) throw ShapeError("PGM pixel count does not match its size");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

GrayImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string tag;
  in >> tag;
  if (tag != "P5") throw FormatError(FormatErrorKind::kBadMagic, path.string() + ": not a binary PGM");
  auto next_int = [&]() -> long {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      in >> std::ws;
    }
    long v = -1;
    in >> v;
    return v;
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (!in || w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    throw FormatError(FormatErrorKind::kInvalidLayout, path.string() + ": bad PGM header");
  in.get();
  GrayImage img;
  img.height = static_cast<std::size_t>(h);
  img.width = static_cast<std::size_t>(w);
  img.pixels.resize(img.height * img.width);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw FormatError(FormatErrorKind::kTruncated, path.string() + ": PGM payload truncated");
  return img;
}

GrayImage read_mask(const fs::path& path, std::size_t height, std::size_t width) {
  GrayImage img = read_pgm(path);
  if (img.height != height || img.width != width)
    throw ManifestError(path.string() + ": mask is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                        ", expected " + std::to_string(height) + "x" + std::to_string(width));
  for (auto v : img.pixels)
    if (v > 1) throw ManifestError(path.string() + ": mask values must be 0 or 1");
  return img;
}

}  // namespace cfa
