#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cfa/tensor.hpp"

namespace cfa {

// Binary container shared by feature files, checkpoints and score maps.
//
// Layout (all integers little-endian):
//   magic        8 bytes
//   version      u32 (currently 1)
//   tensor count u32
//   per tensor:  D, H, W as u64, then D*H*W f32 values (channel-major)
//   trailer      u64 byte length, then UTF-8 bytes
// The file must end exactly after the trailer.
using Magic = std::array<char, 8>;

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::uint64_t kMaxDimension = (std::uint64_t{1} << 31) - 1;

inline constexpr Magic kFeatureMagic = {'C', 'F', 'A', 'F', 'E', 'A', 'T', '\0'};

struct Container {
  Magic magic{};
  std::vector<FeatureTensor> tensors;
  std::string trailer;
};

void write_container(const Container& container, const std::filesystem::path& path);

// Reads and validates a container. Throws FormatError on bad magic,
// truncation, non-finite payload values or trailing garbage.
Container read_container(const std::filesystem::path& path, const Magic& expected);

// Shapes of a container without reading its payload; checks that the file
// length matches the header.
struct ContainerInfo {
  std::vector<std::array<std::uint64_t, 3>> shapes;
  std::uint64_t file_size = 0;
};
ContainerInfo probe_container(const std::filesystem::path& path, const Magic& expected);

// Multi-scale feature maps of one sample, in the order written by the
// extractor. Every scale's spatial size must divide the largest one.
struct MultiScaleFeatureSet {
  std::vector<FeatureTensor> scales;
  std::string sample_id;

  bool operator==(const MultiScaleFeatureSet&) const = default;
};

void validate_feature_set(const MultiScaleFeatureSet& set);
void write_feature_set(const MultiScaleFeatureSet& set, const std::filesystem::path& path);
MultiScaleFeatureSet read_feature_set(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Dataset manifest (JSON).

enum class Split { kTrain, kTest };
enum class ImageLabel { kNormal, kAnomalous };

struct ManifestEntry {
  std::string sample_id;
  Split split = Split::kTrain;
  ImageLabel label = ImageLabel::kNormal;
  std::filesystem::path feature_path;
  std::optional<std::filesystem::path> mask_path;
  std::optional<std::filesystem::path> image_path;
};

struct DatasetManifest {
  std::string class_name;
  std::size_t input_height = 0;
  std::size_t input_width = 0;
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> split(Split s) const;
};

// Parses and validates a manifest. Relative paths are resolved against the
// manifest's directory. Feature files are header-checked; masks are read and
// checked for shape and {0,1} values.
DatasetManifest load_manifest(const std::filesystem::path& path);

// Writes paths exactly as stored in the entries.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// 8-bit grayscale images (binary PGM, P5). Used for masks and visualizations.

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

void write_pgm(const GrayImage& image, const std::filesystem::path& path);
GrayImage read_pgm(const std::filesystem::path& path);

// Reads a {0,1} mask and checks its resolution.
GrayImage read_mask(const std::filesystem::path& path, std::size_t height, std::size_t width);

}  // namespace cfa
