// Cross-view dataset ingestion: directory scanning into manifests, pair
// loading with resizing, and north-alignment normalization of panoramas.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cvd/core.hpp"
#include "cvd/voxel.hpp"

namespace cvd {

enum class DatasetKind { CVUSA, CVACT, OmniCity };
enum class NorthConvention { CenterColumn, FirstColumn };
enum class Split { Train, Test, Unassigned };

std::string_view to_string(DatasetKind k) noexcept;
std::string_view to_string(Split s) noexcept;
DatasetKind parse_dataset_kind(std::string_view name);
Split parse_split(std::string_view name);

/// Relative-path patterns; "{id}" captures the sample id and "*" matches any
/// run of characters other than '/'. Example: "panorama/{id}.*".
struct LayoutPatterns {
  std::string satellite;
  std::string panorama;
  std::optional<std::string> height;
};

struct LayoutSpec {
  DatasetKind kind = DatasetKind::CVUSA;
  LayoutPatterns patterns;
  NorthConvention north = NorthConvention::CenterColumn;
  bool requires_height = false;
  /// Full 360 x 180 panoramas (width == 2 * height). CVUSA panoramas are
  /// vertically cropped.
  bool full_frame = true;
  std::size_t pano_height = 512;
  std::size_t pano_width = 1024;
  std::size_t satellite_size = 256;
  double height_scale = 0.1;  // meters per 16-bit height-PNG unit

  static LayoutSpec defaults(DatasetKind kind);
};

struct SampleRecord {
  std::string id;
  std::string satellite;  // relative to the manifest root
  std::string panorama;
  std::optional<std::string> height;
  Split split = Split::Unassigned;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct Manifest {
  std::string dataset;
  std::string root;
  std::vector<SampleRecord> samples;  // sorted by id
  std::vector<std::string> warnings;

  const SampleRecord* find(std::string_view id) const;
  friend bool operator==(const Manifest&, const Manifest&) = default;
};

std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(std::string_view text);

/// Lists every sample whose required files are all present. Unpaired files
/// become warnings. `split_file` holds "id,train|test" lines; without one,
/// CVUSA is split 8:2 by a seeded shuffle and the other datasets stay
/// unassigned. Throws RootMissing / EmptyDataset.
Manifest scan_dataset(const std::filesystem::path& root, const LayoutSpec& layout,
                      const std::optional<std::filesystem::path>& split_file = std::nullopt,
                      std::uint64_t seed = 0);

/// Circular horizontal shift by `columns` (output column (x + columns) mod W
/// receives input column x).
Image roll_columns(const Image& img, std::ptrdiff_t columns);

/// Canonical orientation has north at the center column.
Image align_panorama(const Image& panorama, NorthConvention convention);

struct SamplePair {
  std::string id;
  Image satellite;
  Image panorama;  // canonical (north at center column)
  std::optional<HeightField> height;
  NorthConvention convention = NorthConvention::CenterColumn;  // of the source files
  Split split = Split::Unassigned;
};

/// Decodes, resizes (bilinear) and north-aligns one sample.
/// Throws MissingFile / DecodeError carrying the offending path.
SamplePair load_pair(const Manifest& manifest, std::string_view id, const LayoutSpec& layout);

HeightField resize_height(const HeightField& h, Eigen::Index rows, Eigen::Index cols);

}  // namespace cvd
