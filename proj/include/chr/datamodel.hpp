#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chr/image.hpp"

namespace chr {

/// Number of prohibited classes (C').
inline constexpr int kNumProhibited = 5;

/// Prohibited class names in label-column order.
inline constexpr std::array<std::string_view, kNumProhibited> kClassNames = {
    "gun", "knife", "wrench", "pliers", "scissors"};

/// Index of a prohibited class name, or std::nullopt.
std::optional<int> class_index(std::string_view name);

/// Binary multi-label ground truth of length C. The first C' entries are
/// the prohibited classes; entries may be flagged unobserved, which is
/// distinct from an observed 0.
class LabelVector {
 public:
  LabelVector() = default;
  /// All entries observed.
  LabelVector(std::vector<std::uint8_t> values, int prohibited_count);
  LabelVector(std::vector<std::uint8_t> values, std::vector<std::uint8_t> observed,
              int prohibited_count);

  /// Convenience: C = C' = values.size().
  static LabelVector prohibited(std::vector<std::uint8_t> values);

  int size() const { return static_cast<int>(values_.size()); }
  int prohibited_count() const { return prohibited_count_; }
  std::uint8_t value(int c) const { return values_.at(static_cast<std::size_t>(c)); }
  bool observed(int c) const { return observed_.at(static_cast<std::size_t>(c)) != 0; }
  const std::vector<std::uint8_t>& values() const { return values_; }
  const std::vector<std::uint8_t>& observed_mask() const { return observed_; }

  friend bool operator==(const LabelVector&, const LabelVector&) = default;

 private:
  std::vector<std::uint8_t> values_;
  std::vector<std::uint8_t> observed_;
  int prohibited_count_ = 0;
};

/// Pixel box, half-open: covers columns [x_min, x_max) and rows [y_min, y_max).
struct BBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;
  int class_id = 0;

  bool contains(int x, int y) const { return x >= x_min && x < x_max && y >= y_min && y < y_max; }
  bool valid_within(int height, int width) const {
    return x_min < x_max && y_min < y_max && x_min >= 0 && y_min >= 0 && x_max <= width &&
           y_max <= height;
  }
  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Sample {
  std::string sample_id;
  Image image;
  LabelVector labels;
  std::vector<BBox> bboxes;
};

/// Positive iff any observed prohibited entry is 1.
bool is_positive(const LabelVector& labels);
inline bool is_positive(const Sample& sample) { return is_positive(sample.labels); }

/// Throws DataError when bboxes are out of bounds or name classes whose label is 0.
void validate(const Sample& sample);

struct ManifestEntry {
  std::string sample_id;
  std::string image;  // relative to the manifest's directory unless absolute
  LabelVector labels;
  std::vector<BBox> bboxes;
  std::string split;  // "train", "test" or "pool"

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  /// Directory relative image paths resolve against.
  std::filesystem::path base_dir;

  std::size_t size() const { return entries.size(); }
  std::size_t count_positive() const;
  std::filesystem::path image_path(const ManifestEntry& e) const;
};

/// One JSON object per line: sample_id, image, labels, bboxes, split.
std::string to_json_line(const ManifestEntry& entry);
/// `line_no` is used only for error messages.
ManifestEntry parse_json_line(std::string_view line, std::size_t line_no = 0);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
/// Throws DataError on malformed lines or duplicate sample ids.
DatasetManifest read_manifest(const std::filesystem::path& path);
/// Throws DataError naming the first entry whose image is missing.
void verify_images_exist(const DatasetManifest& manifest);

/// A manifest entry with its pixels resident in memory (8-bit form).
struct DatasetItem {
  std::string sample_id;
  LabelVector labels;
  std::vector<BBox> bboxes;
  Image8 image;
};

using Dataset = std::vector<DatasetItem>;

/// Reads every image referenced by the manifest.
Dataset load_dataset(const DatasetManifest& manifest);

}  // namespace chr
