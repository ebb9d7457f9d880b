#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chr/datamodel.hpp"

namespace chr {

struct IngestConfig {
  std::filesystem::path image_dir;
  /// CSV with header `sample_id,<class>,...`: one binary column per prohibited class.
  std::filesystem::path label_csv;
  /// Optional CSV with header `sample_id,x_min,y_min,x_max,y_max,class`.
  std::optional<std::filesystem::path> bbox_csv;
  /// Class name to label index; must cover exactly the C' prohibited classes.
  std::map<std::string, int> class_map = default_class_map();
  /// Image file for a row is `image_dir / (sample_id + image_extension)`.
  std::string image_extension = ".png";
  std::string split = "pool";

  static std::map<std::string, int> default_class_map();
  void validate() const;
};

struct IngestResult {
  DatasetManifest manifest;
  /// Rows skipped because their image file does not exist.
  std::vector<std::string> skipped;
};

/// Splits one CSV record on commas; double-quoted fields may contain commas.
std::vector<std::string> split_csv_line(const std::string& line);

/// Builds a manifest from CSV label/bbox tables. Malformed rows and unknown
/// class names raise DataError with the file and line number.
IngestResult ingest(const IngestConfig& config);

}  // namespace chr
