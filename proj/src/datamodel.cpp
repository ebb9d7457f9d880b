#include "chr/datamodel.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>
#include <unordered_set>

#include "chr/errors.hpp"

namespace chr {

using ojson = nlohmann::ordered_json;

std::optional<int> class_index(std::string_view name) {
  for (int c = 0; c < kNumProhibited; ++c) {
    if (kClassNames[static_cast<std::size_t>(c)] == name) return c;
  }
  return std::nullopt;
}

LabelVector::LabelVector(std::vector<std::uint8_t> values, int prohibited_count)
    : LabelVector(values, std::vector<std::uint8_t>(values.size(), 1), prohibited_count) {}

LabelVector::LabelVector(std::vector<std::uint8_t> values, std::vector<std::uint8_t> observed,
                         int prohibited_count)
    : values_(std::move(values)), observed_(std::move(observed)), prohibited_count_(prohibited_count) {
  if (observed_.size() != values_.size()) throw DataError("label mask length mismatch");
  if (prohibited_count_ < 1 || prohibited_count_ > static_cast<int>(values_.size())) {
    throw DataError("prohibited count must lie in [1, C]");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i] > 1) throw DataError("label entries must be 0 or 1");
    if (observed_[i] > 1) throw DataError("observed mask entries must be 0 or 1");
    if (!observed_[i]) values_[i] = 0;
  }
}

LabelVector LabelVector::prohibited(std::vector<std::uint8_t> values) {
  const int n = static_cast<int>(values.size());
  return LabelVector(std::move(values), n);
}

bool is_positive(const LabelVector& labels) {
  for (int c = 0; c < labels.prohibited_count(); ++c) {
    if (labels.observed(c) && labels.value(c) == 1) return true;
  }
  return false;
}

void validate(const Sample& sample) {
  for (const auto& b : sample.bboxes) {
    if (!b.valid_within(sample.image.height, sample.image.width)) {
      throw DataError("sample " + sample.sample_id + ": bbox outside image bounds");
    }
    if (b.class_id < 0 || b.class_id >= sample.labels.prohibited_count() ||
        sample.labels.value(b.class_id) != 1) {
      throw DataError("sample " + sample.sample_id + ": bbox class " + std::to_string(b.class_id) +
                      " has no positive label");
    }
  }
}

std::size_t DatasetManifest::count_positive() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += is_positive(e.labels) ? 1 : 0;
  return n;
}

std::filesystem::path DatasetManifest::image_path(const ManifestEntry& e) const {
  std::filesystem::path p(e.image);
  return p.is_absolute() ? p : base_dir / p;
}

std::string to_json_line(const ManifestEntry& entry) {
  ojson j;
  j["sample_id"] = entry.sample_id;
  j["image"] = entry.image;
  ojson labels = ojson::array();
  for (int c = 0; c < entry.labels.size(); ++c) {
    if (entry.labels.observed(c)) {
      labels.push_back(static_cast<int>(entry.labels.value(c)));
    } else {
      labels.push_back(nullptr);
    }
  }
  j["labels"] = std::move(labels);
  ojson boxes = ojson::array();
  for (const auto& b : entry.bboxes) boxes.push_back({b.x_min, b.y_min, b.x_max, b.y_max, b.class_id});
  j["bboxes"] = std::move(boxes);
  j["split"] = entry.split;
  return j.dump();
}

ManifestEntry parse_json_line(std::string_view line, std::size_t line_no) {
  const auto where = [&] { return "manifest line " + std::to_string(line_no) + ": "; };
  ojson j;
  try {
    j = ojson::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where() + e.what());
  }
  try {
    ManifestEntry e;
    e.sample_id = j.at("sample_id").get<std::string>();
    e.image = j.at("image").get<std::string>();
    e.split = j.at("split").get<std::string>();
    std::vector<std::uint8_t> values;
    std::vector<std::uint8_t> observed;
    for (const auto& v : j.at("labels")) {
      if (v.is_null()) {
        values.push_back(0);
        observed.push_back(0);
      } else {
        const int x = v.get<int>();
        if (x != 0 && x != 1) throw DataError(where() + "label entries must be 0, 1 or null");
        values.push_back(static_cast<std::uint8_t>(x));
        observed.push_back(1);
      }
    }
    if (values.size() < static_cast<std::size_t>(kNumProhibited)) {
      throw DataError(where() + "expected at least " + std::to_string(kNumProhibited) + " labels");
    }
    e.labels = LabelVector(std::move(values), std::move(observed), kNumProhibited);
    for (const auto& b : j.at("bboxes")) {
      if (!b.is_array() || b.size() != 5) throw DataError(where() + "bbox must have 5 integers");
      BBox box{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>(), b[4].get<int>()};
      if (box.x_min >= box.x_max || box.y_min >= box.y_max) throw DataError(where() + "empty bbox");
      if (box.class_id < 0 || box.class_id >= kNumProhibited) throw DataError(where() + "bbox class out of range");
      e.bboxes.push_back(box);
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(where() + ex.what());
  }
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  for (const auto& e : manifest.entries) out << to_json_line(e) << '\n';
  if (!out) throw DataError("manifest write failed: " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read manifest: " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto e = parse_json_line(line, line_no);
    if (!seen.insert(e.sample_id).second) {
      throw DataError("manifest line " + std::to_string(line_no) + ": duplicate sample_id " + e.sample_id);
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void verify_images_exist(const DatasetManifest& manifest) {
  for (const auto& e : manifest.entries) {
    if (!std::filesystem::exists(manifest.image_path(e))) {
      throw DataError("sample " + e.sample_id + ": image not found: " + manifest.image_path(e).string());
    }
  }
}

Dataset load_dataset(const DatasetManifest& manifest) {
  Dataset out;
  out.reserve(manifest.size());
  for (const auto& e : manifest.entries) {
    DatasetItem item{e.sample_id, e.labels, e.bboxes, {}};
    try {
      item.image = read_png(manifest.image_path(e));
    } catch (const DataError& err) {
      throw DataError("sample " + e.sample_id + ": " + err.what());
    }
    out.push_back(std::move(item));
  }
  return out;
}

}  // namespace chr
