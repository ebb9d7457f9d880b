#include "chr/ingest.hpp"

#include <fstream>
#include <set>
#include <unordered_map>

#include "chr/errors.hpp"

namespace chr {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return c != ' ' && c != '\t' && c != '\r' && c != '\n'; };
  while (!s.empty() && !not_space(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && !not_space(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

std::string at_line(const std::filesystem::path& file, std::size_t line_no) {
  return file.string() + ":" + std::to_string(line_no) + ": ";
}

int parse_int(const std::string& s, const std::filesystem::path& file, std::size_t line_no) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (s.empty() || pos != s.size()) throw DataError(at_line(file, line_no) + "expected an integer, got '" + s + "'");
  return v;
}

// Reads a CSV file and returns (line number, fields) for every non-empty row after the header.
std::vector<std::pair<std::size_t, std::vector<std::string>>> read_csv(const std::filesystem::path& path,
                                                                       std::vector<std::string>& header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read CSV: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (!have_header) {
      // Tolerate a UTF-8 byte order mark.
      if (!fields.empty() && fields[0].rfind("\xEF\xBB\xBF", 0) == 0) fields[0] = fields[0].substr(3);
      header = std::move(fields);
      have_header = true;
      continue;
    }
    rows.emplace_back(line_no, std::move(fields));
  }
  if (!have_header) throw DataError(path.string() + ": missing header row");
  return rows;
}

}  // namespace

std::map<std::string, int> IngestConfig::default_class_map() {
  std::map<std::string, int> m;
  for (int c = 0; c < kNumProhibited; ++c) m.emplace(std::string(kClassNames[static_cast<std::size_t>(c)]), c);
  return m;
}

void IngestConfig::validate() const {
  if (class_map.size() != static_cast<std::size_t>(kNumProhibited)) {
    throw ConfigError("class map must name exactly " + std::to_string(kNumProhibited) + " prohibited classes");
  }
  std::set<int> ids;
  for (const auto& [name, id] : class_map) {
    if (id < 0 || id >= kNumProhibited) throw ConfigError("class '" + name + "' maps outside [0, C')");
    ids.insert(id);
  }
  if (ids.size() != class_map.size()) throw ConfigError("class map assigns one index twice");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

IngestResult ingest(const IngestConfig& config) {
  config.validate();
  std::vector<std::string> header;
  const auto rows = read_csv(config.label_csv, header);

  if (header.size() != static_cast<std::size_t>(kNumProhibited) + 1 || header[0] != "sample_id") {
    throw DataError(config.label_csv.string() + ": header must be sample_id followed by " +
                    std::to_string(kNumProhibited) + " class columns");
  }
  std::vector<int> column_class;
  for (std::size_t k = 1; k < header.size(); ++k) {
    auto it = config.class_map.find(header[k]);
    if (it == config.class_map.end()) {
      throw DataError(at_line(config.label_csv, 1) + "unknown class name '" + header[k] + "'");
    }
    column_class.push_back(it->second);
  }
  if (std::set<int>(column_class.begin(), column_class.end()).size() != column_class.size()) {
    throw DataError(at_line(config.label_csv, 1) + "class column repeated");
  }

  IngestResult result;
  result.manifest.base_dir = config.image_dir;
  std::unordered_map<std::string, std::size_t> index;
  std::set<std::string> skipped;
  for (const auto& [line_no, fields] : rows) {
    if (fields.size() != header.size()) {
      throw DataError(at_line(config.label_csv, line_no) + "expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    }
    const std::string& id = fields[0];
    if (id.empty()) throw DataError(at_line(config.label_csv, line_no) + "empty sample_id");
    if (index.count(id) || skipped.count(id)) {
      throw DataError(at_line(config.label_csv, line_no) + "duplicate sample_id " + id);
    }
    std::vector<std::uint8_t> values(kNumProhibited, 0);
    for (std::size_t k = 1; k < fields.size(); ++k) {
      const int v = parse_int(fields[k], config.label_csv, line_no);
      if (v != 0 && v != 1) throw DataError(at_line(config.label_csv, line_no) + "labels must be 0 or 1");
      values[static_cast<std::size_t>(column_class[k - 1])] = static_cast<std::uint8_t>(v);
    }
    const auto image = std::filesystem::absolute(config.image_dir / (id + config.image_extension)).lexically_normal();
    if (!std::filesystem::exists(image)) {
      skipped.insert(id);
      result.skipped.push_back(id);
      continue;
    }
    ManifestEntry e;
    e.sample_id = id;
    e.image = image.string();
    e.labels = LabelVector::prohibited(std::move(values));
    e.split = config.split;
    index.emplace(id, result.manifest.entries.size());
    result.manifest.entries.push_back(std::move(e));
  }

  if (config.bbox_csv) {
    std::vector<std::string> bheader;
    const auto brows = read_csv(*config.bbox_csv, bheader);
    const std::vector<std::string> expected = {"sample_id", "x_min", "y_min", "x_max", "y_max", "class"};
    if (bheader != expected) {
      throw DataError(config.bbox_csv->string() + ": header must be sample_id,x_min,y_min,x_max,y_max,class");
    }
    for (const auto& [line_no, f] : brows) {
      if (f.size() != expected.size()) {
        throw DataError(at_line(*config.bbox_csv, line_no) + "expected 6 fields, got " + std::to_string(f.size()));
      }
      auto cls = config.class_map.find(f[5]);
      if (cls == config.class_map.end()) {
        throw DataError(at_line(*config.bbox_csv, line_no) + "unknown class name '" + f[5] + "'");
      }
      BBox b{parse_int(f[1], *config.bbox_csv, line_no), parse_int(f[2], *config.bbox_csv, line_no),
             parse_int(f[3], *config.bbox_csv, line_no), parse_int(f[4], *config.bbox_csv, line_no), cls->second};
      if (b.x_min >= b.x_max || b.y_min >= b.y_max || b.x_min < 0 || b.y_min < 0) {
        throw DataError(at_line(*config.bbox_csv, line_no) + "degenerate bbox");
      }
      if (skipped.count(f[0])) continue;
      auto it = index.find(f[0]);
      if (it == index.end()) {
        throw DataError(at_line(*config.bbox_csv, line_no) + "bbox for unknown sample_id " + f[0]);
      }
      auto& entry = result.manifest.entries[it->second];
      if (entry.labels.value(b.class_id) != 1) {
        throw DataError(at_line(*config.bbox_csv, line_no) + "bbox class '" + f[5] + "' is not labelled on " + f[0]);
      }
      entry.bboxes.push_back(b);
    }
  }
  return result;
}

}  // namespace chr
