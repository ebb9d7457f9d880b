#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "chr/datamodel.hpp"
#include "chr/model.hpp"
#include "chr/rng.hpp"

namespace chr::test {

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("chr_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

/// 16x16-input model small enough for finite differences and quick training.
inline ModelConfig tiny_model(Variant v = Variant::kCHR) {
  ModelConfig m;
  m.backbone.input_height = m.backbone.input_width = 16;
  m.backbone.stem_channels = 4;
  m.backbone.stem_stride = 1;
  m.backbone.stage_channels = {4, 6, 8};
  m.backbone.stage_blocks = {1, 1, 1};
  m.backbone.taps = {0, 1, 2};
  m.head_width = 6;
  m.variant = v;
  return m;
}

/// Random-pixel items; every third one is positive for class (i % 5) with a box.
inline Dataset tiny_dataset(int n, int size, Rng& rng) {
  Dataset d;
  for (int i = 0; i < n; ++i) {
    DatasetItem it;
    it.sample_id = "t" + std::to_string(1000 + i);
    std::vector<std::uint8_t> y(5, 0);
    if (i % 3 == 0) y[static_cast<std::size_t>(i % 5)] = 1;
    it.labels = LabelVector::prohibited(y);
    if (i % 3 == 0) it.bboxes = {{2, 2, 9, 9, i % 5}};
    it.image.height = it.image.width = size;
    it.image.data.resize(static_cast<std::size_t>(size * size * 3));
    for (auto& v : it.image.data) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    d.push_back(std::move(it));
  }
  return d;
}

inline std::vector<const DatasetItem*> view(const Dataset& d) {
  std::vector<const DatasetItem*> v;
  for (const auto& it : d) v.push_back(&it);
  return v;
}

}  // namespace chr::test
