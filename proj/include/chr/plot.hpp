#pragma once

#include <cstdint>
#include <vector>

#include "chr/datamodel.hpp"
#include "chr/evalkit.hpp"
#include "chr/image.hpp"
#include "chr/model.hpp"

namespace chr::plot {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

/// Fixed colour per prohibited class, in class order.
Rgb class_color(int cls);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

/// Precision and recall after each rank of the AP ordering (score descending, sample_id ascending).
std::vector<PrPoint> precision_recall(std::vector<eval::RankedEntry> entries);

/// One curve per class on a white square chart; recall on x, precision on y.
Image8 pr_chart(const std::vector<std::vector<PrPoint>>& curves, int size = 320);

struct GainPoint {
  double ratio = 1.0;
  double gain = 0.0;  // mAP difference, CHR minus baseline
};

/// Bars of gain against log10(ratio), with the zero line drawn in grey.
Image8 gain_chart(const std::vector<GainPoint>& points, int width = 360, int height = 240);

/// Class activation maps of `cls` at every head level for one item.
std::vector<nn::MatrixD> class_cams(const Model& model, const DatasetItem& item, int cls);

/// The chosen level's map blended over the image, boxes of `cls` outlined in
/// the class colour and the pointing pixel marked with a white cross.
Image8 cam_overlay(const Image8& image, const std::vector<nn::MatrixD>& cams, int cls,
                   const std::vector<BBox>& boxes);

}  // namespace chr::plot
