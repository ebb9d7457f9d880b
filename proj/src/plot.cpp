#include "chr/plot.hpp"

#include <algorithm>
#include <cmath>

#include "chr/errors.hpp"

namespace chr::plot {

namespace {

class Canvas {
 public:
  Canvas(int width, int height, Rgb fill = {255, 255, 255}) {
    img_.width = width;
    img_.height = height;
    img_.data.resize(static_cast<std::size_t>(width) * height * 3);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) set(x, y, fill);
  }
  explicit Canvas(Image8 img) : img_(std::move(img)) {}

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= img_.width || y >= img_.height) return;
    auto* p = &img_.data[(static_cast<std::size_t>(y) * img_.width + x) * 3];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  // Bresenham, thickened to `t` pixels.
  void line(int x0, int y0, int x1, int y1, Rgb c, int t = 1) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < t; ++j) set(x0 + i - t / 2, y0 + j - t / 2, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
  }

  void outline(int x0, int y0, int x1, int y1, Rgb c) {
    line(x0, y0, x1, y0, c);
    line(x1, y0, x1, y1, c);
    line(x1, y1, x0, y1, c);
    line(x0, y1, x0, y0, c);
  }

  Image8 take() { return std::move(img_); }

 private:
  Image8 img_;
};

constexpr Rgb kAxis{0, 0, 0};
constexpr Rgb kGrid{220, 220, 220};

// Blue -> cyan -> yellow -> red.
Rgb heat(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double r = std::clamp(1.5 - std::abs(4.0 * t - 3.0), 0.0, 1.0);
  const double g = std::clamp(1.5 - std::abs(4.0 * t - 2.0), 0.0, 1.0);
  const double b = std::clamp(1.5 - std::abs(4.0 * t - 1.0), 0.0, 1.0);
  return {static_cast<std::uint8_t>(r * 255), static_cast<std::uint8_t>(g * 255), static_cast<std::uint8_t>(b * 255)};
}

}  // namespace

Rgb class_color(int cls) {
  static constexpr Rgb kColors[] = {{214, 39, 40}, {31, 119, 180}, {44, 160, 44}, {255, 127, 14}, {148, 103, 189}};
  return kColors[static_cast<std::size_t>(cls) % std::size(kColors)];
}

std::vector<PrPoint> precision_recall(std::vector<eval::RankedEntry> entries) {
  std::sort(entries.begin(), entries.end(), [](const eval::RankedEntry& a, const eval::RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.sample_id < b.sample_id;
  });
  const auto total = std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.positive; });
  std::vector<PrPoint> out;
  if (total == 0) return out;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    tp += entries[i].positive ? 1 : 0;
    out.push_back({static_cast<double>(tp) / static_cast<double>(total),
                   static_cast<double>(tp) / static_cast<double>(i + 1)});
  }
  return out;
}

Image8 pr_chart(const std::vector<std::vector<PrPoint>>& curves, int size) {
  if (size < 64) throw ConfigError("pr_chart: size must be >= 64");
  Canvas cv(size, size);
  const int m = size / 10;
  const int span = size - 2 * m;
  auto px = [&](double r) { return m + static_cast<int>(std::lround(r * span)); };
  auto py = [&](double p) { return size - m - static_cast<int>(std::lround(p * span)); };
  for (int k = 1; k < 10; ++k) {
    cv.line(px(k / 10.0), py(0), px(k / 10.0), py(1), kGrid);
    cv.line(px(0), py(k / 10.0), px(1), py(k / 10.0), kGrid);
  }
  cv.line(px(0), py(0), px(1), py(0), kAxis);
  cv.line(px(0), py(0), px(0), py(1), kAxis);
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const Rgb col = class_color(static_cast<int>(c));
    const auto& pts = curves[c];
    for (std::size_t i = 1; i < pts.size(); ++i)
      cv.line(px(pts[i - 1].recall), py(pts[i - 1].precision), px(pts[i].recall), py(pts[i].precision), col, 2);
    // legend swatch in the top margin, one per class in order
    const int x = m + static_cast<int>(c) * (m + 4);
    cv.fill_rect(x, m / 4, x + m / 2, m / 4 + m / 2, col);
  }
  return cv.take();
}

Image8 gain_chart(const std::vector<GainPoint>& points, int width, int height) {
  if (width < 64 || height < 64) throw ConfigError("gain_chart: size must be >= 64x64");
  Canvas cv(width, height);
  const int m = std::min(width, height) / 8;
  double lo = 0.0, hi = 0.0, xmin = 0.0, xmax = 1.0;
  if (!points.empty()) {
    xmin = xmax = std::log10(points.front().ratio);
    for (const auto& p : points) {
      if (!(p.ratio > 0)) throw ConfigError("gain_chart: ratio must be positive");
      lo = std::min(lo, p.gain);
      hi = std::max(hi, p.gain);
      xmin = std::min(xmin, std::log10(p.ratio));
      xmax = std::max(xmax, std::log10(p.ratio));
    }
  }
  if (hi - lo < 1e-9) hi = lo + 1e-2;
  xmin -= 0.5;
  xmax += 0.5;
  auto px = [&](double lr) { return m + static_cast<int>(std::lround((lr - xmin) / (xmax - xmin) * (width - 2 * m))); };
  auto py = [&](double g) { return height - m - static_cast<int>(std::lround((g - lo) / (hi - lo) * (height - 2 * m))); };
  cv.line(m, height - m, width - m, height - m, kAxis);
  cv.line(m, height - m, m, m, kAxis);
  cv.line(m, py(0.0), width - m, py(0.0), {150, 150, 150});
  for (int d = static_cast<int>(std::ceil(xmin)); d <= static_cast<int>(std::floor(xmax)); ++d)
    cv.line(px(d), height - m, px(d), height - m + 4, kAxis);
  const int half = std::max(2, (width - 2 * m) / 20);
  for (const auto& p : points) {
    const int x = px(std::log10(p.ratio));
    cv.fill_rect(x - half, py(0.0), x + half, py(p.gain), p.gain >= 0 ? Rgb{44, 160, 44} : Rgb{214, 39, 40});
  }
  return cv.take();
}

std::vector<nn::MatrixD> class_cams(const Model& model, const DatasetItem& item, int cls) {
  const nn::HeadOutput out = model.infer(images_to_tensor(std::vector<const Image8*>{&item.image}));
  std::vector<nn::MatrixD> cams;
  for (int l = 0; l < out.refined.size(); ++l)
    cams.push_back(model.head().cam(out.refined.levels[static_cast<std::size_t>(l)], 0, l, cls));
  return cams;
}

Image8 cam_overlay(const Image8& image, const std::vector<nn::MatrixD>& cams, int cls, const std::vector<BBox>& boxes) {
  const eval::PointChoice pick = eval::pointing_argmax(cams, image.height, image.width);
  const nn::MatrixD up =
      eval::upscale_bilinear(cams[static_cast<std::size_t>(pick.level)], image.height, image.width);
  const auto [lo, hi] = std::minmax_element(up.data.begin(), up.data.end());
  const double range = *hi - *lo > 0 ? *hi - *lo : 1.0;
  Image8 out = image;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const Rgb h = heat((up(y, x) - *lo) / range);
      auto* p = &out.data[(static_cast<std::size_t>(y) * image.width + x) * 3];
      p[0] = static_cast<std::uint8_t>((p[0] + h.r) / 2);
      p[1] = static_cast<std::uint8_t>((p[1] + h.g) / 2);
      p[2] = static_cast<std::uint8_t>((p[2] + h.b) / 2);
    }
  Canvas cv(std::move(out));
  for (const auto& b : boxes)
    if (b.class_id == cls) cv.outline(b.x_min, b.y_min, b.x_max - 1, b.y_max - 1, class_color(cls));
  const Rgb white{255, 255, 255};
  cv.line(pick.col - 3, pick.row, pick.col + 3, pick.row, white);
  cv.line(pick.col, pick.row - 3, pick.col, pick.row + 3, white);
  return cv.take();
}

}  // namespace chr::plot
