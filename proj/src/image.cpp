#include "gnf/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gnf {

GrayImage::GrayImage(int width, int height, std::uint8_t fill)
    : GrayImage(width, height,
                std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                              static_cast<std::size_t>(std::max(height, 0)),
                                          fill)) {}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width < 1 || height < 1) throw std::invalid_argument("GrayImage: width and height must be >= 1");
  if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw std::invalid_argument("GrayImage: pixel buffer size does not match dimensions");
  }
}

CropTransform CropTransform::from_bbox(const BBox& box, int crop_size) {
  if (!(box.w > 0.0) || !(box.h > 0.0)) throw std::invalid_argument("bounding box must have positive area");
  if (crop_size < 1) throw std::invalid_argument("crop size must be positive");
  CropTransform t;
  t.origin_x = box.x;
  t.origin_y = box.y;
  t.scale_x = crop_size / box.w;
  t.scale_y = crop_size / box.h;
  return t;
}

Point2 CropTransform::to_crop(Point2 p) const {
  return {(p.x - origin_x + 0.5) * scale_x - 0.5, (p.y - origin_y + 0.5) * scale_y - 0.5};
}

Point2 CropTransform::to_image(Point2 p) const {
  return {(p.x + 0.5) / scale_x - 0.5 + origin_x, (p.y + 0.5) / scale_y - 0.5 + origin_y};
}

Shape CropTransform::to_crop(const Shape& s) const {
  const auto n = static_cast<Eigen::Index>(s.size());
  Eigen::VectorXd out(2 * n);
  out.head(n) = (s.stacked().head(n).array() - origin_x + 0.5) * scale_x - 0.5;
  out.tail(n) = (s.stacked().tail(n).array() - origin_y + 0.5) * scale_y - 0.5;
  return Shape::from_stacked(std::move(out));
}

Shape CropTransform::to_image(const Shape& s) const {
  const auto n = static_cast<Eigen::Index>(s.size());
  Eigen::VectorXd out(2 * n);
  out.head(n) = (s.stacked().head(n).array() + 0.5) / scale_x - 0.5 + origin_x;
  out.tail(n) = (s.stacked().tail(n).array() + 0.5) / scale_y - 0.5 + origin_y;
  return Shape::from_stacked(std::move(out));
}

GrayImage crop_image(const GrayImage& image, const BBox& box, int crop_size) {
  const CropTransform t = CropTransform::from_bbox(box, crop_size);
  if (box.x >= image.width() || box.y >= image.height() || box.x + box.w <= 0.0 || box.y + box.h <= 0.0) {
    throw std::invalid_argument("bounding box lies entirely outside the image");
  }
  GrayImage out(crop_size, crop_size);
  const int max_x = image.width() - 1;
  const int max_y = image.height() - 1;
  for (int v = 0; v < crop_size; ++v) {
    const double sy = std::clamp((v + 0.5) / t.scale_y - 0.5 + t.origin_y, 0.0, static_cast<double>(max_y));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, max_y);
    const double fy = sy - y0;
    for (int u = 0; u < crop_size; ++u) {
      const double sx = std::clamp((u + 0.5) / t.scale_x - 0.5 + t.origin_x, 0.0, static_cast<double>(max_x));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, max_x);
      const double fx = sx - x0;
      const double top = (1.0 - fx) * image.at(x0, y0) + fx * image.at(x1, y0);
      const double bottom = (1.0 - fx) * image.at(x0, y1) + fx * image.at(x1, y1);
      const double value = (1.0 - fy) * top + fy * bottom;
      out.at(u, v) = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
    }
  }
  return out;
}

}  // namespace gnf
