#pragma once

#include "gnf/shape_model.hpp"

#include <cstdint>
#include <vector>

namespace gnf {

/// 8-bit grayscale image, row-major.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::uint8_t fill = 0);
  GrayImage(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  std::uint8_t at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  const std::vector<std::uint8_t>& pixels() const { return pixels_; }

  bool operator==(const GrayImage&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
};

/// Maps original-image coordinates into a square crop of a bounding box.
/// Pixel centers sit at integer coordinates in both frames.
struct CropTransform {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double scale_x = 1.0;
  double scale_y = 1.0;

  static CropTransform from_bbox(const BBox& box, int crop_size);

  Point2 to_crop(Point2 p) const;
  Point2 to_image(Point2 p) const;
  Shape to_crop(const Shape& s) const;
  Shape to_image(const Shape& s) const;
};

/// Bilinear resampling of the box region to crop_size x crop_size, with
/// edge replication outside the image. Throws std::invalid_argument for a
/// non-positive box or a box entirely outside the image.
GrayImage crop_image(const GrayImage& image, const BBox& box, int crop_size);

}  // namespace gnf
