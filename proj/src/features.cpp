#include "gnf/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gnf {

IntegralChannels::IntegralChannels(int width, int height) : width_(width), height_(height) {
  if (width < 1 || height < 1) throw std::invalid_argument("IntegralChannels: empty image");
  data_.assign((static_cast<std::size_t>(width) + 1) * (static_cast<std::size_t>(height) + 1) * kChannelCount, 0.0);
}

double IntegralChannels::rect_sum(int channel, int x0, int y0, int x1, int y1) const {
  x0 = std::clamp(x0, 0, width_);
  x1 = std::clamp(x1, 0, width_);
  y0 = std::clamp(y0, 0, height_);
  y1 = std::clamp(y1, 0, height_);
  if (x1 <= x0 || y1 <= y0) return 0.0;
  return table(channel, x1, y1) - table(channel, x0, y1) - table(channel, x1, y0) + table(channel, x0, y0);
}

int orientation_bin(double gx, double gy) {
  // fold into the upper half plane, then count the bin edges at or below the angle
  if (gy < 0.0 || (gy == 0.0 && gx < 0.0)) {
    gx = -gx;
    gy = -gy;
  }
  static const auto edges = [] {
    std::array<std::array<double, 2>, IntegralChannels::kOrientationBins - 1> e{};
    for (int b = 1; b < IntegralChannels::kOrientationBins; ++b) {
      const double phi = b * std::numbers::pi / IntegralChannels::kOrientationBins;
      e[static_cast<std::size_t>(b - 1)] = {std::cos(phi), std::sin(phi)};
    }
    return e;
  }();
  int bin = 0;
  // angle >= phi  <=>  cross(edge, g) >= 0 for angles in [0, pi)
  for (const auto& e : edges) bin += (e[0] * gy - e[1] * gx) >= 0.0;
  return bin;
}

IntegralChannels compute_channels(const GrayImage& image) {
  const int w = image.width();
  const int h = image.height();
  if (w < 3 || h < 3) throw std::invalid_argument("compute_channels: image must be at least 3x3");

  IntegralChannels out(w, h);
  constexpr int kC = IntegralChannels::kChannelCount;
  for (int y = 0; y < h; ++y) {
    const int ya = y > 0 ? y - 1 : y;
    const int yb = y < h - 1 ? y + 1 : y;
    double acc[kC] = {};
    for (int x = 0; x < w; ++x) {
      const int xa = x > 0 ? x - 1 : x;
      const int xb = x < w - 1 ? x + 1 : x;
      const double gx = (static_cast<double>(image.at(xb, y)) - image.at(xa, y)) / (xb - xa);
      const double gy = (static_cast<double>(image.at(x, yb)) - image.at(x, ya)) / (yb - ya);
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag > 0.0) {
        acc[orientation_bin(gx, gy)] += mag;
        acc[IntegralChannels::kMagnitude] += mag;
      }
      const double* above = out.entry(x + 1, y);
      double* cell = out.entry(x + 1, y + 1);
      for (int c = 0; c < kC; ++c) cell[c] = above[c] + acc[c];
    }
  }
  return out;
}

Eigen::VectorXd extract_point_descriptor(const IntegralChannels& channels, Point2 point,
                                         const DescriptorConfig& config) {
  const int cells = config.cells;
  const int cell_size = config.window / cells;
  const int bins = IntegralChannels::kOrientationBins;
  Eigen::VectorXd out(config.length_per_point());

  const double half = 0.5 * config.window;
  // far-away points read as all-zero cells; the clamp only keeps the rounding in int range
  constexpr double kFar = 1e8;
  const int left = static_cast<int>(std::lround(std::clamp(point.x - half, -kFar, kFar)));
  const int top = static_cast<int>(std::lround(std::clamp(point.y - half, -kFar, kFar)));

  Eigen::Index k = 0;
  for (int cy = 0; cy < cells; ++cy) {
    const int y0 = top + cy * cell_size;
    for (int cx = 0; cx < cells; ++cx) {
      const int x0 = left + cx * cell_size;
      for (int b = 0; b < bins; ++b) {
        out[k++] = channels.rect_sum(b, x0, y0, x0 + cell_size, y0 + cell_size);
      }
    }
  }
  if (config.normalize) {
    const double norm = out.norm();
    if (norm > 0.0) out /= norm;
  }
  return out;
}

Eigen::VectorXd shape_descriptor(const IntegralChannels& channels, const Shape& shape,
                                 const DescriptorConfig& config) {
  const Eigen::Index block = config.length_per_point();
  Eigen::VectorXd out(block * static_cast<Eigen::Index>(shape.size()));
  for (std::size_t i = 0; i < shape.size(); ++i) {
    out.segment(static_cast<Eigen::Index>(i) * block, block) =
        extract_point_descriptor(channels, shape.point(i), config);
  }
  return out;
}

}  // namespace gnf
