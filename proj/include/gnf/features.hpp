#pragma once

// Shape-indexed gradient-orientation descriptors built on integral channels.

#include "gnf/image.hpp"
#include "gnf/shape_model.hpp"

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace gnf {

/// Nine unsigned-orientation bins over [0, pi) plus gradient magnitude, each
/// stored as a (width+1) x (height+1) summed-area table.
class IntegralChannels {
 public:
  static constexpr int kOrientationBins = 9;
  static constexpr int kMagnitude = kOrientationBins;
  static constexpr int kChannelCount = kOrientationBins + 1;

  IntegralChannels(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }

  /// Table entry (x, y) is the sum over pixels [0, x) x [0, y).
  double table(int channel, int x, int y) const { return data_[index(channel, x, y)]; }
  double& table(int channel, int x, int y) { return data_[index(channel, x, y)]; }
  /// All channels of entry (x, y), contiguous.
  const double* entry(int x, int y) const { return data_.data() + index(0, x, y); }
  double* entry(int x, int y) { return data_.data() + index(0, x, y); }

  /// Sum over [x0, x1) x [y0, y1), clipped to the image; empty boxes give 0.
  double rect_sum(int channel, int x0, int y0, int x1, int y1) const;

 private:
  // channel-interleaved so one rectangle corner reads all bins at once
  std::size_t index(int channel, int x, int y) const {
    return ((static_cast<std::size_t>(y) * (static_cast<std::size_t>(width_) + 1) + static_cast<std::size_t>(x)) *
            kChannelCount) +
           static_cast<std::size_t>(channel);
  }

  int width_;
  int height_;
  std::vector<double> data_;
};

/// Central-difference gradients (one-sided at the border); each pixel's
/// magnitude goes to exactly one orientation bin. Requires at least 3x3.
IntegralChannels compute_channels(const GrayImage& image);

/// Orientation bin of a gradient, unsigned over [0, pi).
int orientation_bin(double gx, double gy);

struct DescriptorConfig {
  int window = 40;
  int cells = 4;
  bool normalize = true;

  int length_per_point() const { return cells * cells * IntegralChannels::kOrientationBins; }
};

/// cells x cells grid of orientation histograms in a window centered on the
/// point, ordered (cell row, cell column, bin), L2-normalized unless all zero.
Eigen::VectorXd extract_point_descriptor(const IntegralChannels& channels, Point2 point,
                                         const DescriptorConfig& config = {});

/// Concatenation of per-landmark descriptors in landmark order.
Eigen::VectorXd shape_descriptor(const IntegralChannels& channels, const Shape& shape,
                                 const DescriptorConfig& config = {});

}  // namespace gnf
