#include "gnf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gnf {

Normalizer Normalizer::bbox(const BBox& box) {
  Normalizer n;
  n.kind = NormalizerKind::kBBoxSize;
  n.bbox_size = std::sqrt(box.w * box.h);
  return n;
}

namespace {

Point2 mean_of(const Shape& s, std::size_t first, std::size_t count) {
  Point2 c;
  for (std::size_t i = first; i < first + count; ++i) {
    c.x += s.x(i);
    c.y += s.y(i);
  }
  c.x /= static_cast<double>(count);
  c.y /= static_cast<double>(count);
  return c;
}

}  // namespace

double inter_pupil_distance(const Shape& truth) {
  std::size_t left = 0;
  if (truth.size() == 68) {
    left = 36;
  } else if (truth.size() == 51) {
    left = 19;
  } else {
    throw std::invalid_argument("inter-pupil distance needs the 68- or 51-point layout, got " +
                                std::to_string(truth.size()) + " points");
  }
  const Point2 l = mean_of(truth, left, 6);
  const Point2 r = mean_of(truth, left + 6, 6);
  return std::hypot(l.x - r.x, l.y - r.y);
}

double nme(const Shape& predicted, const Shape& truth, const Normalizer& normalizer) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("nme: landmark counts differ");
  const double norm =
      normalizer.kind == NormalizerKind::kInterPupil ? inter_pupil_distance(truth) : normalizer.bbox_size;
  if (!(norm > 0.0)) throw std::invalid_argument("nme: normalizer is zero");
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    total += std::hypot(predicted.x(i) - truth.x(i), predicted.y(i) - truth.y(i));
  }
  return 100.0 * total / static_cast<double>(truth.size()) / norm;
}

std::vector<CedPoint> cumulative_error_distribution(const std::vector<double>& errors, double max_threshold,
                                                    double step) {
  if (!(step > 0.0) || max_threshold < 0.0) throw std::invalid_argument("CED: invalid threshold grid");
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  const auto steps = static_cast<int>(std::llround(max_threshold / step));
  std::vector<CedPoint> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) {
    const double t = i * step;
    const auto below = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    const double frac = sorted.empty() ? 0.0 : static_cast<double>(below) / static_cast<double>(sorted.size());
    out.push_back({t, frac});
  }
  return out;
}

EvalReport make_report(std::vector<std::string> images, std::vector<double> errors) {
  if (images.size() != errors.size()) throw std::invalid_argument("make_report: size mismatch");
  EvalReport r;
  r.images = std::move(images);
  r.per_image = std::move(errors);
  if (!r.per_image.empty()) {
    r.mean = std::accumulate(r.per_image.begin(), r.per_image.end(), 0.0) / static_cast<double>(r.per_image.size());
  }
  r.ced = cumulative_error_distribution(r.per_image);
  return r;
}

std::string per_image_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "index,image,nme\n" << std::setprecision(17);
  for (std::size_t i = 0; i < report.per_image.size(); ++i) {
    out << i << ',' << report.images[i] << ',' << report.per_image[i] << '\n';
  }
  return out.str();
}

std::string ced_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "threshold,fraction\n";
  for (const auto& p : report.ced) out << std::fixed << std::setprecision(1) << p.threshold << ','
                                       << std::setprecision(6) << p.fraction << '\n';
  out << "inf,1.000000\n";
  return out.str();
}

}  // namespace gnf
