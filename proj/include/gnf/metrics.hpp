#pragma once

#include "gnf/image.hpp"
#include "gnf/shape_model.hpp"

#include <string>
#include <vector>

namespace gnf {

enum class NormalizerKind { kInterPupil, kBBoxSize };

struct Normalizer {
  NormalizerKind kind = NormalizerKind::kInterPupil;
  /// sqrt(w * h) of the face box; only used by kBBoxSize.
  double bbox_size = 0.0;

  static Normalizer inter_pupil() { return {}; }
  static Normalizer bbox(const BBox& box);
};

/// Distance between the centroids of the two 6-point eye contours
/// (68-point layout: 36-41 and 42-47; 51-point layout: 19-24 and 25-30).
/// Throws std::invalid_argument for other landmark counts.
double inter_pupil_distance(const Shape& truth);

/// 100 * mean point-to-point distance / normalizer. The inter-pupil
/// normalizer is measured on `truth`. Throws std::invalid_argument on
/// mismatched sizes or a zero normalizer.
double nme(const Shape& predicted, const Shape& truth, const Normalizer& normalizer);

struct CedPoint {
  double threshold = 0.0;
  double fraction = 0.0;
};

/// Fraction of errors <= t for t = 0, step, ..., max_threshold.
std::vector<CedPoint> cumulative_error_distribution(const std::vector<double>& errors,
                                                    double max_threshold = 20.0, double step = 0.1);

struct EvalReport {
  std::vector<std::string> images;
  std::vector<double> per_image;
  double mean = 0.0;
  std::vector<CedPoint> ced;
};

EvalReport make_report(std::vector<std::string> images, std::vector<double> errors);

/// "index,image,nme" rows.
std::string per_image_csv(const EvalReport& report);
/// "threshold,fraction" rows, closed by an "inf,1" row.
std::string ced_csv(const EvalReport& report);

}  // namespace gnf
