#pragma once

// Annotation (.pts), P5 graymap and dataset-manifest readers/writers.
// Problems with file contents raise gnf::DataError.

#include "gnf/cascade.hpp"
#include "gnf/image.hpp"
#include "gnf/shape_model.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace gnf {

/// Grammar:
///   version: 1
///   n_points: N
///   {
///   x y        (N lines)
///   }
Shape parse_pts(std::istream& in, const std::string& origin = "<stream>");
Shape load_pts(const std::string& path);
/// Writes with 6 decimal places.
void write_pts(std::ostream& out, const Shape& shape);
void save_pts(const Shape& shape, const std::string& path);

/// Binary P5 graymap with maxval 255; header comments allowed.
GrayImage parse_gray(std::istream& in, const std::string& origin = "<stream>");
GrayImage load_gray(const std::string& path);
void save_gray(const GrayImage& image, const std::string& path);

struct AnnotatedExample {
  std::string image_path;
  std::string pts_path;
  Shape shape;
  BBox bbox;
};

/// One tab-separated line per example: image_path pts_path x y w h.
/// Relative paths resolve against the manifest's directory; blank lines and
/// lines starting with '#' are skipped. Loads every .pts file.
std::vector<AnnotatedExample> load_manifest(const std::string& path);
/// Writes paths relative to the manifest directory when they lie below it.
void save_manifest(const std::vector<AnnotatedExample>& examples, const std::string& path);

/// Reads every image of the manifest.
std::vector<TrainingSample> load_samples(const std::vector<AnnotatedExample>& examples);

}  // namespace gnf
