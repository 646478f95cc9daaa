#pragma once

// Seeded synthetic face-like data: shapes drawn from a planted PDM around an
// ibug-style template, rendered as oriented Gaussian blobs on a noisy
// background so the gradient descriptors carry landmark information.

#include "gnf/dataset_io.hpp"
#include "gnf/image.hpp"
#include "gnf/shape_model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gnf {

struct SynthConfig {
  int count = 20;
  /// 68 gives the ibug layout, 51 drops the jaw line; other counts use a
  /// generic ring layout.
  int points = 68;
  int image_size = 256;
  int planted_modes = 4;
  /// Standard deviation of the planted coefficients, in template pixels.
  double mode_stddev = 4.0;
  /// Face width (template units) as a fraction of the image side.
  double face_fraction = 0.45;
  double scale_jitter = 0.1;
  /// Rotation range in radians (uniform +-).
  double rotation = 0.2;
  /// Face center offset from the image center, fraction of the image side.
  double shift = 0.05;
  /// Per-landmark Gaussian noise added after synthesis, in pixels.
  double point_noise = 0.0;
  /// Box placement noise: center shift and size change, fractions of the box side.
  double bbox_shift = 0.06;
  double bbox_scale = 0.06;
  double blob_sigma_major = 3.5;
  double blob_sigma_minor = 1.5;
  double blob_amplitude = 90.0;
  double background_noise = 6.0;
};

struct SynthExample {
  GrayImage image;
  Shape shape;
  BBox bbox;
  /// Planted parameters (rigid part in image pixels).
  ParamVector params;
};

struct SynthDataset {
  Pdm planted;
  std::vector<SynthExample> examples;
};

/// Reference layout in a face frame roughly 2 units wide, centered at 0.
Shape face_template(int points);

/// Orthonormal smooth deformation basis over the template.
Pdm planted_pdm(const SynthConfig& config);

/// Deterministic for a given (config, seed).
SynthDataset synth_generate(const SynthConfig& config, std::uint64_t seed);

/// Writes img_NNNN.pgm / img_NNNN.pts pairs and manifest.tsv into `dir`
/// (created if missing). Returns the manifest path. Throws DataError when
/// the directory cannot be written.
std::string write_dataset(const SynthDataset& data, const std::string& dir);

std::vector<TrainingSample> to_training_samples(const SynthDataset& data);

}  // namespace gnf
