#include "gnf/synth.hpp"

#include "gnf/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <stdexcept>
#include <system_error>

namespace gnf {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

void add_ellipse(std::vector<Point2>& pts, double cx, double cy, double rx, double ry, int count, double start,
                 double sweep) {
  for (int k = 0; k < count; ++k) {
    const double phi = start - sweep * k / count;
    pts.push_back({cx + rx * std::cos(phi), cy - ry * std::sin(phi)});
  }
}

void add_line(std::vector<Point2>& pts, Point2 a, Point2 b, int count, double bulge) {
  for (int k = 0; k < count; ++k) {
    const double t = count == 1 ? 0.5 : static_cast<double>(k) / (count - 1);
    pts.push_back({a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t - bulge * std::sin(kPi * t)});
  }
}

std::vector<Point2> ibug68() {
  std::vector<Point2> p;
  for (int k = 0; k < 17; ++k) {
    const double t = k / 16.0;
    p.push_back({-std::cos(kPi * t), -0.2 + 1.1 * std::sin(kPi * t)});
  }
  add_line(p, {-0.8, -0.5}, {-0.2, -0.55}, 5, 0.1);  // brows
  add_line(p, {0.2, -0.55}, {0.8, -0.5}, 5, 0.1);
  add_line(p, {0.0, -0.35}, {0.0, 0.12}, 4, 0.0);  // nose bridge
  add_line(p, {-0.2, 0.25}, {0.2, 0.25}, 5, -0.06);
  add_ellipse(p, -0.45, -0.3, 0.18, 0.08, 6, kPi, 2 * kPi);  // eyes
  add_ellipse(p, 0.45, -0.3, 0.18, 0.08, 6, kPi, 2 * kPi);
  add_ellipse(p, 0.0, 0.55, 0.35, 0.15, 12, kPi, 2 * kPi);  // mouth
  add_ellipse(p, 0.0, 0.55, 0.22, 0.07, 8, kPi, 2 * kPi);
  return p;
}

/// Smooth polynomial displacement fields over the template, one per mode.
Eigen::VectorXd polynomial_field(const Shape& s, int j) {
  const auto n = static_cast<Eigen::Index>(s.size());
  Eigen::VectorXd f = Eigen::VectorXd::Zero(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = s.stacked()[i];
    const double y = s.stacked()[n + i];
    switch (j % 6) {
      case 0: f[n + i] = y * y; break;          // vertical elongation of the lower face
      case 1: f[i] = x * y; break;              // lateral lean
      case 2: f[n + i] = x * x; break;          // smile / frown
      case 3: f[i] = x * x * x; break;          // width of the outer contour
      case 4: f[n + i] = std::max(0.0, y - 0.3) * 2.0; break;  // jaw drop
      default: f[i] = x * y * y; f[n + i] = x * x * y; break;
    }
    // later rounds modulate the same fields by a vertical profile
    const double k = std::pow(1.0 + 0.5 * y, j / 6);
    f[i] *= k;
    f[n + i] *= k;
  }
  return f;
}

}  // namespace

Shape face_template(int points) {
  if (points < 3) throw std::invalid_argument("face_template: need at least 3 points");
  std::vector<Point2> p;
  if (points == 68) {
    p = ibug68();
  } else if (points == 51) {
    const auto full = ibug68();
    p.assign(full.begin() + 17, full.end());
  } else {
    for (int k = 0; k < points; ++k) {
      const double phi = 2 * kPi * k / points;
      const double r = 0.6 + 0.3 * std::cos(3 * phi);
      p.push_back({r * std::cos(phi), 0.1 + 1.1 * r * std::sin(phi)});
    }
  }
  return Shape(p);
}

Pdm planted_pdm(const SynthConfig& config) {
  if (config.planted_modes < 0) throw std::invalid_argument("synth: negative mode count");
  const Shape unit = face_template(config.points);
  const Point2 c = unit.centroid();
  const double half_width = 0.5 * config.face_fraction * config.image_size;
  const auto n = static_cast<Eigen::Index>(unit.size());
  Eigen::VectorXd mean = unit.stacked();
  mean.head(n).array() -= c.x;
  mean.tail(n).array() -= c.y;
  mean *= half_width;
  const Shape mean_shape = Shape::from_stacked(mean);

  // Gram-Schmidt against the similarity subspace, then among the modes.
  std::vector<Eigen::VectorXd> basis;
  Eigen::VectorXd rot(2 * n), ones_x = Eigen::VectorXd::Zero(2 * n), ones_y = Eigen::VectorXd::Zero(2 * n);
  rot << -mean.tail(n), mean.head(n);
  ones_x.head(n).setOnes();
  ones_y.tail(n).setOnes();
  for (const Eigen::VectorXd& v : {mean, rot, ones_x, ones_y}) basis.push_back(v.normalized());
  // the four similarity directions are mutually orthogonal for a centered shape
  const int m = std::min<int>(config.planted_modes, static_cast<int>(2 * n) - 4);
  Eigen::MatrixXd modes(2 * n, m);
  for (int j = 0; j < m; ++j) {
    Eigen::VectorXd f = polynomial_field(face_template(config.points), j);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) f -= b.dot(f) * b;
    }
    if (f.norm() < 1e-9) throw std::runtime_error("synth: degenerate planted mode");
    f.normalize();
    basis.push_back(f);
    modes.col(j) = f;
  }
  const double g_std = config.mode_stddev * std::sqrt(static_cast<double>(n));
  return Pdm(mean_shape, modes, Eigen::VectorXd::Constant(m, g_std * g_std));
}

SynthDataset synth_generate(const SynthConfig& config, std::uint64_t seed) {
  if (config.count < 1) throw std::invalid_argument("synth: count must be positive");
  if (config.image_size < 16) throw std::invalid_argument("synth: image too small");
  SynthDataset out;
  out.planted = planted_pdm(config);
  const Pdm& pdm = out.planted;
  const int m = pdm.modes();
  const auto n = static_cast<Eigen::Index>(pdm.points());
  const double size = config.image_size;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // per-landmark blob orientation and polarity are fixed across the dataset
  std::vector<double> orient(static_cast<std::size_t>(n)), polarity(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    orient[static_cast<std::size_t>(i)] = std::fmod(2.399963 * static_cast<double>(i), kPi);
    polarity[static_cast<std::size_t>(i)] = i % 2 == 0 ? 1.0 : -1.0;
  }

  for (int e = 0; e < config.count; ++e) {
    ParamVector p = ParamVector::identity(m);
    const double scale = 1.0 + config.scale_jitter * unit(rng);
    p[ParamVector::kAlphaX] = scale * (1.0 + 0.02 * unit(rng));
    p[ParamVector::kAlphaY] = scale * (1.0 + 0.02 * unit(rng));
    p[ParamVector::kGamma] = config.rotation * unit(rng);
    p[ParamVector::kTx] = 0.5 * size + config.shift * size * unit(rng);
    p[ParamVector::kTy] = 0.5 * size + config.shift * size * unit(rng);
    for (int j = 0; j < m; ++j) p[ParamVector::kRigidCount + j] = std::sqrt(pdm.eigenvalues()[j]) * gauss(rng);

    Eigen::VectorXd xy = synthesize(p, pdm).stacked();
    if (config.point_noise > 0.0) {
      for (Eigen::Index i = 0; i < xy.size(); ++i) xy[i] += config.point_noise * gauss(rng);
    }
    const Shape shape = Shape::from_stacked(xy);

    const double x0 = xy.head(n).minCoeff(), x1 = xy.head(n).maxCoeff();
    const double y0 = xy.tail(n).minCoeff(), y1 = xy.tail(n).maxCoeff();
    double side = 1.25 * std::max(x1 - x0, y1 - y0);
    const double cx = 0.5 * (x0 + x1) + config.bbox_shift * side * unit(rng);
    const double cy = 0.5 * (y0 + y1) + config.bbox_shift * side * unit(rng);
    side *= 1.0 + config.bbox_scale * unit(rng);
    const BBox box{cx - 0.5 * side, cy - 0.5 * side, side, side};

    // background: gentle illumination ramp plus pixel noise
    const int w = config.image_size;
    std::vector<double> canvas(static_cast<std::size_t>(w) * static_cast<std::size_t>(w));
    const double ramp_x = 20.0 * unit(rng) / size, ramp_y = 20.0 * unit(rng) / size;
    for (int y = 0; y < w; ++y) {
      for (int x = 0; x < w; ++x) {
        canvas[static_cast<std::size_t>(y) * w + x] =
            128.0 + ramp_x * (x - 0.5 * size) + ramp_y * (y - 0.5 * size) + config.background_noise * gauss(rng);
      }
    }
    const double sa = config.blob_sigma_major * scale, sb = config.blob_sigma_minor * scale;
    const int reach = static_cast<int>(std::ceil(3.5 * std::max(sa, sb)));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double px = xy[i], py = xy[n + i];
      const double phi = orient[static_cast<std::size_t>(i)] + p.gamma();
      const double c = std::cos(phi), s = std::sin(phi);
      const double amp = config.blob_amplitude * polarity[static_cast<std::size_t>(i)];
      const int bx = static_cast<int>(std::lround(px)), by = static_cast<int>(std::lround(py));
      for (int y = std::max(0, by - reach); y <= std::min(w - 1, by + reach); ++y) {
        for (int x = std::max(0, bx - reach); x <= std::min(w - 1, bx + reach); ++x) {
          const double dx = x - px, dy = y - py;
          const double u = c * dx + s * dy, v = -s * dx + c * dy;
          canvas[static_cast<std::size_t>(y) * w + x] += amp * std::exp(-0.5 * (u * u / (sa * sa) + v * v / (sb * sb)));
        }
      }
    }
    std::vector<std::uint8_t> pixels(canvas.size());
    for (std::size_t k = 0; k < canvas.size(); ++k) {
      pixels[k] = static_cast<std::uint8_t>(std::clamp(std::lround(canvas[k]), 0L, 255L));
    }
    out.examples.push_back({GrayImage(w, w, std::move(pixels)), shape, box, p});
  }
  return out;
}

std::string write_dataset(const SynthDataset& data, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw DataError(DataErrc::kIo, "cannot create output directory '" + dir + "'");
  }
  std::vector<AnnotatedExample> manifest;
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "img_%04zu", i);
    const auto& ex = data.examples[i];
    const std::string image = (fs::path(dir) / (std::string(stem) + ".pgm")).string();
    const std::string pts = (fs::path(dir) / (std::string(stem) + ".pts")).string();
    save_gray(ex.image, image);
    save_pts(ex.shape, pts);
    manifest.push_back({image, pts, ex.shape, ex.bbox});
  }
  const std::string path = (fs::path(dir) / "manifest.tsv").string();
  save_manifest(manifest, path);
  return path;
}

std::vector<TrainingSample> to_training_samples(const SynthDataset& data) {
  std::vector<TrainingSample> out;
  out.reserve(data.examples.size());
  for (const auto& ex : data.examples) out.push_back({ex.image, ex.shape, ex.bbox});
  return out;
}

}  // namespace gnf
