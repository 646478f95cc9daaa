#pragma once

// Parametric shape model: Procrustes alignment, PCA point distribution model,
// shape synthesis from a parameter vector, its Jacobian and Gauss-Newton
// parameter recovery.
//
// Coordinates are always stacked as (x_1..x_N, y_1..y_N).

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace gnf {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// N landmarks in image pixels, stored stacked (x_1..x_N, y_1..y_N).
class Shape {
 public:
  Shape() = default;
  explicit Shape(const std::vector<Point2>& points);
  /// Takes a stacked 2N coordinate vector.
  static Shape from_stacked(Eigen::VectorXd stacked);

  std::size_t size() const { return static_cast<std::size_t>(xy_.size() / 2); }
  bool empty() const { return xy_.size() == 0; }

  double x(std::size_t i) const { return xy_[static_cast<Eigen::Index>(i)]; }
  double y(std::size_t i) const { return xy_[static_cast<Eigen::Index>(size() + i)]; }
  Point2 point(std::size_t i) const { return {x(i), y(i)}; }
  std::vector<Point2> points() const;

  const Eigen::VectorXd& stacked() const { return xy_; }

  Point2 centroid() const;
  Shape translated(double dx, double dy) const;

 private:
  void validate() const;

  Eigen::VectorXd xy_;
};

/// p = (alpha_x, alpha_y, gamma, t_x, t_y, g_1..g_m).
class ParamVector {
 public:
  static constexpr int kRigidCount = 5;
  enum Index : int { kAlphaX = 0, kAlphaY = 1, kGamma = 2, kTx = 3, kTy = 4 };

  ParamVector() = default;
  explicit ParamVector(Eigen::VectorXd values);
  /// Unit scales, zero rotation, translation and deformation.
  static ParamVector identity(int modes);

  int modes() const { return static_cast<int>(values_.size()) - kRigidCount; }
  int dim() const { return static_cast<int>(values_.size()); }

  double alpha_x() const { return values_[kAlphaX]; }
  double alpha_y() const { return values_[kAlphaY]; }
  double gamma() const { return values_[kGamma]; }
  double t_x() const { return values_[kTx]; }
  double t_y() const { return values_[kTy]; }
  Eigen::VectorXd g() const { return values_.tail(modes()); }

  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }
  double operator[](int i) const { return values_[i]; }
  double& operator[](int i) { return values_[i]; }

 private:
  Eigen::VectorXd values_;
};

/// Similarity transform x -> scale * R(angle) * x + translation.
struct RigidTransform {
  double scale = 1.0;
  double angle = 0.0;
  double tx = 0.0;
  double ty = 0.0;

  Shape apply(const Shape& shape) const;
  Point2 apply(Point2 p) const;
  RigidTransform inverse() const;
};

struct ProcrustesResult {
  Shape aligned;
  /// Maps `aligned` back onto the input shape.
  RigidTransform rigid;
};

/// Least-squares similarity alignment of `shape` onto `reference`.
/// Throws std::invalid_argument on size mismatch or degenerate shapes.
ProcrustesResult procrustes_align(const Shape& shape, const Shape& reference);

/// Generalized Procrustes analysis: iteratively aligns every shape to the
/// running mean. The mean keeps the average size of the centered inputs so
/// PDM coefficients stay in pixel-like units.
std::vector<Shape> align_training_shapes(const std::vector<Shape>& shapes, int iterations = 10);

class Pdm {
 public:
  Pdm() = default;
  Pdm(Shape mean_shape, Eigen::MatrixXd basis, Eigen::VectorXd eigenvalues);

  const Shape& mean_shape() const { return mean_; }
  /// 2N x m, column-orthonormal.
  const Eigen::MatrixXd& basis() const { return basis_; }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  int modes() const { return static_cast<int>(basis_.cols()); }
  std::size_t points() const { return mean_.size(); }

 private:
  Shape mean_;
  Eigen::MatrixXd basis_;
  Eigen::VectorXd eigenvalues_;
};

/// PCA over already-aligned shapes. Throws std::invalid_argument when
/// m > 2N, m >= sample count, or the shapes disagree in N.
Pdm build_pdm(const std::vector<Shape>& aligned_shapes, int modes);

/// s(p) = diag(alpha_x, alpha_y) R(gamma) (s0 + Phi g) + t.
Shape synthesize(const ParamVector& p, const Pdm& pdm);

/// Analytic 2N x (m+5) Jacobian of synthesize() at p.
Eigen::MatrixXd shape_jacobian(const ParamVector& p, const Pdm& pdm);

struct FitResult {
  ParamVector params;
  /// Final ||target - s(p)||^2.
  double objective = 0.0;
  /// Objective before the first step and after every accepted step.
  std::vector<double> history;
};

/// Damped Gauss-Newton recovery of p for a target shape. Starts from the
/// Procrustes pose of the mean shape unless `initial` is given.
FitResult fit_parameters(const Shape& target, const Pdm& pdm, int iterations = 100,
                         const ParamVector* initial = nullptr);

}  // namespace gnf
