#include "gnf/shape_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace gnf {

// ---------------------------------------------------------------- Shape

Shape::Shape(const std::vector<Point2>& points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  xy_.resize(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    xy_[i] = points[static_cast<std::size_t>(i)].x;
    xy_[n + i] = points[static_cast<std::size_t>(i)].y;
  }
  validate();
}

Shape Shape::from_stacked(Eigen::VectorXd stacked) {
  if (stacked.size() % 2 != 0) {
    throw std::invalid_argument("stacked shape vector must have even length");
  }
  Shape s;
  s.xy_ = std::move(stacked);
  s.validate();
  return s;
}

void Shape::validate() const {
  if (xy_.size() < 6) {
    throw std::invalid_argument("a shape needs at least 3 landmarks");
  }
  if (!xy_.allFinite()) {
    throw std::invalid_argument("shape coordinates must be finite");
  }
}

std::vector<Point2> Shape::points() const {
  std::vector<Point2> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = point(i);
  return out;
}

Point2 Shape::centroid() const {
  const auto n = static_cast<Eigen::Index>(size());
  return {xy_.head(n).mean(), xy_.tail(n).mean()};
}

Shape Shape::translated(double dx, double dy) const {
  const auto n = static_cast<Eigen::Index>(size());
  Eigen::VectorXd out = xy_;
  out.head(n).array() += dx;
  out.tail(n).array() += dy;
  return from_stacked(std::move(out));
}

// ---------------------------------------------------------------- ParamVector

ParamVector::ParamVector(Eigen::VectorXd values) : values_(std::move(values)) {
  if (values_.size() < kRigidCount) {
    throw std::invalid_argument("parameter vector needs at least 5 entries");
  }
}

ParamVector ParamVector::identity(int modes) {
  if (modes < 0) throw std::invalid_argument("negative mode count");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kRigidCount + modes);
  v[kAlphaX] = 1.0;
  v[kAlphaY] = 1.0;
  return ParamVector(std::move(v));
}

// ---------------------------------------------------------------- RigidTransform

Point2 RigidTransform::apply(Point2 p) const {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {scale * (c * p.x - s * p.y) + tx, scale * (s * p.x + c * p.y) + ty};
}

Shape RigidTransform::apply(const Shape& shape) const {
  const auto n = static_cast<Eigen::Index>(shape.size());
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const auto& xy = shape.stacked();
  Eigen::VectorXd out(2 * n);
  out.head(n) = scale * (c * xy.head(n) - s * xy.tail(n)).array() + tx;
  out.tail(n) = scale * (s * xy.head(n) + c * xy.tail(n)).array() + ty;
  return Shape::from_stacked(std::move(out));
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.scale = 1.0 / scale;
  inv.angle = -angle;
  const Point2 t = RigidTransform{inv.scale, inv.angle, 0.0, 0.0}.apply(Point2{tx, ty});
  inv.tx = -t.x;
  inv.ty = -t.y;
  return inv;
}

// ---------------------------------------------------------------- Procrustes

ProcrustesResult procrustes_align(const Shape& shape, const Shape& reference) {
  if (shape.size() != reference.size()) {
    throw std::invalid_argument("procrustes_align: landmark count mismatch (" +
                                std::to_string(shape.size()) + " vs " +
                                std::to_string(reference.size()) + ")");
  }
  const auto n = static_cast<Eigen::Index>(shape.size());
  const Point2 ms = shape.centroid();
  const Point2 mr = reference.centroid();

  const Eigen::ArrayXd sx = shape.stacked().head(n).array() - ms.x;
  const Eigen::ArrayXd sy = shape.stacked().tail(n).array() - ms.y;
  const Eigen::ArrayXd rx = reference.stacked().head(n).array() - mr.x;
  const Eigen::ArrayXd ry = reference.stacked().tail(n).array() - mr.y;

  const double ref_spread = (rx.square() + ry.square()).sum();
  const double shape_spread = (sx.square() + sy.square()).sum();
  if (!(ref_spread > 0.0)) {
    throw std::invalid_argument("procrustes_align: degenerate reference (zero spread)");
  }
  if (!(shape_spread > 0.0)) {
    throw std::invalid_argument("procrustes_align: degenerate shape (zero spread)");
  }

  const double a = (sx * rx + sy * ry).sum();
  const double b = (sx * ry - sy * rx).sum();
  const double angle = std::atan2(b, a);
  const double scale = std::hypot(a, b) / shape_spread;

  // forward: x -> scale R x + t, mapping the shape centroid onto the reference centroid
  RigidTransform forward{scale, angle, 0.0, 0.0};
  const Point2 rotated_centroid = forward.apply(ms);
  forward.tx = mr.x - rotated_centroid.x;
  forward.ty = mr.y - rotated_centroid.y;

  return {forward.apply(shape), forward.inverse()};
}

std::vector<Shape> align_training_shapes(const std::vector<Shape>& shapes, int iterations) {
  if (shapes.empty()) return {};
  const auto n = static_cast<Eigen::Index>(shapes.front().size());

  std::vector<Shape> centered;
  centered.reserve(shapes.size());
  double mean_size = 0.0;
  for (const auto& s : shapes) {
    if (static_cast<Eigen::Index>(s.size()) != n) {
      throw std::invalid_argument("align_training_shapes: landmark count mismatch");
    }
    const Point2 c = s.centroid();
    centered.push_back(s.translated(-c.x, -c.y));
    mean_size += centered.back().stacked().norm();
  }
  mean_size /= static_cast<double>(shapes.size());

  Shape reference = centered.front();
  std::vector<Shape> aligned = centered;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(2 * n);
    for (std::size_t i = 0; i < centered.size(); ++i) {
      aligned[i] = procrustes_align(centered[i], reference).aligned;
      sum += aligned[i].stacked();
    }
    Shape mean = Shape::from_stacked(sum / static_cast<double>(aligned.size()));
    const Point2 c = mean.centroid();
    mean = mean.translated(-c.x, -c.y);
    const double size = mean.stacked().norm();
    if (!(size > 0.0)) break;
    reference = Shape::from_stacked(mean.stacked() * (mean_size / size));
  }
  return aligned;
}

// ---------------------------------------------------------------- PDM

Pdm::Pdm(Shape mean_shape, Eigen::MatrixXd basis, Eigen::VectorXd eigenvalues)
    : mean_(std::move(mean_shape)), basis_(std::move(basis)), eigenvalues_(std::move(eigenvalues)) {
  if (basis_.rows() != mean_.stacked().size() || eigenvalues_.size() != basis_.cols()) {
    throw std::invalid_argument("Pdm: inconsistent dimensions");
  }
}

Pdm build_pdm(const std::vector<Shape>& aligned_shapes, int modes) {
  if (aligned_shapes.empty()) throw std::invalid_argument("build_pdm: no shapes");
  const auto dim = aligned_shapes.front().stacked().size();
  const auto count = static_cast<Eigen::Index>(aligned_shapes.size());
  if (modes < 0 || modes > dim) {
    throw std::invalid_argument("build_pdm: mode count " + std::to_string(modes) +
                                " exceeds 2N = " + std::to_string(dim));
  }
  if (modes >= count) {
    throw std::invalid_argument("build_pdm: mode count " + std::to_string(modes) +
                                " needs more than " + std::to_string(count) + " shapes");
  }

  Eigen::MatrixXd data(count, dim);
  for (Eigen::Index i = 0; i < count; ++i) {
    const auto& s = aligned_shapes[static_cast<std::size_t>(i)].stacked();
    if (s.size() != dim) throw std::invalid_argument("build_pdm: landmark count mismatch");
    data.row(i) = s.transpose();
  }
  const Eigen::RowVectorXd mean = data.colwise().mean();
  data.rowwise() -= mean;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(data, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double denom = static_cast<double>(std::max<Eigen::Index>(count - 1, 1));

  Eigen::MatrixXd basis = svd.matrixV().leftCols(modes);
  Eigen::VectorXd eig = Eigen::VectorXd::Zero(modes);
  for (int k = 0; k < modes; ++k) {
    if (k < sv.size()) eig[k] = sv[k] * sv[k] / denom;
    // fixed sign: largest-magnitude entry positive
    Eigen::Index arg = 0;
    basis.col(k).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, k) < 0.0) basis.col(k) = -basis.col(k);
  }
  return Pdm(Shape::from_stacked(mean.transpose()), std::move(basis), std::move(eig));
}

// ---------------------------------------------------------------- synthesis

namespace {

void check_params(const ParamVector& p, const Pdm& pdm) {
  if (p.modes() != pdm.modes()) {
    throw std::invalid_argument("parameter vector has " + std::to_string(p.modes()) +
                                " modes, PDM has " + std::to_string(pdm.modes()));
  }
}

Eigen::VectorXd deformed_mean(const ParamVector& p, const Pdm& pdm) {
  Eigen::VectorXd q = pdm.mean_shape().stacked();
  if (pdm.modes() > 0) q.noalias() += pdm.basis() * p.g();
  return q;
}

}  // namespace

Shape synthesize(const ParamVector& p, const Pdm& pdm) {
  check_params(p, pdm);
  const auto n = static_cast<Eigen::Index>(pdm.points());
  const Eigen::VectorXd q = deformed_mean(p, pdm);
  const double c = std::cos(p.gamma());
  const double s = std::sin(p.gamma());
  Eigen::VectorXd out(2 * n);
  out.head(n) = p.alpha_x() * (c * q.head(n) - s * q.tail(n)).array() + p.t_x();
  out.tail(n) = p.alpha_y() * (s * q.head(n) + c * q.tail(n)).array() + p.t_y();
  return Shape::from_stacked(std::move(out));
}

Eigen::MatrixXd shape_jacobian(const ParamVector& p, const Pdm& pdm) {
  check_params(p, pdm);
  const auto n = static_cast<Eigen::Index>(pdm.points());
  const int m = pdm.modes();
  const Eigen::VectorXd q = deformed_mean(p, pdm);
  const double c = std::cos(p.gamma());
  const double s = std::sin(p.gamma());
  const double ax = p.alpha_x();
  const double ay = p.alpha_y();

  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * n, ParamVector::kRigidCount + m);
  const auto qx = q.head(n);
  const auto qy = q.tail(n);

  jac.col(ParamVector::kAlphaX).head(n) = c * qx - s * qy;
  jac.col(ParamVector::kAlphaY).tail(n) = s * qx + c * qy;
  jac.col(ParamVector::kGamma).head(n) = ax * (-s * qx - c * qy);
  jac.col(ParamVector::kGamma).tail(n) = ay * (c * qx - s * qy);
  jac.col(ParamVector::kTx).head(n).setOnes();
  jac.col(ParamVector::kTy).tail(n).setOnes();
  for (int k = 0; k < m; ++k) {
    const auto phi_x = pdm.basis().col(k).head(n);
    const auto phi_y = pdm.basis().col(k).tail(n);
    jac.col(ParamVector::kRigidCount + k).head(n) = ax * (c * phi_x - s * phi_y);
    jac.col(ParamVector::kRigidCount + k).tail(n) = ay * (s * phi_x + c * phi_y);
  }
  return jac;
}

// ---------------------------------------------------------------- Gauss-Newton

FitResult fit_parameters(const Shape& target, const Pdm& pdm, int iterations,
                         const ParamVector* initial) {
  if (target.size() != pdm.points()) {
    throw std::invalid_argument("fit_parameters: target has " + std::to_string(target.size()) +
                                " landmarks, PDM has " + std::to_string(pdm.points()));
  }
  if (iterations < 1) throw std::invalid_argument("fit_parameters: iterations must be >= 1");

  ParamVector p;
  if (initial != nullptr) {
    check_params(*initial, pdm);
    p = *initial;
  } else {
    // pose of the mean shape that best explains the target
    const RigidTransform pose = procrustes_align(pdm.mean_shape(), target).rigid.inverse();
    p = ParamVector::identity(pdm.modes());
    p[ParamVector::kAlphaX] = pose.scale;
    p[ParamVector::kAlphaY] = pose.scale;
    p[ParamVector::kGamma] = pose.angle;
    p[ParamVector::kTx] = pose.tx;
    p[ParamVector::kTy] = pose.ty;
  }

  const Eigen::VectorXd& goal = target.stacked();
  Eigen::VectorXd residual = goal - synthesize(p, pdm).stacked();
  double objective = residual.squaredNorm();

  FitResult result;
  result.history.push_back(objective);
  const int dim = p.dim();

  for (int it = 0; it < iterations; ++it) {
    const Eigen::MatrixXd jac = shape_jacobian(p, pdm);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * residual;
    double lambda = 1e-8 * jtj.trace() / dim;
    if (!(lambda > 0.0)) lambda = 1e-12;

    bool accepted = false;
    Eigen::VectorXd step;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal().array() += lambda;
      step = damped.ldlt().solve(jtr);
      if (step.allFinite()) {
        ParamVector candidate(p.values() + step);
        Eigen::VectorXd cand_residual = goal - synthesize(candidate, pdm).stacked();
        const double cand_objective = cand_residual.squaredNorm();
        if (std::isfinite(cand_objective) && cand_objective <= objective) {
          p = std::move(candidate);
          residual = std::move(cand_residual);
          objective = cand_objective;
          accepted = true;
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!accepted) break;
    result.history.push_back(objective);
    if (step.norm() <= 1e-14 * (1.0 + p.values().norm())) break;
  }

  result.params = std::move(p);
  result.objective = objective;
  return result;
}

}  // namespace gnf
