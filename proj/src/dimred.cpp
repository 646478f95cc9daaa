#include "gnf/dimred.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace gnf {

ProjectionLayer::ProjectionLayer(RowMatrix weights, SparsityConfig sparsity)
    : weights_(std::move(weights)), sparsity_(sparsity) {
  if (weights_.rows() < 1 || weights_.cols() < 1) throw std::invalid_argument("ProjectionLayer: empty weights");
  if (!weights_.allFinite()) throw std::invalid_argument("ProjectionLayer: non-finite weights");
  if (sparsity_.eta < 0.0 || sparsity_.theta < 0.0) {
    throw std::invalid_argument("ProjectionLayer: eta and theta must be non-negative");
  }
}

ProjectionLayer ProjectionLayer::random(int output_dim, int input_dim, double range, SparsityConfig sparsity,
                                        std::uint64_t seed) {
  if (output_dim < 1 || input_dim < 1) throw std::invalid_argument("ProjectionLayer: dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-range, range);
  RowMatrix w(output_dim, input_dim);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng);
  return ProjectionLayer(std::move(w), sparsity);
}

void ProjectionLayer::finalize() {
  if (sparsity(*this) <= 0.5) {
    compressed_.reset();
    return;
  }
  SparseRows rows(weights_.rows(), weights_.cols());
  std::vector<Eigen::Triplet<double, int>> entries;
  for (Eigen::Index r = 0; r < weights_.rows(); ++r) {
    for (Eigen::Index c = 0; c < weights_.cols(); ++c) {
      const double w = weights_(r, c);
      if (w != 0.0) entries.emplace_back(static_cast<int>(r), static_cast<int>(c), w);
    }
  }
  rows.setFromTriplets(entries.begin(), entries.end());
  rows.makeCompressed();
  compressed_ = std::move(rows);
}

Eigen::VectorXd project_dense(const ProjectionLayer& layer, const Eigen::VectorXd& x) {
  if (x.size() != layer.input_dim()) throw std::invalid_argument("project: descriptor length mismatch");
  Eigen::VectorXd z;
  z.noalias() = layer.weights() * x;
  return z.array().tanh().matrix();
}

Eigen::VectorXd project_sparse(const SparseRows& rows, const Eigen::VectorXd& x) {
  if (x.size() != rows.cols()) throw std::invalid_argument("project: descriptor length mismatch");
  Eigen::VectorXd z(rows.rows());
  const double* values = rows.valuePtr();
  const int* index = rows.innerIndexPtr();
  const int* outer = rows.outerIndexPtr();
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    double acc = 0.0;
    for (int i = outer[r]; i < outer[r + 1]; ++i) acc += values[i] * x[index[i]];
    z[r] = std::tanh(acc);
  }
  return z;
}

Eigen::VectorXd project(const ProjectionLayer& layer, const Eigen::VectorXd& x) {
  if (layer.compressed()) return project_sparse(*layer.compressed(), x);
  return project_dense(layer, x);
}

void update_truncated(ProjectionLayer& layer, const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                      const Eigen::VectorXd& grad_z, double lr) {
  if (x.size() != layer.input_dim() || z.size() != layer.output_dim() || grad_z.size() != layer.output_dim()) {
    throw std::invalid_argument("update_truncated: shape mismatch");
  }
  const double shrink = lr * layer.sparsity_config().eta;
  const double theta = layer.sparsity_config().theta;
  RowMatrix& w = layer.mutable_weights();
  const Eigen::ArrayXd row_scale = lr * grad_z.array() * (1.0 - z.array().square());

  const bool plain = shrink == 0.0 && theta == 0.0;
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    auto row = w.row(r);
    if (plain) {
      if (row_scale[r] != 0.0) row.noalias() -= row_scale[r] * x.transpose();
      continue;
    }
    // sign taken from the weight before the step
    const double g = row_scale[r];
    double* wr = row.data();
    const double* xs = x.data();
    for (Eigen::Index c = 0; c < row.size(); ++c) {
      const double old = wr[c];
      const double sign = static_cast<double>((old > 0.0) - (old < 0.0));
      const double v = old - g * xs[c] - shrink * sign;
      wr[c] = std::abs(v) < theta ? 0.0 : v;
    }
  }
}

void update_truncated(ProjectionLayer& layer, const Eigen::VectorXd& x, const Eigen::VectorXd& grad_z, double lr) {
  const Eigen::VectorXd z = project_dense(layer, x);
  update_truncated(layer, x, z, grad_z, lr);
}

double sparsity(const ProjectionLayer& layer) {
  const auto& w = layer.weights();
  if (w.size() == 0) return 0.0;
  const auto zeros = (w.array() == 0.0).count();
  return static_cast<double>(zeros) / static_cast<double>(w.size());
}

}  // namespace gnf
