#pragma once

// Learned projection z = tanh(W x) between the shape descriptor and the
// forest, with optional truncated-gradient L1 sparsification.

#include "gnf/neural_forest.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <optional>

namespace gnf {

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;

struct SparsityConfig {
  /// L1 strength eta.
  double eta = 0.01;
  /// Truncation threshold Theta: weights with |w| < Theta become exactly 0.
  double theta = 0.05;
};

class ProjectionLayer {
 public:
  ProjectionLayer() = default;
  ProjectionLayer(RowMatrix weights, SparsityConfig sparsity);
  /// Weights drawn from U[-range, range].
  static ProjectionLayer random(int output_dim, int input_dim, double range, SparsityConfig sparsity,
                                std::uint64_t seed);

  int output_dim() const { return static_cast<int>(weights_.rows()); }
  int input_dim() const { return static_cast<int>(weights_.cols()); }
  const RowMatrix& weights() const { return weights_; }
  const SparsityConfig& sparsity_config() const { return sparsity_; }

  /// Mutable access drops the compressed copy.
  RowMatrix& mutable_weights() {
    compressed_.reset();
    return weights_;
  }

  /// Builds the compressed row form when more than half the weights are zero.
  void finalize();
  bool uses_sparse_path() const { return compressed_.has_value(); }
  const std::optional<SparseRows>& compressed() const { return compressed_; }

 private:
  RowMatrix weights_;
  SparsityConfig sparsity_;
  std::optional<SparseRows> compressed_;
};

/// z = tanh(W x); uses the compressed rows after finalize() on a sparse layer.
Eigen::VectorXd project(const ProjectionLayer& layer, const Eigen::VectorXd& x);
Eigen::VectorXd project_dense(const ProjectionLayer& layer, const Eigen::VectorXd& x);
Eigen::VectorXd project_sparse(const SparseRows& rows, const Eigen::VectorXd& x);

/// w <- T(w - lr dE/dz_j (1 - z_j^2) x_j' - lr eta sgn(w), Theta), where z is the
/// forward output for x.
void update_truncated(ProjectionLayer& layer, const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                      const Eigen::VectorXd& grad_z, double lr);
/// Same, recomputing z from x.
void update_truncated(ProjectionLayer& layer, const Eigen::VectorXd& x, const Eigen::VectorXd& grad_z,
                      double lr);

/// Fraction of weights that are exactly zero.
double sparsity(const ProjectionLayer& layer);

}  // namespace gnf
