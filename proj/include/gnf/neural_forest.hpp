#pragma once

// Neural forests with oblique sigmoid splits and constant leaf predictions.
//
// Trees are complete binary trees stored in heap order: split n has children
// 2n+1 (left) and 2n+2 (right); leaf l sits at heap index 2^D - 1 + l.
// A split sends its input to the right child with probability
// d = sigmoid(beta . z - theta). Soft (NF) evaluation visits every split,
// greedy (GNF) evaluation follows the more likely child only.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace gnf {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Counts split-node evaluations (one dot product each).
struct SplitCounter {
  std::uint64_t evaluations = 0;
};

/// Per-dimension residual statistics used to initialize leaves and scale
/// the learning rate.
struct LeafStats {
  static constexpr double kSigmaFloor = 1e-6;

  std::vector<double> mean;
  std::vector<double> stddev;

  LeafStats() = default;
  /// Applies the sigma floor.
  LeafStats(std::vector<double> mean, std::vector<double> stddev);
  static LeafStats from_samples(const std::vector<Eigen::VectorXd>& samples);

  int dim() const { return static_cast<int>(mean.size()); }
};

class Tree {
 public:
  Tree() = default;
  /// Split parameters start at zero; leaves are fixed for the tree's lifetime.
  Tree(int depth, int input_dim, Eigen::VectorXd leaves);

  int depth() const { return depth_; }
  int input_dim() const { return static_cast<int>(weights_.cols()); }
  int split_count() const { return static_cast<int>(weights_.rows()); }
  int leaf_count() const { return static_cast<int>(leaves_.size()); }

  /// Row n holds beta^n.
  const RowMatrix& weights() const { return weights_; }
  RowMatrix& weights() { return weights_; }
  const Eigen::VectorXd& thresholds() const { return thresholds_; }
  Eigen::VectorXd& thresholds() { return thresholds_; }
  const Eigen::VectorXd& leaves() const { return leaves_; }

 private:
  int depth_ = 0;
  RowMatrix weights_;
  Eigen::VectorXd thresholds_;
  Eigen::VectorXd leaves_;
};

struct Routing {
  /// Leaf reach probabilities mu^l, size 2^D.
  Eigen::VectorXd leaf_mu;
  /// Split activations d^n, size 2^D - 1.
  Eigen::VectorXd activation;
  /// Probability of reaching each split, size 2^D - 1.
  Eigen::VectorXd split_mu;
};

/// Clamped logistic: logits limited to +-35, output to [1e-12, 1 - 1e-12].
double split_activation(double logit);

/// Soft routing through every split of the tree.
Routing soft_route(const Tree& tree, const Eigen::VectorXd& z, SplitCounter* counter = nullptr);

/// Index of the leaf reached by hard routing (right iff logit > 0).
int greedy_leaf(const Tree& tree, const Eigen::VectorXd& z, SplitCounter* counter = nullptr);

struct TreeGradient {
  /// d eps_t / d beta^n, one row per split.
  RowMatrix weights;
  /// d eps_t / d theta^n.
  Eigen::VectorXd thresholds;
  /// d eps_t / d z.
  Eigen::VectorXd input;
  /// eps_t = sum_l mu^l eps^l, read off the root after the recursive pass.
  double error = 0.0;
};

/// Analytic gradient of the expected tree error for the given per-leaf errors.
TreeGradient tree_gradient(const Tree& tree, const Eigen::VectorXd& z,
                           const Eigen::VectorXd& leaf_error);

/// One recursive bottom-up pass: updates every split by plain gradient
/// descent with rate `lr` and returns this tree's d eps_t / d z, computed
/// from the pre-update parameters. Leaves are untouched.
Eigen::VectorXd backward(Tree& tree, const Eigen::VectorXd& z, const Eigen::VectorXd& leaf_error,
                         double lr, double* error = nullptr);

enum class ForestMode : std::uint8_t { kSoft = 0, kGreedy = 1 };

class Forest {
 public:
  Forest() = default;
  Forest(std::vector<std::vector<Tree>> groups, LeafStats stats, ForestMode mode = ForestMode::kSoft);

  int output_dim() const { return static_cast<int>(groups_.size()); }
  int trees_per_group() const { return groups_.empty() ? 0 : static_cast<int>(groups_.front().size()); }
  int depth() const;
  int input_dim() const;
  std::size_t tree_count() const;
  /// Total number of oblique split weights (T * dim * (2^D - 1) * k).
  std::size_t split_weight_count() const;

  ForestMode mode() const { return mode_; }
  const LeafStats& stats() const { return stats_; }
  const std::vector<std::vector<Tree>>& groups() const { return groups_; }
  std::vector<std::vector<Tree>>& groups() { return groups_; }

  /// Mode-dependent prediction (soft before freeze, greedy after).
  Eigen::VectorXd predict(const Eigen::VectorXd& z, SplitCounter* counter = nullptr) const;

  /// Switches to greedy evaluation. Idempotent.
  void freeze() { mode_ = ForestMode::kGreedy; }

 private:
  std::vector<std::vector<Tree>> groups_;
  LeafStats stats_;
  ForestMode mode_ = ForestMode::kSoft;
};

/// Returns a greedy copy of the forest. Parameters are untouched.
Forest freeze(Forest forest);

/// Real-valued depth lower bound D0 for Gaussian-initialized constant leaves
/// to cover [mean - sigma, mean + sigma] at resolution epsilon with
/// probability above 1 - epsilon_prime. Throws std::domain_error on invalid
/// arguments.
double depth_lower_bound(double sigma, double epsilon, double epsilon_prime);

/// Smallest integer depth satisfying the bound for every dimension of stats
/// with epsilon = sigma/10 and epsilon_prime = 0.01.
int required_depth(const LeafStats& stats);

struct ForestInit {
  int trees_per_dim = 25;
  int depth = 8;
  int input_dim = 500;
  /// Split weights and thresholds drawn from U[-range, range].
  double weight_range = 0.01;
  std::uint64_t seed = 0;
};

/// Builds T trees per output dimension with leaves drawn from
/// N(mean_k, stddev_k). Logs a warning when the depth is below required_depth().
Forest init_forest(const LeafStats& stats, const ForestInit& init);

/// Expected (soft) prediction: per dimension, mean over trees of sum_l mu^l y_l.
Eigen::VectorXd nf_predict(const Forest& forest, const Eigen::VectorXd& z,
                           SplitCounter* counter = nullptr);

/// Greedy prediction: per dimension, mean over trees of the reached leaf.
Eigen::VectorXd gnf_predict(const Forest& forest, const Eigen::VectorXd& z,
                            SplitCounter* counter = nullptr);

struct SgdStep {
  /// Mean over all T * output_dim trees of d eps_t / d z.
  Eigen::VectorXd input_grad;
  /// Mean over all trees of the expected squared error eps_t.
  double loss = 0.0;
};

/// One online update of every tree with rate lr_base / sigma_k for group k.
/// Throws std::logic_error on a frozen forest.
SgdStep forest_sgd_step(Forest& forest, const Eigen::VectorXd& z, const Eigen::VectorXd& target,
                        double lr_base);

/// Mean over trees of the expected squared error, the quantity whose
/// gradient forest_sgd_step returns.
double forest_loss(const Forest& forest, const Eigen::VectorXd& z, const Eigen::VectorXd& target);

}  // namespace gnf
