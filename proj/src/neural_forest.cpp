#include "gnf/neural_forest.hpp"

#include "gnf/log.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace gnf {

// ---------------------------------------------------------------- LeafStats

LeafStats::LeafStats(std::vector<double> m, std::vector<double> s)
    : mean(std::move(m)), stddev(std::move(s)) {
  if (mean.size() != stddev.size()) throw std::invalid_argument("LeafStats: size mismatch");
  for (double& v : stddev) {
    if (!(v >= kSigmaFloor)) v = kSigmaFloor;
  }
}

LeafStats LeafStats::from_samples(const std::vector<Eigen::VectorXd>& samples) {
  if (samples.empty()) throw std::invalid_argument("LeafStats: no samples");
  const auto dim = samples.front().size();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  for (const auto& s : samples) {
    if (s.size() != dim) throw std::invalid_argument("LeafStats: inconsistent sample sizes");
    sum += s;
  }
  const double n = static_cast<double>(samples.size());
  const Eigen::VectorXd mean = sum / n;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
  for (const auto& s : samples) var += (s - mean).cwiseAbs2();
  const Eigen::VectorXd sd = (var / n).cwiseSqrt();
  return LeafStats(std::vector<double>(mean.data(), mean.data() + dim),
                   std::vector<double>(sd.data(), sd.data() + dim));
}

// ---------------------------------------------------------------- Tree

Tree::Tree(int depth, int input_dim, Eigen::VectorXd leaves) : depth_(depth) {
  if (depth < 1 || depth > 24) throw std::invalid_argument("Tree: depth out of range");
  if (input_dim < 1) throw std::invalid_argument("Tree: input dimension must be positive");
  const Eigen::Index leaf_count = Eigen::Index{1} << depth;
  if (leaves.size() != leaf_count) throw std::invalid_argument("Tree: leaf count must be 2^depth");
  weights_ = RowMatrix::Zero(leaf_count - 1, input_dim);
  thresholds_ = Eigen::VectorXd::Zero(leaf_count - 1);
  leaves_ = std::move(leaves);
}

double split_activation(double logit) {
  constexpr double kLogitClamp = 35.0;
  constexpr double kEdge = 1e-12;
  const double clamped = std::clamp(logit, -kLogitClamp, kLogitClamp);
  const double d = 1.0 / (1.0 + std::exp(-clamped));
  return std::clamp(d, kEdge, 1.0 - kEdge);
}

Routing soft_route(const Tree& tree, const Eigen::VectorXd& z, SplitCounter* counter) {
  if (z.size() != tree.input_dim()) throw std::invalid_argument("soft_route: input length mismatch");
  const int splits = tree.split_count();
  Routing r;
  r.activation.noalias() = tree.weights() * z;
  r.activation -= tree.thresholds();
  for (int n = 0; n < splits; ++n) r.activation[n] = split_activation(r.activation[n]);
  if (counter != nullptr) counter->evaluations += static_cast<std::uint64_t>(splits);

  r.split_mu.resize(splits);
  r.leaf_mu.resize(tree.leaf_count());
  r.split_mu[0] = 1.0;
  for (int n = 0; n < splits; ++n) {
    const double d = r.activation[n];
    const double reach = r.split_mu[n];
    const int left = 2 * n + 1;
    if (left < splits) {
      r.split_mu[left] = reach * (1.0 - d);
      r.split_mu[left + 1] = reach * d;
    } else {
      r.leaf_mu[left - splits] = reach * (1.0 - d);
      r.leaf_mu[left - splits + 1] = reach * d;
    }
  }
  return r;
}

int greedy_leaf(const Tree& tree, const Eigen::VectorXd& z, SplitCounter* counter) {
  if (z.size() != tree.input_dim()) throw std::invalid_argument("greedy_leaf: input length mismatch");
  const int splits = tree.split_count();
  int node = 0;
  for (int level = 0; level < tree.depth(); ++level) {
    const double logit = tree.weights().row(node).dot(z) - tree.thresholds()[node];
    node = logit > 0.0 ? 2 * node + 2 : 2 * node + 1;
  }
  if (counter != nullptr) counter->evaluations += static_cast<std::uint64_t>(tree.depth());
  return node - splits;
}

// ---------------------------------------------------------------- backprop

namespace {

struct SplitSignal {
  /// c_n = mu^n d^n (1 - d^n) (eps_+ - eps_-): the common factor of every
  /// split-parameter and input derivative.
  Eigen::VectorXd coefficient;
  double root_error = 0.0;
};

SplitSignal split_signal(const Tree& tree, const Routing& r, const Eigen::VectorXd& leaf_error) {
  const int splits = tree.split_count();
  if (leaf_error.size() != tree.leaf_count()) {
    throw std::invalid_argument("per-leaf error must have 2^D entries");
  }
  SplitSignal out;
  out.coefficient.resize(splits);
  Eigen::VectorXd node_error(splits);
  for (int n = splits - 1; n >= 0; --n) {
    const int left = 2 * n + 1;
    const double e_left = left < splits ? node_error[left] : leaf_error[left - splits];
    const double e_right = left < splits ? node_error[left + 1] : leaf_error[left - splits + 1];
    const double d = r.activation[n];
    node_error[n] = d * e_right + (1.0 - d) * e_left;
    out.coefficient[n] = r.split_mu[n] * d * (1.0 - d) * (e_right - e_left);
  }
  out.root_error = node_error[0];
  return out;
}

}  // namespace

TreeGradient tree_gradient(const Tree& tree, const Eigen::VectorXd& z, const Eigen::VectorXd& leaf_error) {
  const Routing r = soft_route(tree, z);
  const SplitSignal sig = split_signal(tree, r, leaf_error);
  TreeGradient g;
  g.weights.noalias() = sig.coefficient * z.transpose();
  g.thresholds = -sig.coefficient;
  g.input.noalias() = tree.weights().transpose() * sig.coefficient;
  g.error = sig.root_error;
  return g;
}

Eigen::VectorXd backward(Tree& tree, const Eigen::VectorXd& z, const Eigen::VectorXd& leaf_error,
                         double lr, double* error) {
  const Routing r = soft_route(tree, z);
  const SplitSignal sig = split_signal(tree, r, leaf_error);
  Eigen::VectorXd input_grad = tree.weights().transpose() * sig.coefficient;
  tree.weights().noalias() -= (lr * sig.coefficient) * z.transpose();
  tree.thresholds() += lr * sig.coefficient;
  if (error != nullptr) *error = sig.root_error;
  return input_grad;
}

// ---------------------------------------------------------------- Forest

Forest::Forest(std::vector<std::vector<Tree>> groups, LeafStats stats, ForestMode mode)
    : groups_(std::move(groups)), stats_(std::move(stats)), mode_(mode) {
  if (groups_.empty()) throw std::invalid_argument("Forest: no output dimensions");
  if (stats_.dim() != output_dim()) throw std::invalid_argument("Forest: stats dimension mismatch");
  const std::size_t per_group = groups_.front().size();
  if (per_group == 0) throw std::invalid_argument("Forest: groups must hold at least one tree");
  const int depth = groups_.front().front().depth();
  const int input = groups_.front().front().input_dim();
  for (const auto& group : groups_) {
    if (group.size() != per_group) throw std::invalid_argument("Forest: uneven tree groups");
    for (const auto& tree : group) {
      if (tree.depth() != depth || tree.input_dim() != input) {
        throw std::invalid_argument("Forest: trees disagree in depth or input dimension");
      }
    }
  }
}

int Forest::depth() const { return groups_.empty() ? 0 : groups_.front().front().depth(); }

int Forest::input_dim() const { return groups_.empty() ? 0 : groups_.front().front().input_dim(); }

std::size_t Forest::tree_count() const {
  return groups_.size() * static_cast<std::size_t>(trees_per_group());
}

std::size_t Forest::split_weight_count() const {
  if (groups_.empty()) return 0;
  const auto& t = groups_.front().front();
  return tree_count() * static_cast<std::size_t>(t.split_count()) * static_cast<std::size_t>(t.input_dim());
}

Eigen::VectorXd Forest::predict(const Eigen::VectorXd& z, SplitCounter* counter) const {
  return mode_ == ForestMode::kGreedy ? gnf_predict(*this, z, counter) : nf_predict(*this, z, counter);
}

Forest freeze(Forest forest) {
  forest.freeze();
  return forest;
}

// ---------------------------------------------------------------- depth bound

double depth_lower_bound(double sigma, double epsilon, double epsilon_prime) {
  std::ostringstream why;
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    why << "sigma must be positive and finite (got " << sigma << ")";
  } else if (!(epsilon > 0.0) || !(epsilon < sigma)) {
    why << "epsilon must lie in (0, sigma) (got " << epsilon << ", sigma " << sigma << ")";
  } else if (!(epsilon_prime > 0.0) || !(epsilon_prime < 1.0)) {
    why << "epsilon' must lie in (0, 1) (got " << epsilon_prime << ")";
  }
  if (!why.str().empty()) throw std::domain_error("depth_lower_bound: " + why.str());

  // 1 - (1 - eps')^(1 / (2 sigma))
  const double coverage_miss = -std::expm1(std::log1p(-epsilon_prime) / (2.0 * sigma));
  // probability mass lower bound of one leaf landing within epsilon of y
  const double hit = 2.0 * epsilon / (std::sqrt(2.0 * std::numbers::pi) * sigma) *
                     std::exp(-(sigma + epsilon) * (sigma + epsilon) / (2.0 * sigma * sigma));

  if (!(coverage_miss > 0.0 && coverage_miss < 1.0)) {
    why << "inner logarithm argument 1-(1-eps')^(1/(2 sigma)) = " << coverage_miss << " outside (0, 1)";
  } else if (!(hit > 0.0 && hit < 1.0)) {
    why << "inner logarithm argument 1 - hit with hit = " << hit << " outside (0, 1)";
  }
  if (!why.str().empty()) throw std::domain_error("depth_lower_bound: " + why.str());

  const double ratio = std::log(coverage_miss) / std::log1p(-hit);
  if (!(ratio > 0.0)) {
    why << "log ratio " << ratio << " is not positive";
    throw std::domain_error("depth_lower_bound: " + why.str());
  }
  return std::log(ratio) / std::numbers::ln2;
}

int required_depth(const LeafStats& stats) {
  int depth = 1;
  for (double sigma : stats.stddev) {
    double d0 = 0.0;
    try {
      d0 = depth_lower_bound(sigma, sigma / 10.0, 0.01);
    } catch (const std::domain_error&) {
      // (1 - eps')^(1/(2 sigma)) underflows for sigma near the floor; the
      // bound tends to -infinity there, so any depth qualifies
      continue;
    }
    depth = std::max(depth, static_cast<int>(std::ceil(d0)));
  }
  return depth;
}

// ---------------------------------------------------------------- init

Forest init_forest(const LeafStats& stats, const ForestInit& init) {
  if (stats.dim() < 1 || init.trees_per_dim < 1 || init.depth < 1 || init.input_dim < 1) {
    throw std::invalid_argument("init_forest: dimensions must be positive");
  }
  if (const int needed = required_depth(stats); init.depth < needed) {
    log_warning("forest depth " + std::to_string(init.depth) + " is below the leaf-coverage bound " +
                std::to_string(needed));
  }

  std::mt19937_64 rng(init.seed);
  std::uniform_real_distribution<double> uniform(-init.weight_range, init.weight_range);
  const int leaf_count = 1 << init.depth;

  std::vector<std::vector<Tree>> groups(static_cast<std::size_t>(stats.dim()));
  for (int k = 0; k < stats.dim(); ++k) {
    std::normal_distribution<double> leaf_dist(stats.mean[k], stats.stddev[k]);
    auto& group = groups[static_cast<std::size_t>(k)];
    group.reserve(static_cast<std::size_t>(init.trees_per_dim));
    for (int t = 0; t < init.trees_per_dim; ++t) {
      Eigen::VectorXd leaves(leaf_count);
      for (int l = 0; l < leaf_count; ++l) leaves[l] = leaf_dist(rng);
      Tree tree(init.depth, init.input_dim, std::move(leaves));
      for (Eigen::Index i = 0; i < tree.weights().size(); ++i) tree.weights().data()[i] = uniform(rng);
      for (Eigen::Index i = 0; i < tree.thresholds().size(); ++i) tree.thresholds()[i] = uniform(rng);
      group.push_back(std::move(tree));
    }
  }
  return Forest(std::move(groups), stats, ForestMode::kSoft);
}

// ---------------------------------------------------------------- prediction

Eigen::VectorXd nf_predict(const Forest& forest, const Eigen::VectorXd& z, SplitCounter* counter) {
  if (z.size() != forest.input_dim()) throw std::invalid_argument("nf_predict: input length mismatch");
  Eigen::VectorXd out(forest.output_dim());
  for (int k = 0; k < forest.output_dim(); ++k) {
    double sum = 0.0;
    for (const auto& tree : forest.groups()[static_cast<std::size_t>(k)]) {
      sum += soft_route(tree, z, counter).leaf_mu.dot(tree.leaves());
    }
    out[k] = sum / forest.trees_per_group();
  }
  return out;
}

Eigen::VectorXd gnf_predict(const Forest& forest, const Eigen::VectorXd& z, SplitCounter* counter) {
  if (z.size() != forest.input_dim()) throw std::invalid_argument("gnf_predict: input length mismatch");
  Eigen::VectorXd out(forest.output_dim());
  for (int k = 0; k < forest.output_dim(); ++k) {
    double sum = 0.0;
    for (const auto& tree : forest.groups()[static_cast<std::size_t>(k)]) {
      sum += tree.leaves()[greedy_leaf(tree, z, counter)];
    }
    out[k] = sum / forest.trees_per_group();
  }
  return out;
}

// ---------------------------------------------------------------- training

SgdStep forest_sgd_step(Forest& forest, const Eigen::VectorXd& z, const Eigen::VectorXd& target,
                        double lr_base) {
  if (forest.mode() != ForestMode::kSoft) {
    throw std::logic_error("forest_sgd_step: forest is frozen (greedy); training is no longer allowed");
  }
  if (target.size() != forest.output_dim()) throw std::invalid_argument("forest_sgd_step: target size mismatch");
  if (!target.allFinite()) throw std::invalid_argument("forest_sgd_step: non-finite target");
  if (z.size() != forest.input_dim()) throw std::invalid_argument("forest_sgd_step: input length mismatch");

  SgdStep step;
  step.input_grad = Eigen::VectorXd::Zero(z.size());
  double loss = 0.0;
  for (int k = 0; k < forest.output_dim(); ++k) {
    const double lr = lr_base / std::max(forest.stats().stddev[static_cast<std::size_t>(k)], LeafStats::kSigmaFloor);
    for (auto& tree : forest.groups()[static_cast<std::size_t>(k)]) {
      const Eigen::VectorXd leaf_error = (tree.leaves().array() - target[k]).square().matrix();
      double err = 0.0;
      step.input_grad += backward(tree, z, leaf_error, lr, &err);
      loss += err;
    }
  }
  const double trees = static_cast<double>(forest.tree_count());
  step.input_grad /= trees;
  step.loss = loss / trees;
  return step;
}

double forest_loss(const Forest& forest, const Eigen::VectorXd& z, const Eigen::VectorXd& target) {
  if (target.size() != forest.output_dim()) throw std::invalid_argument("forest_loss: target size mismatch");
  double loss = 0.0;
  for (int k = 0; k < forest.output_dim(); ++k) {
    for (const auto& tree : forest.groups()[static_cast<std::size_t>(k)]) {
      const Eigen::VectorXd leaf_error = (tree.leaves().array() - target[k]).square().matrix();
      loss += soft_route(tree, z).leaf_mu.dot(leaf_error);
    }
  }
  return loss / static_cast<double>(forest.tree_count());
}

}  // namespace gnf
