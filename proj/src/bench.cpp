#include "gnf/bench.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace gnf {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace

BenchReport bench(const CascadeModel& model, const std::vector<TrainingSample>& samples, int repetitions) {
  if (samples.empty()) throw std::invalid_argument("bench: no images");
  if (repetitions < 1) throw std::invalid_argument("bench: repetitions must be positive");
  if (model.stages().empty()) throw std::invalid_argument("bench: model has no stages");

  BenchReport report;
  report.images = static_cast<int>(samples.size());
  report.repetitions = repetitions;

  std::vector<double> crop_t, feat_t, dense_t, sparse_t, soft_t, greedy_t, total_t;
  std::uint64_t soft_splits = 0, greedy_splits = 0, trees_visited = 0;
  double sparsity_sum = 0.0;

  for (int rep = 0; rep < repetitions; ++rep) {
    for (const auto& sample : samples) {
      auto t0 = Clock::now();
      const GrayImage crop = crop_image(sample.image, sample.bbox, model.crop_size());
      crop_t.push_back(ms_since(t0));

      // Deployed path, timed end to end.
      t0 = Clock::now();
      const AlignResult deployed = align(model, sample.image, sample.bbox);
      total_t.push_back(ms_since(t0));

      // Per-step timings replay the same trajectory.
      double feat = 0, dense = 0, sparse = 0, soft = 0, greedy = 0;
      t0 = Clock::now();
      const IntegralChannels channels = compute_channels(crop);
      feat += ms_since(t0);
      for (std::size_t s = 0; s < model.stages().size(); ++s) {
        const CascadeStage& stage = model.stages()[s];
        t0 = Clock::now();
        const Eigen::VectorXd x = shape_descriptor(channels, deployed.crop_trace[s], model.descriptor());
        feat += ms_since(t0);

        t0 = Clock::now();
        const Eigen::VectorXd z = project_dense(stage.projection, x);
        dense += ms_since(t0);
        if (stage.projection.compressed()) {
          t0 = Clock::now();
          const Eigen::VectorXd zs = project_sparse(*stage.projection.compressed(), x);
          sparse += ms_since(t0);
        }

        SplitCounter soft_count, greedy_count;
        t0 = Clock::now();
        const Eigen::VectorXd a = nf_predict(stage.forest, z, &soft_count);
        soft += ms_since(t0);
        t0 = Clock::now();
        const Eigen::VectorXd b = gnf_predict(stage.forest, z, &greedy_count);
        greedy += ms_since(t0);
        if (rep == 0) {
          soft_splits += soft_count.evaluations;
          greedy_splits += greedy_count.evaluations;
          trees_visited += stage.forest.tree_count();
          sparsity_sum += sparsity(stage.projection);
        }
      }
      feat_t.push_back(feat);
      dense_t.push_back(dense);
      sparse_t.push_back(sparse);
      soft_t.push_back(soft);
      greedy_t.push_back(greedy);
    }
  }

  report.crop_ms = median(crop_t);
  report.features_ms = median(feat_t);
  report.projection_dense_ms = median(dense_t);
  report.projection_sparse_ms = median(sparse_t);
  report.forest_soft_ms = median(soft_t);
  report.forest_greedy_ms = median(greedy_t);
  report.total_ms = median(total_t);
  report.projection_sparsity = sparsity_sum / static_cast<double>(samples.size() * model.stages().size());
  report.soft_splits_per_tree = static_cast<double>(soft_splits) / static_cast<double>(trees_visited);
  report.greedy_splits_per_tree = static_cast<double>(greedy_splits) / static_cast<double>(trees_visited);
  return report;
}

std::string bench_csv(const BenchReport& r) {
  std::ostringstream out;
  out << "step,value\n" << std::setprecision(6);
  out << "images," << r.images << '\n';
  out << "repetitions," << r.repetitions << '\n';
  out << "crop_ms," << r.crop_ms << '\n';
  out << "features_ms," << r.features_ms << '\n';
  out << "projection_dense_ms," << r.projection_dense_ms << '\n';
  out << "projection_sparse_ms," << r.projection_sparse_ms << '\n';
  out << "forest_soft_ms," << r.forest_soft_ms << '\n';
  out << "forest_greedy_ms," << r.forest_greedy_ms << '\n';
  out << "total_ms," << r.total_ms << '\n';
  out << "projection_sparsity," << r.projection_sparsity << '\n';
  out << "soft_splits_per_tree," << r.soft_splits_per_tree << '\n';
  out << "greedy_splits_per_tree," << r.greedy_splits_per_tree << '\n';
  return out.str();
}

}  // namespace gnf
