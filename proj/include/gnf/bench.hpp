#pragma once

#include "gnf/cascade.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gnf {

/// Median wall times in milliseconds per aligned image, summed over stages.
struct BenchReport {
  int images = 0;
  int repetitions = 0;
  double crop_ms = 0.0;
  double features_ms = 0.0;
  double projection_dense_ms = 0.0;
  double projection_sparse_ms = 0.0;
  double forest_soft_ms = 0.0;
  double forest_greedy_ms = 0.0;
  double total_ms = 0.0;
  double projection_sparsity = 0.0;
  /// Split evaluations per tree for one image through one stage.
  double soft_splits_per_tree = 0.0;
  double greedy_splits_per_tree = 0.0;
};

/// Times every pipeline step on each sample `repetitions` times. The total is
/// the deployed path: crop, features, project (sparse when available) and
/// greedy forests.
BenchReport bench(const CascadeModel& model, const std::vector<TrainingSample>& samples, int repetitions);

/// "step,value" rows.
std::string bench_csv(const BenchReport& report);

}  // namespace gnf
