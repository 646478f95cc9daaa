#pragma once

// Semi-parametric cascade: parametric stages regress shape-parameter updates,
// explicit stages regress per-landmark displacements. Every stage is a
// projection layer followed by a neural forest, frozen to greedy evaluation
// once trained.

#include "gnf/dimred.hpp"
#include "gnf/features.hpp"
#include "gnf/image.hpp"
#include "gnf/neural_forest.hpp"
#include "gnf/shape_model.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace gnf {

enum class StageKind : std::uint8_t { kParametric = 0, kExplicit = 1 };

const char* to_string(StageKind kind);

struct CascadeStage {
  StageKind kind = StageKind::kParametric;
  ProjectionLayer projection;
  Forest forest;

  /// Residual statistics the forest leaves were drawn from.
  const LeafStats& stats() const { return forest.stats(); }
};

class CascadeModel {
 public:
  CascadeModel() = default;
  /// Throws std::invalid_argument if an explicit stage precedes a parametric
  /// one or stage dimensions disagree with the PDM / descriptor.
  CascadeModel(Pdm pdm, ParamVector p0, int crop_size, DescriptorConfig descriptor,
               std::vector<CascadeStage> stages = {});

  const Pdm& pdm() const { return pdm_; }
  const ParamVector& p0() const { return p0_; }
  int crop_size() const { return crop_size_; }
  const DescriptorConfig& descriptor() const { return descriptor_; }
  const std::vector<CascadeStage>& stages() const { return stages_; }

  void add_stage(CascadeStage stage);
  bool frozen() const;
  int descriptor_length() const;

 private:
  void check_stage(const CascadeStage& stage, const CascadeStage* previous) const;

  Pdm pdm_;
  ParamVector p0_;
  int crop_size_ = 200;
  DescriptorConfig descriptor_;
  std::vector<CascadeStage> stages_;
};

struct AlignResult {
  /// Final landmarks in original image coordinates.
  Shape shape;
  /// Parameter estimate after the last parametric stage.
  ParamVector params;
  /// Crop-frame shape at initialization and after every stage.
  std::vector<Shape> crop_trace;
  CropTransform transform;
};

/// Runs the cascade inside an already computed crop.
AlignResult align_crop(const CascadeModel& model, const IntegralChannels& crop_channels);

/// Crops the bounding box, runs every stage and maps the result back.
AlignResult align(const CascadeModel& model, const GrayImage& image, const BBox& bbox);

// ------------------------------------------------------------------ training

/// Annotated face in its original image.
struct TrainingSample {
  GrayImage image;
  Shape shape;
  BBox bbox;
};

/// A sample moved into the crop frame, with its fitted parameter vector.
struct TrainingExample {
  GrayImage crop;
  Shape truth;
  ParamVector fitted;
};

/// Current per-example estimates while the cascade is being built.
struct CascadeState {
  std::vector<ParamVector> params;
  std::vector<Shape> shapes;
};

struct StageTargets {
  std::vector<Eigen::VectorXd> targets;
  LeafStats stats;
};

/// Parametric: fitted p* minus the current estimate. Explicit: ground truth
/// minus the current shape, laid out (dx_1..dx_N, dy_1..dy_N).
StageTargets compute_stage_targets(StageKind kind, const std::vector<TrainingExample>& examples,
                                   const CascadeState& state);

struct StageArchitecture {
  int trees_per_dim = 25;
  int depth = 8;
  int projection_dim = 500;
  /// Split weights and thresholds start in U[-init_range, init_range].
  double init_range = 0.01;
  /// Projection weights start in U[-r, r]. Descriptor blocks are unit-norm,
  /// so r = 0.01 would leave z near 0 and the splits untrainable.
  double projection_init_range = 1.0;
  SparsityConfig sparsity;
};

/// Fresh, untrained stage for the given residual statistics.
CascadeStage make_stage(StageKind kind, const LeafStats& stats, int descriptor_length,
                        const StageArchitecture& arch, std::uint64_t seed);

struct PerturbConfig {
  /// Perturbations are drawn uniformly from +-fraction * half the observed
  /// residual range of scale and translation; 0 disables them.
  double fraction = 0.5;
};

struct StageTrainConfig {
  int updates = 200000;
  double learning_rate = 0.005;
  double projection_learning_rate = 0.005;
  PerturbConfig perturb;
  std::uint64_t seed = 0;
};

struct StageTrainReport {
  StageKind kind = StageKind::kParametric;
  /// In-sample target MSE (per output dimension) before and after training.
  double mse_before = 0.0;
  double mse_after = 0.0;
  double sparsity = 0.0;
  std::vector<double> loss_trace;
};

/// Online SGD on randomly drawn examples and perturbations, then freeze.
/// Throws std::logic_error if the stage is already frozen.
CascadeStage train_stage(CascadeStage stage, const Pdm& pdm, const DescriptorConfig& descriptor,
                         const std::vector<TrainingExample>& examples, const CascadeState& state,
                         const StageTrainConfig& config, StageTrainReport* report = nullptr);

/// Mean squared error, per output dimension, of a stage's predictions against
/// its unperturbed targets.
double stage_target_mse(const CascadeStage& stage, const Pdm& pdm, const DescriptorConfig& descriptor,
                        const std::vector<TrainingExample>& examples, const CascadeState& state,
                        const std::vector<Eigen::VectorXd>& targets);

/// Advances every example's estimate by one stage.
void apply_stage(const CascadeStage& stage, const Pdm& pdm, const DescriptorConfig& descriptor,
                 const std::vector<TrainingExample>& examples, CascadeState& state);

struct CascadeConfig {
  /// One letter per stage: P (parametric) or E (explicit).
  std::string stages = "PPPE";
  int depth = 8;
  int trees_parametric = 25;
  int trees_explicit = 5;
  int projection_dim = 500;
  double learning_rate = 0.005;
  double projection_learning_rate = 0.005;
  int updates = 200000;
  double eta = 0.01;
  double theta = 0.05;
  double init_range = 0.01;
  double projection_init_range = 1.0;
  int pdm_modes = 15;
  int gauss_newton_iterations = 100;
  int crop_size = 200;
  int window = 40;
  int cells = 4;
  double perturb_fraction = 0.5;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument on unknown stage letters or an explicit
  /// stage placed before a parametric one.
  std::vector<StageKind> stage_kinds() const;
};

struct CascadeTrainReport {
  std::vector<StageTrainReport> stages;
};

/// Crops every sample, fits the PDM and parameters, builds p0.
struct PreparedData {
  Pdm pdm;
  ParamVector p0;
  std::vector<TrainingExample> examples;
};
PreparedData prepare_training_data(const CascadeConfig& config, const std::vector<TrainingSample>& samples);

CascadeModel train_cascade(const CascadeConfig& config, const std::vector<TrainingSample>& samples,
                           CascadeTrainReport* report = nullptr,
                           const std::function<void(const std::string&)>& progress = {});

// ------------------------------------------------------------------ model file

/// Binary container: "GNFMODEL" magic, u32 version, then PDM, crop and
/// descriptor settings, p0 and every stage. Little-endian, 64-bit floats.
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize_model(const CascadeModel& model);
CascadeModel deserialize_model(const std::vector<std::uint8_t>& bytes);
void save_model(const CascadeModel& model, const std::string& path);
CascadeModel load_model(const std::string& path);

}  // namespace gnf
