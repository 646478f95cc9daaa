#include "gnf/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace gnf {

const char* to_string(StageKind kind) {
  return kind == StageKind::kParametric ? "parametric" : "explicit";
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

int output_dim_for(StageKind kind, const Pdm& pdm) {
  return kind == StageKind::kParametric ? ParamVector::kRigidCount + pdm.modes()
                                        : static_cast<int>(2 * pdm.points());
}

}  // namespace

// ------------------------------------------------------------------ model

CascadeModel::CascadeModel(Pdm pdm, ParamVector p0, int crop_size, DescriptorConfig descriptor,
                           std::vector<CascadeStage> stages)
    : pdm_(std::move(pdm)), p0_(std::move(p0)), crop_size_(crop_size), descriptor_(descriptor) {
  if (p0_.modes() != pdm_.modes()) throw std::invalid_argument("CascadeModel: p0 does not match the PDM");
  if (crop_size_ < 3) throw std::invalid_argument("CascadeModel: crop size too small");
  if (descriptor_.cells < 1 || descriptor_.window < descriptor_.cells) {
    throw std::invalid_argument("CascadeModel: invalid descriptor layout");
  }
  for (auto& s : stages) add_stage(std::move(s));
}

int CascadeModel::descriptor_length() const {
  return descriptor_.length_per_point() * static_cast<int>(pdm_.points());
}

void CascadeModel::check_stage(const CascadeStage& stage, const CascadeStage* previous) const {
  if (previous != nullptr && previous->kind == StageKind::kExplicit && stage.kind == StageKind::kParametric) {
    throw std::invalid_argument("CascadeModel: parametric stage after an explicit stage");
  }
  if (stage.forest.output_dim() != output_dim_for(stage.kind, pdm_)) {
    throw std::invalid_argument(std::string("CascadeModel: ") + to_string(stage.kind) +
                                " stage forest has the wrong output dimension");
  }
  if (stage.projection.input_dim() != descriptor_length()) {
    throw std::invalid_argument("CascadeModel: projection input does not match the descriptor length");
  }
  if (stage.projection.output_dim() != stage.forest.input_dim()) {
    throw std::invalid_argument("CascadeModel: projection output does not match the forest input");
  }
}

void CascadeModel::add_stage(CascadeStage stage) {
  check_stage(stage, stages_.empty() ? nullptr : &stages_.back());
  stages_.push_back(std::move(stage));
}

bool CascadeModel::frozen() const {
  return std::all_of(stages_.begin(), stages_.end(),
                     [](const CascadeStage& s) { return s.forest.mode() == ForestMode::kGreedy; });
}

// ------------------------------------------------------------------ inference

AlignResult align_crop(const CascadeModel& model, const IntegralChannels& crop_channels) {
  if (model.stages().empty()) throw std::invalid_argument("align: model has no stages");
  AlignResult out;
  out.params = model.p0();
  Shape shape = synthesize(out.params, model.pdm());
  out.crop_trace.push_back(shape);

  for (const auto& stage : model.stages()) {
    const Eigen::VectorXd x = shape_descriptor(crop_channels, shape, model.descriptor());
    const Eigen::VectorXd delta = stage.forest.predict(project(stage.projection, x));
    if (stage.kind == StageKind::kParametric) {
      out.params.values() += delta;
      shape = synthesize(out.params, model.pdm());
    } else {
      shape = Shape::from_stacked(shape.stacked() + delta);
    }
    out.crop_trace.push_back(shape);
  }
  out.shape = shape;
  return out;
}

AlignResult align(const CascadeModel& model, const GrayImage& image, const BBox& bbox) {
  if (model.stages().empty()) throw std::invalid_argument("align: model has no stages");
  const GrayImage crop = crop_image(image, bbox, model.crop_size());
  AlignResult out = align_crop(model, compute_channels(crop));
  out.transform = CropTransform::from_bbox(bbox, model.crop_size());
  out.shape = out.transform.to_image(out.crop_trace.back());
  return out;
}

// ------------------------------------------------------------------ targets

StageTargets compute_stage_targets(StageKind kind, const std::vector<TrainingExample>& examples,
                                   const CascadeState& state) {
  if (examples.empty()) throw std::invalid_argument("compute_stage_targets: empty dataset");
  if (state.params.size() != examples.size() || state.shapes.size() != examples.size()) {
    throw std::invalid_argument("compute_stage_targets: state does not match the dataset");
  }
  StageTargets out;
  out.targets.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (kind == StageKind::kParametric) {
      out.targets.push_back(examples[i].fitted.values() - state.params[i].values());
    } else {
      out.targets.push_back(examples[i].truth.stacked() - state.shapes[i].stacked());
    }
  }
  out.stats = LeafStats::from_samples(out.targets);
  return out;
}

CascadeStage make_stage(StageKind kind, const LeafStats& stats, int descriptor_length,
                        const StageArchitecture& arch, std::uint64_t seed) {
  CascadeStage stage;
  stage.kind = kind;
  stage.projection = ProjectionLayer::random(arch.projection_dim, descriptor_length, arch.projection_init_range,
                                             arch.sparsity, mix_seed(seed, 0, 0));
  ForestInit init;
  init.trees_per_dim = arch.trees_per_dim;
  init.depth = arch.depth;
  init.input_dim = arch.projection_dim;
  init.weight_range = arch.init_range;
  init.seed = mix_seed(seed, 1, 0);
  stage.forest = init_forest(stats, init);
  return stage;
}

// ------------------------------------------------------------------ training

namespace {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double half_width() const { return 0.5 * (hi - lo); }
};

/// Half-widths of the scale (x, y) and translation (x, y) residual ranges.
struct PerturbRanges {
  double scale_x = 0.0;
  double scale_y = 0.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
};

double spread(const Shape& s) {
  const Point2 c = s.centroid();
  const auto n = static_cast<Eigen::Index>(s.size());
  const double sx = (s.stacked().head(n).array() - c.x).square().sum();
  const double sy = (s.stacked().tail(n).array() - c.y).square().sum();
  return std::sqrt((sx + sy) / static_cast<double>(n));
}

PerturbRanges residual_ranges(StageKind kind, const std::vector<TrainingExample>& examples,
                              const CascadeState& state) {
  Range sx, sy, tx, ty;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (kind == StageKind::kParametric) {
      const ParamVector& cur = state.params[i];
      const ParamVector& fit = examples[i].fitted;
      if (cur.alpha_x() != 0.0) sx.add(fit.alpha_x() / cur.alpha_x() - 1.0);
      if (cur.alpha_y() != 0.0) sy.add(fit.alpha_y() / cur.alpha_y() - 1.0);
      tx.add(fit.t_x() - cur.t_x());
      ty.add(fit.t_y() - cur.t_y());
    } else {
      const Shape& cur = state.shapes[i];
      const Shape& truth = examples[i].truth;
      const double cs = spread(cur);
      if (cs > 0.0) {
        sx.add(spread(truth) / cs - 1.0);
        sy.add(spread(truth) / cs - 1.0);
      }
      const Point2 ct = truth.centroid();
      const Point2 cc = cur.centroid();
      tx.add(ct.x - cc.x);
      ty.add(ct.y - cc.y);
    }
  }
  return {sx.half_width(), sy.half_width(), tx.half_width(), ty.half_width()};
}

double sample(std::mt19937_64& rng, double half_width) {
  if (!(half_width > 0.0)) return 0.0;
  return std::uniform_real_distribution<double>(-half_width, half_width)(rng);
}

}  // namespace

double stage_target_mse(const CascadeStage& stage, const Pdm& pdm, const DescriptorConfig& descriptor,
                        const std::vector<TrainingExample>& examples, const CascadeState& state,
                        const std::vector<Eigen::VectorXd>& targets) {
  if (targets.size() != examples.size()) throw std::invalid_argument("stage_target_mse: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const IntegralChannels channels = compute_channels(examples[i].crop);
    const Shape shape = stage.kind == StageKind::kParametric ? synthesize(state.params[i], pdm) : state.shapes[i];
    const Eigen::VectorXd x = shape_descriptor(channels, shape, descriptor);
    const Eigen::VectorXd pred = stage.forest.predict(project(stage.projection, x));
    total += (pred - targets[i]).squaredNorm() / static_cast<double>(pred.size());
  }
  return total / static_cast<double>(examples.size());
}

CascadeStage train_stage(CascadeStage stage, const Pdm& pdm, const DescriptorConfig& descriptor,
                         const std::vector<TrainingExample>& examples, const CascadeState& state,
                         const StageTrainConfig& config, StageTrainReport* report) {
  if (stage.forest.mode() != ForestMode::kSoft) {
    throw std::logic_error("train_stage: stage is already frozen");
  }
  if (config.updates < 0) throw std::invalid_argument("train_stage: negative update count");
  const StageTargets targets = compute_stage_targets(stage.kind, examples, state);
  if (report != nullptr) {
    report->kind = stage.kind;
    report->mse_before = stage_target_mse(stage, pdm, descriptor, examples, state, targets.targets);
  }

  const PerturbRanges ranges = residual_ranges(stage.kind, examples, state);
  const double f = config.perturb.fraction;
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, examples.size() - 1);

  constexpr int kTraceWindow = 1000;
  double window_loss = 0.0;
  int window_count = 0;

  for (int u = 0; u < config.updates; ++u) {
    const std::size_t i = pick(rng);
    const double us_x = sample(rng, f * ranges.scale_x);
    const double us_y = sample(rng, f * ranges.scale_y);
    const double ut_x = sample(rng, f * ranges.shift_x);
    const double ut_y = sample(rng, f * ranges.shift_y);

    Shape shape;
    Eigen::VectorXd target;
    if (stage.kind == StageKind::kParametric) {
      ParamVector p = state.params[i];
      p[ParamVector::kAlphaX] *= 1.0 + us_x;
      p[ParamVector::kAlphaY] *= 1.0 + us_y;
      p[ParamVector::kTx] += ut_x;
      p[ParamVector::kTy] += ut_y;
      shape = synthesize(p, pdm);
      target = examples[i].fitted.values() - p.values();
    } else {
      const Shape& cur = state.shapes[i];
      const Point2 c = cur.centroid();
      const auto n = static_cast<Eigen::Index>(cur.size());
      Eigen::VectorXd xy = cur.stacked();
      xy.head(n) = (xy.head(n).array() - c.x) * (1.0 + us_x) + c.x + ut_x;
      xy.tail(n) = (xy.tail(n).array() - c.y) * (1.0 + us_x) + c.y + ut_y;
      shape = Shape::from_stacked(std::move(xy));
      target = examples[i].truth.stacked() - shape.stacked();
    }

    const IntegralChannels channels = compute_channels(examples[i].crop);
    const Eigen::VectorXd x = shape_descriptor(channels, shape, descriptor);
    const Eigen::VectorXd z = project_dense(stage.projection, x);
    const SgdStep step = forest_sgd_step(stage.forest, z, target, config.learning_rate);
    update_truncated(stage.projection, x, z, step.input_grad, config.projection_learning_rate);

    window_loss += step.loss;
    if (++window_count == kTraceWindow) {
      if (report != nullptr) report->loss_trace.push_back(window_loss / window_count);
      window_loss = 0.0;
      window_count = 0;
    }
  }
  if (report != nullptr && window_count > 0) report->loss_trace.push_back(window_loss / window_count);

  stage.forest.freeze();
  stage.projection.finalize();
  if (report != nullptr) {
    report->mse_after = stage_target_mse(stage, pdm, descriptor, examples, state, targets.targets);
    report->sparsity = sparsity(stage.projection);
  }
  return stage;
}

void apply_stage(const CascadeStage& stage, const Pdm& pdm, const DescriptorConfig& descriptor,
                 const std::vector<TrainingExample>& examples, CascadeState& state) {
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const IntegralChannels channels = compute_channels(examples[i].crop);
    const Eigen::VectorXd x = shape_descriptor(channels, state.shapes[i], descriptor);
    const Eigen::VectorXd delta = stage.forest.predict(project(stage.projection, x));
    if (stage.kind == StageKind::kParametric) {
      state.params[i].values() += delta;
      state.shapes[i] = synthesize(state.params[i], pdm);
    } else {
      state.shapes[i] = Shape::from_stacked(state.shapes[i].stacked() + delta);
    }
  }
}

std::vector<StageKind> CascadeConfig::stage_kinds() const {
  std::vector<StageKind> kinds;
  for (char c : stages) {
    if (c == 'P' || c == 'p') {
      if (!kinds.empty() && kinds.back() == StageKind::kExplicit) {
        throw std::invalid_argument("cascade config: explicit stage placed before a parametric stage");
      }
      kinds.push_back(StageKind::kParametric);
    } else if (c == 'E' || c == 'e') {
      kinds.push_back(StageKind::kExplicit);
    } else {
      throw std::invalid_argument(std::string("cascade config: unknown stage letter '") + c + "'");
    }
  }
  if (kinds.empty()) throw std::invalid_argument("cascade config: no stages");
  return kinds;
}

PreparedData prepare_training_data(const CascadeConfig& config, const std::vector<TrainingSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("train_cascade: empty dataset");
  PreparedData data;
  std::vector<Shape> truths;
  truths.reserve(samples.size());
  data.examples.reserve(samples.size());
  for (const auto& s : samples) {
    const CropTransform t = CropTransform::from_bbox(s.bbox, config.crop_size);
    TrainingExample ex;
    ex.crop = crop_image(s.image, s.bbox, config.crop_size);
    ex.truth = t.to_crop(s.shape);
    truths.push_back(ex.truth);
    data.examples.push_back(std::move(ex));
  }

  data.pdm = build_pdm(align_training_shapes(truths), config.pdm_modes);
  Eigen::VectorXd rigid_sum = Eigen::VectorXd::Zero(ParamVector::kRigidCount);
  for (auto& ex : data.examples) {
    ex.fitted = fit_parameters(ex.truth, data.pdm, config.gauss_newton_iterations).params;
    rigid_sum += ex.fitted.values().head(ParamVector::kRigidCount);
  }
  data.p0 = ParamVector::identity(data.pdm.modes());
  data.p0.values().head(ParamVector::kRigidCount) = rigid_sum / static_cast<double>(data.examples.size());
  return data;
}

CascadeModel train_cascade(const CascadeConfig& config, const std::vector<TrainingSample>& samples,
                           CascadeTrainReport* report, const std::function<void(const std::string&)>& progress) {
  const std::vector<StageKind> kinds = config.stage_kinds();
  auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };

  PreparedData data = prepare_training_data(config, samples);
  say("prepared " + std::to_string(data.examples.size()) + " examples, PDM with " +
      std::to_string(data.pdm.modes()) + " modes");

  DescriptorConfig descriptor;
  descriptor.window = config.window;
  descriptor.cells = config.cells;
  CascadeModel model(data.pdm, data.p0, config.crop_size, descriptor);

  CascadeState state;
  state.params.assign(data.examples.size(), data.p0);
  state.shapes.assign(data.examples.size(), synthesize(data.p0, data.pdm));

  for (std::size_t idx = 0; idx < kinds.size(); ++idx) {
    const StageKind kind = kinds[idx];
    const StageTargets targets = compute_stage_targets(kind, data.examples, state);

    StageArchitecture arch;
    arch.trees_per_dim = kind == StageKind::kParametric ? config.trees_parametric : config.trees_explicit;
    arch.depth = config.depth;
    arch.projection_dim = config.projection_dim;
    arch.init_range = config.init_range;
    arch.projection_init_range = config.projection_init_range;
    arch.sparsity = {config.eta, config.theta};
    CascadeStage stage = make_stage(kind, targets.stats, model.descriptor_length(), arch,
                                    mix_seed(config.seed, idx, 1));

    StageTrainConfig train;
    train.updates = config.updates;
    train.learning_rate = config.learning_rate;
    train.projection_learning_rate = config.projection_learning_rate;
    train.perturb.fraction = config.perturb_fraction;
    train.seed = mix_seed(config.seed, idx, 2);

    StageTrainReport stage_report;
    stage = train_stage(std::move(stage), data.pdm, descriptor, data.examples, state, train, &stage_report);
    apply_stage(stage, data.pdm, descriptor, data.examples, state);
    say("stage " + std::to_string(idx) + " (" + to_string(kind) + "): target mse " +
        std::to_string(stage_report.mse_before) + " -> " + std::to_string(stage_report.mse_after) +
        ", projection sparsity " + std::to_string(stage_report.sparsity));
    if (report != nullptr) report->stages.push_back(std::move(stage_report));
    model.add_stage(std::move(stage));
  }
  return model;
}

}  // namespace gnf
