// gnf: command-line front end for synthetic data, training, alignment,
// evaluation and benchmarking.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include "gnf/bench.hpp"
#include "gnf/cascade.hpp"
#include "gnf/config.hpp"
#include "gnf/dataset_io.hpp"
#include "gnf/error.hpp"
#include "gnf/metrics.hpp"
#include "gnf/synth.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

constexpr int kUsageError = 1;
constexpr int kDataError = 2;

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw gnf::DataError(gnf::DataErrc::kIo, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw gnf::DataError(gnf::DataErrc::kIo, "failed writing '" + path + "'");
}

gnf::Normalizer normalizer_for(const std::string& name, const gnf::BBox& box) {
  return name == "bbox" ? gnf::Normalizer::bbox(box) : gnf::Normalizer::inter_pupil();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Face alignment with cascaded greedy neural forests"};
  app.require_subcommand(1);

  // synth
  gnf::SynthConfig synth;
  std::string synth_out;
  std::uint64_t synth_seed = 1;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic annotated dataset");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--count", synth.count, "number of images")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--points", synth.points, "landmarks per face (68, 51 or any count >= 3)")
      ->check(CLI::Range(3, 100000));
  synth_cmd->add_option("--size", synth.image_size, "image side in pixels")->check(CLI::Range(16, 8192));
  synth_cmd->add_option("--modes", synth.planted_modes, "planted deformation modes")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--point-noise", synth.point_noise, "per-landmark noise in pixels");
  synth_cmd->add_option("--seed", synth_seed, "random seed");

  // train
  std::string train_manifest, train_config, train_out;
  std::vector<std::string> overrides;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "train a cascade from a dataset manifest");
  train_cmd->add_option("--manifest", train_manifest, "dataset manifest (TSV)")->required();
  train_cmd->add_option("--config", train_config, "key=value configuration file");
  train_cmd->add_option("--set", overrides, "override a configuration key, key=value (repeatable)");
  train_cmd->add_option("--out", train_out, "output model file")->required();
  train_cmd->add_flag("--quiet", quiet, "suppress progress output");
  bool print_config = false;
  auto* config_cmd = app.add_subcommand("config", "print the default configuration file");
  config_cmd->add_flag("--keys", print_config, "describe every key instead");

  // align
  std::string align_model, align_image, align_out;
  std::vector<double> align_box;
  auto* align_cmd = app.add_subcommand("align", "align one face");
  align_cmd->add_option("--model", align_model, "model file")->required();
  align_cmd->add_option("--image", align_image, "P5 graymap")->required();
  align_cmd->add_option("--bbox", align_box, "face box: x y w h")->expected(4)->required();
  align_cmd->add_option("--out", align_out, "output .pts file (default: stdout)");

  // eval
  std::string eval_model, eval_manifest, eval_out, eval_ced, eval_norm = "interpupil";
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a model, or predictions, against a manifest");
  auto* eval_model_opt = eval_cmd->add_option("--model", eval_model, "model file");
  std::string eval_predictions;
  auto* eval_pred_opt =
      eval_cmd->add_option("--predictions", eval_predictions, "manifest of predicted .pts files instead of a model");
  eval_model_opt->excludes(eval_pred_opt);
  eval_cmd->add_option("--manifest", eval_manifest, "ground-truth manifest")->required();
  eval_cmd->add_option("--out", eval_out, "per-image CSV (default: stdout)");
  eval_cmd->add_option("--ced", eval_ced, "cumulative error distribution CSV");
  eval_cmd->add_option("--normalizer", eval_norm, "interpupil or bbox")
      ->check(CLI::IsMember({"interpupil", "bbox"}));

  // bench
  std::string bench_model, bench_manifest, bench_out;
  int bench_reps = 5;
  auto* bench_cmd = app.add_subcommand("bench", "time every pipeline step");
  bench_cmd->add_option("--model", bench_model, "model file")->required();
  bench_cmd->add_option("--manifest", bench_manifest, "images to time")->required();
  bench_cmd->add_option("--repetitions", bench_reps, "repetitions per image")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--out", bench_out, "timing CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kUsageError;
  }

  try {
    if (*synth_cmd) {
      const gnf::SynthDataset data = gnf::synth_generate(synth, synth_seed);
      const std::string manifest = gnf::write_dataset(data, synth_out);
      std::cerr << "wrote " << data.examples.size() << " examples, manifest " << manifest << '\n';
    } else if (*config_cmd) {
      if (print_config) {
        for (const auto& k : gnf::config_keys()) std::cout << k.name << "\t" << k.help << '\n';
      } else {
        std::cout << gnf::format_config(gnf::CascadeConfig{});
      }
    } else if (*train_cmd) {
      gnf::CascadeConfig config;
      try {
        if (!train_config.empty()) config = gnf::load_config(train_config);
        for (const auto& o : overrides) gnf::apply_assignment(config, o);
      } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
      }
      const auto samples = gnf::load_samples(gnf::load_manifest(train_manifest));
      auto progress = [&](const std::string& msg) {
        if (!quiet) std::cerr << msg << '\n';
      };
      const gnf::CascadeModel model = gnf::train_cascade(config, samples, nullptr, progress);
      gnf::save_model(model, train_out);
    } else if (*align_cmd) {
      const gnf::CascadeModel model = gnf::load_model(align_model);
      const gnf::GrayImage image = gnf::load_gray(align_image);
      const gnf::BBox box{align_box[0], align_box[1], align_box[2], align_box[3]};
      const gnf::AlignResult result = gnf::align(model, image, box);
      if (align_out.empty()) {
        gnf::write_pts(std::cout, result.shape);
      } else {
        gnf::save_pts(result.shape, align_out);
      }
    } else if (*eval_cmd) {
      if (eval_model.empty() && eval_predictions.empty()) {
        std::cerr << "error: eval needs --model or --predictions\n\n" << eval_cmd->help();
        return kUsageError;
      }
      const auto truth = gnf::load_manifest(eval_manifest);
      std::vector<gnf::Shape> predicted;
      if (!eval_model.empty()) {
        const gnf::CascadeModel model = gnf::load_model(eval_model);
        for (const auto& ex : truth) predicted.push_back(gnf::align(model, gnf::load_gray(ex.image_path), ex.bbox).shape);
      } else {
        const auto preds = gnf::load_manifest(eval_predictions);
        if (preds.size() != truth.size()) {
          throw gnf::DataError(gnf::DataErrc::kCountMismatch, "prediction and ground-truth manifests differ in length");
        }
        for (const auto& p : preds) predicted.push_back(p.shape);
      }
      std::vector<std::string> names;
      std::vector<double> errors;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        names.push_back(truth[i].image_path);
        errors.push_back(gnf::nme(predicted[i], truth[i].shape, normalizer_for(eval_norm, truth[i].bbox)));
      }
      const gnf::EvalReport report = gnf::make_report(std::move(names), std::move(errors));
      write_text(eval_out, gnf::per_image_csv(report));
      if (!eval_ced.empty()) write_text(eval_ced, gnf::ced_csv(report));
      std::cerr << "mean NME " << report.mean << " over " << report.per_image.size() << " images\n";
    } else if (*bench_cmd) {
      const gnf::CascadeModel model = gnf::load_model(bench_model);
      const auto samples = gnf::load_samples(gnf::load_manifest(bench_manifest));
      write_text(bench_out, gnf::bench_csv(gnf::bench(model, samples, bench_reps)));
    }
  } catch (const gnf::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    // invalid boxes, mismatched landmark layouts and similar input problems
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return 0;
}
