#include "gnf/bench.hpp"
#include "gnf/config.hpp"
#include "gnf/dataset_io.hpp"
#include "gnf/error.hpp"
#include "gnf/features.hpp"
#include "gnf/metrics.hpp"
#include "gnf/synth.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace gnf;
namespace fs = std::filesystem;

namespace {

int error_code(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return static_cast<int>(e.code());
  }
  return -1;
}

int code(DataErrc c) { return static_cast<int>(c); }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Fresh scratch directory under the system temp dir.
fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gnf_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string pts_text(int declared, int pairs) {
  std::ostringstream s;
  s << "version: 1\nn_points: " << declared << "\n{\n";
  for (int i = 0; i < pairs; ++i) s << i * 1.5 << ' ' << 200 - i << '\n';
  s << "}\n";
  return s.str();
}

}  // namespace

TEST_CASE("pts files") {
  SUBCASE("well-formed") {
    std::istringstream in(pts_text(68, 68));
    const Shape s = parse_pts(in);
    CHECK(s.size() == 68);
    CHECK(s.x(3) == 4.5);
    CHECK(s.y(3) == 197.0);
  }

  SUBCASE("distinct errors") {
    auto parse = [](const std::string& text) {
      return error_code([&] {
        std::istringstream in(text);
        parse_pts(in);
      });
    };
    CHECK(parse(pts_text(68, 67)) == code(DataErrc::kCountMismatch));
    CHECK(parse(pts_text(3, 4)) == code(DataErrc::kCountMismatch));
    CHECK(parse("version: 2\nn_points: 1\n{\n1 2\n}\n") == code(DataErrc::kMalformedHeader));
    CHECK(parse("n_points: 1\n{\n1 2\n}\n") == code(DataErrc::kMalformedHeader));
    CHECK(parse("version: 1\nn_points: 1\n1 2\n}\n") == code(DataErrc::kMalformedHeader));
    CHECK(parse("version: 1\nn_points: 3\n{\n1 2\n3 abc\n4 5\n}\n") == code(DataErrc::kNonNumeric));
    CHECK(error_code([] { load_pts("/nonexistent/file.pts"); }) == code(DataErrc::kIo));
  }

  SUBCASE("round trip to 6 decimals") {
    std::mt19937_64 rng(1);
    const Shape s = testutil::random_shape(rng, 68, 300.0);
    std::stringstream io;
    write_pts(io, s);
    const Shape back = parse_pts(io);
    CHECK((back.stacked() - s.stacked()).cwiseAbs().maxCoeff() <= 5e-7);
  }
}

TEST_CASE("P5 graymaps") {
  SUBCASE("2x2 payload") {
    std::string data = "P5\n# comment\n2 2\n255\n";
    data += std::string{char(0), char(85), char(170), char(255)};
    std::istringstream in(data);
    const GrayImage im = parse_gray(in);
    CHECK(im.width() == 2);
    CHECK(im.at(0, 0) == 0);
    CHECK(im.at(1, 0) == 85);
    CHECK(im.at(0, 1) == 170);
    CHECK(im.at(1, 1) == 255);
  }

  SUBCASE("errors") {
    auto parse = [](const std::string& text) {
      return error_code([&] {
        std::istringstream in(text);
        parse_gray(in);
      });
    };
    CHECK(parse("P6\n2 2\n255\n" + std::string(12, 'a')) == code(DataErrc::kUnsupportedFormat));
    CHECK(parse("P5\n2 2\n65535\n" + std::string(8, 'a')) == code(DataErrc::kUnsupportedFormat));
    CHECK(parse("P5\n2 2\n255\nabc") == code(DataErrc::kIo));
    CHECK(parse("P5\nx 2\n255\n") == code(DataErrc::kMalformedHeader));
  }

  SUBCASE("save and load") {
    const fs::path dir = scratch("p5");
    std::mt19937_64 rng(2);
    std::vector<std::uint8_t> px(35);
    for (auto& v : px) v = static_cast<std::uint8_t>(rng());
    const GrayImage im(7, 5, px);
    save_gray(im, (dir / "a.pgm").string());
    CHECK(load_gray((dir / "a.pgm").string()) == im);
    fs::remove_all(dir);
  }
}

TEST_CASE("crop transform") {
  std::mt19937_64 rng(3);
  std::vector<std::uint8_t> px(200 * 200);
  for (auto& v : px) v = static_cast<std::uint8_t>(rng());
  const GrayImage im(200, 200, px);

  CHECK(crop_image(im, BBox{0, 0, 200, 200}, 200) == im);

  const CropTransform t = CropTransform::from_bbox(BBox{30, 40, 100, 100}, 200);
  CHECK(t.scale_x == 2.0);
  CHECK(t.scale_y == 2.0);
  for (int i = 0; i < 100; ++i) {
    const Point2 p{testutil::random_vector(rng, 1, -50, 250)[0], testutil::random_vector(rng, 1, -50, 250)[0]};
    const Point2 q = t.to_image(t.to_crop(p));
    CHECK(std::abs(q.x - p.x) < 1e-9);
    CHECK(std::abs(q.y - p.y) < 1e-9);
  }

  // a 2x downscale of a box whose pixels are constant 2x2 blocks is exact
  GrayImage blocks(8, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) blocks.at(x, y) = static_cast<std::uint8_t>(10 * (x / 2) + 50 * (y / 2));
  }
  const GrayImage half = crop_image(blocks, BBox{0, 0, 8, 8}, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) CHECK(half.at(x, y) == 10 * x + 50 * y);
  }

  CHECK_THROWS_AS(crop_image(im, BBox{300, 10, 20, 20}, 50), std::invalid_argument);
  CHECK_THROWS_AS(crop_image(im, BBox{10, 10, -5, 20}, 50), std::invalid_argument);
}

TEST_CASE("normalized mean error") {
  std::mt19937_64 rng(4);
  const Shape truth = face_template(68).translated(0, 0);
  const double ipd = inter_pupil_distance(truth);
  CHECK(ipd == doctest::Approx(0.9));  // eye centers sit at x = -0.45 and 0.45

  CHECK(nme(truth, truth, Normalizer::inter_pupil()) == 0.0);
  CHECK(nme(truth.translated(0.03, 0.04), truth, Normalizer::inter_pupil()) ==
        doctest::Approx(100.0 * 0.05 / ipd).epsilon(1e-12));

  const BBox box{0, 0, 4, 9};
  CHECK(Normalizer::bbox(box).bbox_size == 6.0);
  CHECK(nme(truth.translated(0.6, 0.0), truth, Normalizer::bbox(box)) == doctest::Approx(10.0).epsilon(1e-12));

  for (int trial = 0; trial < 20; ++trial) {
    const Shape a = testutil::random_shape(rng, 68), b = testutil::random_shape(rng, 68);
    double left_x = 0, left_y = 0, right_x = 0, right_y = 0;
    for (int i = 36; i < 42; ++i) {
      left_x += b.x(i) / 6;
      left_y += b.y(i) / 6;
      right_x += b.x(i + 6) / 6;
      right_y += b.y(i + 6) / 6;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < 68; ++i) sum += std::hypot(a.x(i) - b.x(i), a.y(i) - b.y(i));
    const double ref = 100.0 * sum / 68.0 / std::hypot(left_x - right_x, left_y - right_y);
    CHECK(std::abs(nme(a, b, Normalizer::inter_pupil()) - ref) < 1e-12 * std::max(1.0, ref));
  }

  const Shape t51 = face_template(51);
  CHECK(inter_pupil_distance(t51) == doctest::Approx(0.9));
  CHECK_THROWS_AS(inter_pupil_distance(face_template(10)), std::invalid_argument);
  CHECK_THROWS_AS(nme(t51, truth, Normalizer::inter_pupil()), std::invalid_argument);
  CHECK_THROWS_AS(nme(truth, truth, Normalizer::bbox(BBox{0, 0, 0, 0})), std::invalid_argument);
}

TEST_CASE("cumulative error distribution and reports") {
  const std::vector<double> errors{0.0, 0.05, 1.0, 3.3, 25.0};
  const auto ced = cumulative_error_distribution(errors);
  CHECK(ced.size() == 201);
  CHECK(ced.front().threshold == 0.0);
  CHECK(ced.back().threshold == doctest::Approx(20.0));
  CHECK(ced.front().fraction == doctest::Approx(0.2));
  CHECK(ced[10].fraction == doctest::Approx(0.6));  // threshold 1.0 counts errors <= 1
  CHECK(ced.back().fraction == doctest::Approx(0.8));
  for (std::size_t i = 1; i < ced.size(); ++i) {
    CHECK(ced[i].fraction >= ced[i - 1].fraction);
    CHECK(ced[i].fraction <= 1.0);
  }

  const EvalReport r = make_report({"a.pgm", "b.pgm", "c.pgm", "d.pgm", "e.pgm"}, errors);
  CHECK(r.mean == doctest::Approx(29.35 / 5.0));
  const std::string per = per_image_csv(r);
  CHECK(per.rfind("index,image,nme\n0,a.pgm,", 0) == 0);
  const std::string c = ced_csv(r);
  CHECK(c.rfind("threshold,fraction\n", 0) == 0);
  CHECK(c.find("inf,1") != std::string::npos);
  CHECK_THROWS_AS(make_report({"a"}, {}), std::invalid_argument);
}

TEST_CASE("synthetic data") {
  SynthConfig cfg;
  cfg.count = 6;

  SUBCASE("same seed gives a byte-identical dataset") {
    const fs::path a = scratch("synth_a"), b = scratch("synth_b");
    write_dataset(synth_generate(cfg, 11), a.string());
    write_dataset(synth_generate(cfg, 11), b.string());
    for (const auto& e : fs::directory_iterator(a)) {
      const fs::path other = b / e.path().filename();
      REQUIRE(fs::exists(other));
      if (e.path().filename() == "manifest.tsv") continue;  // holds directory-relative paths only
      CHECK(read_file(e.path()) == read_file(other));
    }
    CHECK(read_file(a / "manifest.tsv") == read_file(b / "manifest.tsv"));
    const SynthDataset c = synth_generate(cfg, 12);
    CHECK_FALSE(c.examples[0].image == synth_generate(cfg, 11).examples[0].image);

    // reload through the manifest
    const auto loaded = load_manifest((a / "manifest.tsv").string());
    const SynthDataset ref = synth_generate(cfg, 11);
    REQUIRE(loaded.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK((loaded[i].shape.stacked() - ref.examples[i].shape.stacked()).cwiseAbs().maxCoeff() <= 1e-6);
      CHECK(std::abs(loaded[i].bbox.w - ref.examples[i].bbox.w) <= 1e-6);
    }
    const auto samples = load_samples(loaded);
    CHECK(samples[2].image == ref.examples[2].image);
    fs::remove_all(a);
    fs::remove_all(b);
  }

  SUBCASE("fitting recovers the planted parameters") {
    cfg.count = 30;
    const SynthDataset d = synth_generate(cfg, 5);
    for (const auto& ex : d.examples) {
      const FitResult fit = fit_parameters(ex.shape, d.planted);
      const double rms = std::sqrt(fit.objective / static_cast<double>(ex.shape.size()));
      CHECK(rms < 1e-4);
      CHECK((fit.params.values() - ex.params.values()).cwiseAbs().maxCoeff() < 1e-4);
    }
  }

  SUBCASE("landmark blobs carry descriptor signal") {
    // Landmarks sit about 8 px apart, so a 40 px window moved 20 px in an
    // arbitrary direction still covers several neighbouring blobs. Moving
    // away from the face centre isolates the blob signal from the background.
    cfg.count = 10;
    const SynthDataset d = synth_generate(cfg, 6);
    DescriptorConfig raw;
    raw.normalize = false;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    int outward = 0, random = 0, total = 0;
    for (const auto& ex : d.examples) {
      const IntegralChannels ch = compute_channels(ex.image);
      const Point2 c = ex.shape.centroid();
      for (std::size_t i = 0; i < ex.shape.size(); ++i) {
        const Point2 p = ex.shape.point(i);
        const double at = extract_point_descriptor(ch, p, raw).norm();
        const double r = std::hypot(p.x - c.x, p.y - c.y);
        const Point2 out{p.x + 20.0 * (p.x - c.x) / r, p.y + 20.0 * (p.y - c.y) / r};
        const double a = angle(rng);
        const Point2 any{p.x + 20.0 * std::cos(a), p.y + 20.0 * std::sin(a)};
        outward += at > extract_point_descriptor(ch, out, raw).norm() ? 1 : 0;
        random += at > extract_point_descriptor(ch, any, raw).norm() ? 1 : 0;
        ++total;
      }
    }
    MESSAGE("stronger at the landmark: " << outward << "/" << total << " vs outward offset, " << random << "/"
                                         << total << " vs random offset");
    CHECK(outward >= 0.95 * total);
    CHECK(random > 0.5 * total);
  }

  SUBCASE("ground truth stays inside the crop") {
    cfg.count = 200;
    const SynthDataset d = synth_generate(cfg, 7);
    int inside = 0;
    for (const auto& ex : d.examples) {
      const Shape c = CropTransform::from_bbox(ex.bbox, 200).to_crop(ex.shape);
      const auto& v = c.stacked();
      inside += (v.array() >= -0.5).all() && (v.array() <= 199.5).all() ? 1 : 0;
    }
    CHECK(inside >= 198);
  }

  SUBCASE("unwritable directory") {
    const fs::path f = scratch("synth_file") / "plain";
    std::ofstream(f) << "x";
    CHECK(error_code([&] { write_dataset(synth_generate(cfg, 1), (f / "sub").string()); }) == code(DataErrc::kIo));
    fs::remove_all(f.parent_path());
  }

  SUBCASE("other layouts") {
    cfg.points = 51;
    CHECK(synth_generate(cfg, 1).examples[0].shape.size() == 51);
    cfg.points = 12;
    CHECK(synth_generate(cfg, 1).examples[0].shape.size() == 12);
    CHECK_THROWS_AS(face_template(2), std::invalid_argument);
  }
}

TEST_CASE("manifest files") {
  const fs::path dir = scratch("manifest");
  std::ofstream(dir / "a.pts") << pts_text(3, 3);
  {
    std::ofstream m(dir / "m.tsv");
    m << "# comment line\n\na.pgm\ta.pts\t1\t2\t30\t40\n";
  }
  const auto ex = load_manifest((dir / "m.tsv").string());
  REQUIRE(ex.size() == 1);
  CHECK(ex[0].image_path == (dir / "a.pgm").string());
  CHECK(ex[0].bbox.h == 40.0);
  CHECK(ex[0].shape.size() == 3);

  auto write_and_load = [&](const std::string& text) {
    std::ofstream(dir / "bad.tsv") << text;
    return error_code([&] { load_manifest((dir / "bad.tsv").string()); });
  };
  CHECK(write_and_load("a.pgm\ta.pts\t1\t2\t30\n") == code(DataErrc::kMalformedHeader));
  CHECK(write_and_load("a.pgm\ta.pts\t1\t2\tx\t40\n") == code(DataErrc::kNonNumeric));
  CHECK(write_and_load("a.pgm\ta.pts\t1\t2\t0\t40\n") == code(DataErrc::kMalformedHeader));
  CHECK(write_and_load("# nothing\n") == code(DataErrc::kCountMismatch));
  CHECK(write_and_load("a.pgm\tmissing.pts\t1\t2\t3\t4\n") == code(DataErrc::kIo));
  fs::remove_all(dir);
}

TEST_CASE("configuration") {
  CascadeConfig c;
  CHECK(c.stages == "PPPE");
  CHECK(c.depth == 8);
  CHECK(c.trees_parametric == 25);
  CHECK(c.trees_explicit == 5);
  CHECK(c.projection_dim == 500);
  CHECK(c.learning_rate == 0.005);
  CHECK(c.updates == 200000);
  CHECK(c.eta == 0.01);
  CHECK(c.theta == 0.05);
  CHECK(c.init_range == 0.01);
  CHECK(c.crop_size == 200);
  CHECK(c.window == 40);
  CHECK(c.cells == 4);

  apply_assignment(c, "depth=6");
  apply_assignment(c, " stages = PPE ");
  apply_assignment(c, "seed=42");
  CHECK(c.depth == 6);
  CHECK(c.stages == "PPE");
  CHECK(c.seed == 42u);
  CHECK_THROWS_AS(apply_assignment(c, "depth"), std::invalid_argument);
  CHECK_THROWS_AS(apply_assignment(c, "nosuchkey=1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_assignment(c, "depth=abc"), std::invalid_argument);
  CHECK_THROWS_AS(apply_assignment(c, "depth=0"), std::invalid_argument);
  CHECK_THROWS_AS(apply_assignment(c, "stages=EP"), std::invalid_argument);

  // every key of the formatted file is recognised and round-trips
  const fs::path dir = scratch("config");
  c.learning_rate = 0.0123;
  std::ofstream(dir / "c.cfg") << "# generated\n" << format_config(c);
  const CascadeConfig back = load_config((dir / "c.cfg").string());
  CHECK(format_config(back) == format_config(c));
  std::size_t lines = 0;
  for (char ch : format_config(c)) lines += ch == '\n';
  CHECK(lines == config_keys().size());
  CHECK(error_code([&] { load_config((dir / "missing.cfg").string()); }) == code(DataErrc::kIo));
  fs::remove_all(dir);
}

TEST_CASE("bench reports split counts and timings") {
  SynthConfig s;
  s.count = 12;
  s.image_size = 96;
  const auto samples = to_training_samples(synth_generate(s, 2));
  CascadeConfig c;
  c.stages = "P";
  c.depth = 4;
  c.trees_parametric = 1;
  c.projection_dim = 4;
  c.updates = 20;
  c.pdm_modes = 3;
  c.crop_size = 48;
  c.window = 12;
  c.cells = 3;
  const CascadeModel model = train_cascade(c, samples);
  const BenchReport r = bench(model, samples, 2);
  CHECK(r.images == 12);
  CHECK(r.soft_splits_per_tree == 15.0);
  CHECK(r.greedy_splits_per_tree == 4.0);
  CHECK(r.total_ms > 0.0);
  const std::string csv = bench_csv(r);
  CHECK(csv.rfind("step,value\n", 0) == 0);
  CHECK(csv.find("forest_greedy_ms") != std::string::npos);
}
