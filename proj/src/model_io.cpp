#include "gnf/cascade.hpp"
#include "gnf/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace gnf {

namespace {

constexpr char kMagic[8] = {'G', 'N', 'F', 'M', 'O', 'D', 'E', 'L'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void count(Eigen::Index n) { u32(static_cast<std::uint32_t>(n)); }
  void vec(const Eigen::VectorXd& v) {
    count(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
  }
  void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError(DataErrc::kTruncated, "model file is truncated");
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  /// Reads a count and checks that at least `count * min_bytes_each` bytes remain.
  Eigen::Index count(std::size_t min_bytes_each = 0) {
    const std::uint32_t n = u32();
    if (n > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) bad("count out of range");
    need(static_cast<std::size_t>(n) * min_bytes_each);
    return static_cast<Eigen::Index>(n);
  }
  Eigen::VectorXd vec() {
    const Eigen::Index n = count(8);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = f64();
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

  [[noreturn]] static void bad(const std::string& what) {
    throw DataError(DataErrc::kBadModel, "model file: " + what);
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void write_projection(Writer& w, const ProjectionLayer& layer) {
  const RowMatrix& W = layer.weights();
  w.count(W.rows());
  w.count(W.cols());
  w.f64(layer.sparsity_config().eta);
  w.f64(layer.sparsity_config().theta);
  const bool sparse = layer.uses_sparse_path();
  w.u8(sparse ? 1 : 0);
  for (Eigen::Index r = 0; r < W.rows(); ++r) {
    if (!sparse) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) w.f64(W(r, c));
      continue;
    }
    std::uint32_t nnz = 0;
    for (Eigen::Index c = 0; c < W.cols(); ++c) nnz += W(r, c) != 0.0;
    w.u32(nnz);
    for (Eigen::Index c = 0; c < W.cols(); ++c) {
      if (W(r, c) == 0.0) continue;
      w.u32(static_cast<std::uint32_t>(c));
      w.f64(W(r, c));
    }
  }
}

ProjectionLayer read_projection(Reader& r) {
  const Eigen::Index rows = r.count();
  const Eigen::Index cols = r.count();
  SparsityConfig cfg;
  cfg.eta = r.f64();
  cfg.theta = r.f64();
  const std::uint8_t sparse = r.u8();
  if (sparse > 1) Reader::bad("unknown projection storage");
  if (!sparse) r.need(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * 8);
  RowMatrix W = RowMatrix::Zero(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (!sparse) {
      for (Eigen::Index c = 0; c < cols; ++c) W(i, c) = r.f64();
      continue;
    }
    const Eigen::Index nnz = r.count(12);
    for (Eigen::Index k = 0; k < nnz; ++k) {
      const std::uint32_t c = r.u32();
      if (c >= static_cast<std::uint32_t>(cols)) Reader::bad("projection column index out of range");
      W(i, c) = r.f64();
    }
  }
  ProjectionLayer layer(std::move(W), cfg);
  if (sparse) layer.finalize();
  return layer;
}

void write_forest(Writer& w, const Forest& f) {
  w.count(f.output_dim());
  w.count(f.trees_per_group());
  w.count(f.depth());
  w.count(f.input_dim());
  w.u8(static_cast<std::uint8_t>(f.mode()));
  for (int k = 0; k < f.stats().dim(); ++k) {
    w.f64(f.stats().mean[static_cast<std::size_t>(k)]);
    w.f64(f.stats().stddev[static_cast<std::size_t>(k)]);
  }
  for (const auto& group : f.groups()) {
    for (const Tree& t : group) {
      const RowMatrix& W = t.weights();
      for (Eigen::Index i = 0; i < W.size(); ++i) w.f64(W.data()[i]);
      for (Eigen::Index i = 0; i < t.thresholds().size(); ++i) w.f64(t.thresholds()[i]);
      for (Eigen::Index i = 0; i < t.leaves().size(); ++i) w.f64(t.leaves()[i]);
    }
  }
}

Forest read_forest(Reader& r) {
  const Eigen::Index dim = r.count();
  const Eigen::Index trees = r.count();
  const Eigen::Index depth = r.count();
  const Eigen::Index input = r.count();
  const std::uint8_t mode = r.u8();
  if (mode > 1) Reader::bad("unknown forest mode");
  if (depth < 1 || depth > 24) Reader::bad("forest depth out of range");
  if (dim < 1 || trees < 1 || input < 1) Reader::bad("empty forest");

  std::vector<double> mean(static_cast<std::size_t>(dim)), stddev(static_cast<std::size_t>(dim));
  r.need(static_cast<std::size_t>(dim) * 16);
  for (std::size_t k = 0; k < mean.size(); ++k) {
    mean[k] = r.f64();
    stddev[k] = r.f64();
  }
  const Eigen::Index splits = (Eigen::Index{1} << depth) - 1;
  const Eigen::Index per_tree = splits * input + splits + splits + 1;
  r.need(static_cast<std::size_t>(dim) * static_cast<std::size_t>(trees) * static_cast<std::size_t>(per_tree) * 8);

  std::vector<std::vector<Tree>> groups(static_cast<std::size_t>(dim));
  for (auto& group : groups) {
    group.reserve(static_cast<std::size_t>(trees));
    for (Eigen::Index t = 0; t < trees; ++t) {
      RowMatrix W(splits, input);
      for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = r.f64();
      Eigen::VectorXd thr(splits);
      for (Eigen::Index i = 0; i < splits; ++i) thr[i] = r.f64();
      Eigen::VectorXd leaves(splits + 1);
      for (Eigen::Index i = 0; i <= splits; ++i) leaves[i] = r.f64();
      Tree tree(static_cast<int>(depth), static_cast<int>(input), std::move(leaves));
      tree.weights() = std::move(W);
      tree.thresholds() = std::move(thr);
      group.push_back(std::move(tree));
    }
  }
  return Forest(std::move(groups), LeafStats(std::move(mean), std::move(stddev)), static_cast<ForestMode>(mode));
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const CascadeModel& model) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(model.crop_size()));
  w.u32(static_cast<std::uint32_t>(model.descriptor().window));
  w.u32(static_cast<std::uint32_t>(model.descriptor().cells));
  w.u8(model.descriptor().normalize ? 1 : 0);

  const Pdm& pdm = model.pdm();
  w.vec(pdm.mean_shape().stacked());
  w.count(pdm.modes());
  for (Eigen::Index c = 0; c < pdm.basis().cols(); ++c) w.vec(pdm.basis().col(c));
  w.vec(pdm.eigenvalues());
  w.vec(model.p0().values());

  w.count(static_cast<Eigen::Index>(model.stages().size()));
  for (const auto& stage : model.stages()) {
    w.u8(static_cast<std::uint8_t>(stage.kind));
    write_projection(w, stage.projection);
    write_forest(w, stage.forest);
  }
  return w.take();
}

CascadeModel deserialize_model(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.need(sizeof kMagic);
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) Reader::bad("missing GNFMODEL magic");
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion) {
    Reader::bad("unsupported format version " + std::to_string(version) + " (expected " +
                std::to_string(kModelFormatVersion) + ")");
  }
  const int crop = static_cast<int>(r.u32());
  DescriptorConfig desc;
  desc.window = static_cast<int>(r.u32());
  desc.cells = static_cast<int>(r.u32());
  desc.normalize = r.u8() != 0;

  try {
    Shape mean = Shape::from_stacked(r.vec());
    const Eigen::Index modes = r.count();
    Eigen::MatrixXd basis(mean.stacked().size(), modes);
    for (Eigen::Index c = 0; c < modes; ++c) {
      Eigen::VectorXd col = r.vec();
      if (col.size() != basis.rows()) Reader::bad("PDM basis column has the wrong length");
      basis.col(c) = col;
    }
    Eigen::VectorXd eig = r.vec();
    Pdm pdm(std::move(mean), std::move(basis), std::move(eig));
    ParamVector p0(r.vec());

    CascadeModel model(std::move(pdm), std::move(p0), crop, desc);
    const Eigen::Index stages = r.count();
    for (Eigen::Index s = 0; s < stages; ++s) {
      CascadeStage stage;
      const std::uint8_t kind = r.u8();
      if (kind > 1) Reader::bad("unknown stage kind");
      stage.kind = static_cast<StageKind>(kind);
      stage.projection = read_projection(r);
      stage.forest = read_forest(r);
      model.add_stage(std::move(stage));
    }
    if (!r.done()) Reader::bad("trailing bytes after the last stage");
    return model;
  } catch (const std::invalid_argument& e) {
    Reader::bad(e.what());
  }
}

void save_model(const CascadeModel& model, const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataErrc::kIo, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(DataErrc::kIo, "failed writing '" + path + "'");
}

CascadeModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrc::kIo, "cannot open model '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace gnf
