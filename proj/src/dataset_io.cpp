#include "gnf/dataset_io.hpp"

#include "gnf/error.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace gnf {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& token, double& out) {
  const char* first = token.data();
  const char* last = first + token.size();
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && std::isfinite(out);
}

/// Next line that is not blank.
bool next_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    line = trim(line);
    if (!line.empty()) return true;
  }
  return false;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw DataError(DataErrc::kIo, "cannot open '" + path + "'");
  return in;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw DataError(DataErrc::kIo, "cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

// ------------------------------------------------------------------ pts

Shape parse_pts(std::istream& in, const std::string& origin) {
  auto header_error = [&](const std::string& what) {
    return DataError(DataErrc::kMalformedHeader, origin + ": " + what);
  };
  std::string line;
  if (!next_line(in, line) || line.rfind("version:", 0) != 0) throw header_error("expected 'version: 1'");
  if (trim(line.substr(8)) != "1") throw header_error("unsupported pts version '" + trim(line.substr(8)) + "'");
  if (!next_line(in, line) || line.rfind("n_points:", 0) != 0) throw header_error("expected 'n_points: N'");
  long n = 0;
  {
    const std::string count = trim(line.substr(9));
    const auto res = std::from_chars(count.data(), count.data() + count.size(), n);
    if (res.ec != std::errc() || res.ptr != count.data() + count.size() || n < 3) {
      throw header_error("invalid point count '" + count + "'");
    }
  }
  if (!next_line(in, line) || line != "{") throw header_error("expected '{'");

  std::vector<Point2> points;
  bool closed = false;
  while (next_line(in, line)) {
    if (line == "}") {
      closed = true;
      break;
    }
    std::istringstream fields(line);
    std::string xs, ys, extra;
    fields >> xs >> ys;
    Point2 p;
    if (ys.empty() || (fields >> extra) || !parse_double(xs, p.x) || !parse_double(ys, p.y)) {
      throw DataError(DataErrc::kNonNumeric, origin + ": line '" + line + "' is not an 'x y' coordinate pair");
    }
    points.push_back(p);
  }
  if (static_cast<long>(points.size()) != n) {
    throw DataError(DataErrc::kCountMismatch, origin + ": header declares " + std::to_string(n) + " points but " +
                                                  std::to_string(points.size()) + " were found");
  }
  if (!closed) throw header_error("missing closing '}'");
  return Shape(points);
}

Shape load_pts(const std::string& path) {
  std::ifstream in = open_in(path);
  return parse_pts(in, path);
}

void write_pts(std::ostream& out, const Shape& shape) {
  out << "version: 1\nn_points: " << shape.size() << "\n{\n" << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < shape.size(); ++i) out << shape.x(i) << ' ' << shape.y(i) << '\n';
  out << "}\n";
}

void save_pts(const Shape& shape, const std::string& path) {
  std::ofstream out = open_out(path);
  write_pts(out, shape);
  if (!out) throw DataError(DataErrc::kIo, "failed writing '" + path + "'");
}

// ------------------------------------------------------------------ P5

namespace {

/// Reads one header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in) {
  std::string token;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c) && c != '#') {
    token.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (c == '#') in.unget();
  return token;
}

int header_int(std::istream& in, const std::string& origin, const char* what) {
  const std::string token = header_token(in);
  int v = 0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (token.empty() || res.ec != std::errc() || res.ptr != token.data() + token.size() || v < 1) {
    throw DataError(DataErrc::kMalformedHeader, origin + ": invalid graymap " + std::string(what));
  }
  return v;
}

}  // namespace

GrayImage parse_gray(std::istream& in, const std::string& origin) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '5') {
    throw DataError(DataErrc::kUnsupportedFormat,
                    origin + ": unsupported image format, expected binary PGM (P5, maxval 255)");
  }
  const int width = header_int(in, origin, "width");
  const int height = header_int(in, origin, "height");
  const int maxval = header_int(in, origin, "maxval");
  if (maxval != 255) {
    throw DataError(DataErrc::kUnsupportedFormat,
                    origin + ": maxval " + std::to_string(maxval) + " unsupported, expected P5 with maxval 255");
  }
  // header_token consumed exactly the single whitespace byte after maxval
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != pixels.size()) {
    throw DataError(DataErrc::kIo, origin + ": truncated pixel data (" + std::to_string(in.gcount()) + " of " +
                                       std::to_string(pixels.size()) + " bytes)");
  }
  return GrayImage(width, height, std::move(pixels));
}

GrayImage load_gray(const std::string& path) {
  std::ifstream in = open_in(path, std::ios::binary);
  return parse_gray(in, path);
}

void save_gray(const GrayImage& image, const std::string& path) {
  std::ofstream out = open_out(path, std::ios::binary);
  out << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels().data()), static_cast<std::streamsize>(image.pixels().size()));
  if (!out) throw DataError(DataErrc::kIo, "failed writing '" + path + "'");
}

// ------------------------------------------------------------------ manifest

std::vector<AnnotatedExample> load_manifest(const std::string& path) {
  std::ifstream in = open_in(path);
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path fp(p);
    return (fp.is_absolute() ? fp : base / fp).lexically_normal().string();
  };

  std::vector<AnnotatedExample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(t);
    while (std::getline(ls, field, '\t')) fields.push_back(trim(field));
    const std::string where = path + ":" + std::to_string(line_no);
    if (fields.size() != 6) {
      throw DataError(DataErrc::kMalformedHeader, where + ": expected 6 tab-separated fields, got " +
                                                      std::to_string(fields.size()));
    }
    AnnotatedExample ex;
    ex.image_path = resolve(fields[0]);
    ex.pts_path = resolve(fields[1]);
    double* box[4] = {&ex.bbox.x, &ex.bbox.y, &ex.bbox.w, &ex.bbox.h};
    for (int i = 0; i < 4; ++i) {
      if (!parse_double(fields[static_cast<std::size_t>(2 + i)], *box[i])) {
        throw DataError(DataErrc::kNonNumeric, where + ": bounding box field '" + fields[static_cast<std::size_t>(2 + i)] +
                                                   "' is not a number");
      }
    }
    if (!(ex.bbox.w > 0.0) || !(ex.bbox.h > 0.0)) {
      throw DataError(DataErrc::kMalformedHeader, where + ": bounding box must have positive area");
    }
    ex.shape = load_pts(ex.pts_path);
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw DataError(DataErrc::kCountMismatch, path + ": manifest lists no examples");
  return out;
}

void save_manifest(const std::vector<AnnotatedExample>& examples, const std::string& path) {
  const fs::path base = fs::absolute(fs::path(path)).parent_path();
  auto relative = [&](const std::string& p) {
    const fs::path abs = fs::absolute(fs::path(p)).lexically_normal();
    const fs::path rel = abs.lexically_relative(base);
    if (!rel.empty() && *rel.begin() != "..") return rel.string();
    return abs.string();
  };
  std::ofstream out = open_out(path);
  out << std::setprecision(17);
  for (const auto& ex : examples) {
    out << relative(ex.image_path) << '\t' << relative(ex.pts_path) << '\t' << ex.bbox.x << '\t' << ex.bbox.y
        << '\t' << ex.bbox.w << '\t' << ex.bbox.h << '\n';
  }
  if (!out) throw DataError(DataErrc::kIo, "failed writing '" + path + "'");
}

std::vector<TrainingSample> load_samples(const std::vector<AnnotatedExample>& examples) {
  std::vector<TrainingSample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back({load_gray(ex.image_path), ex.shape, ex.bbox});
  return out;
}

}  // namespace gnf
