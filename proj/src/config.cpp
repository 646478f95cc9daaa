#include "gnf/config.hpp"

#include "gnf/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gnf {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"stages", "stage sequence, one letter per stage: P parametric, E explicit (default PPPE)"},
      {"depth", "tree depth D (default 8)"},
      {"trees_parametric", "trees per parameter in parametric stages (default 25)"},
      {"trees_explicit", "trees per landmark coordinate in explicit stages (default 5)"},
      {"projection_dim", "projection output size k (default 500)"},
      {"learning_rate", "forest base learning rate, divided by the residual std per output (default 0.005)"},
      {"projection_learning_rate", "projection layer learning rate (default 0.005)"},
      {"updates", "SGD updates per stage (default 200000)"},
      {"eta", "L1 strength of the truncated-gradient update (default 0.01)"},
      {"theta", "truncation threshold; smaller weights become zero (default 0.05)"},
      {"init_range", "split weights and thresholds start in U[-r, r] (default 0.01)"},
      {"projection_init_range", "projection weights start in U[-r, r] (default 1.0)"},
      {"pdm_modes", "number of PDM deformation modes m (default 15)"},
      {"gauss_newton_iterations", "iterations when fitting ground-truth parameters (default 100)"},
      {"crop_size", "side of the square face crop in pixels (default 200)"},
      {"window", "descriptor window side in crop pixels (default 40)"},
      {"cells", "descriptor cells per window side (default 4)"},
      {"perturb_fraction", "perturbation width as a fraction of the residual range (default 0.5)"},
      {"seed", "random seed (default 1)"},
  };
  return keys;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw std::invalid_argument("config: invalid value '" + value + "' for " + key);
  }
  return out;
}

int positive_int(const std::string& key, const std::string& value) {
  const int v = parse_number<int>(key, value);
  if (v < 1) throw std::invalid_argument("config: " + key + " must be positive");
  return v;
}

double non_negative(const std::string& key, const std::string& value) {
  const double v = parse_number<double>(key, value);
  if (!(v >= 0.0)) throw std::invalid_argument("config: " + key + " must be non-negative");
  return v;
}

}  // namespace

void set_config_value(CascadeConfig& c, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  if (key == "stages") {
    CascadeConfig probe = c;
    probe.stages = value;
    probe.stage_kinds();
    c.stages = value;
  } else if (key == "depth") {
    c.depth = positive_int(key, value);
  } else if (key == "trees_parametric") {
    c.trees_parametric = positive_int(key, value);
  } else if (key == "trees_explicit") {
    c.trees_explicit = positive_int(key, value);
  } else if (key == "projection_dim") {
    c.projection_dim = positive_int(key, value);
  } else if (key == "learning_rate") {
    c.learning_rate = non_negative(key, value);
  } else if (key == "projection_learning_rate") {
    c.projection_learning_rate = non_negative(key, value);
  } else if (key == "updates") {
    c.updates = parse_number<int>(key, value);
    if (c.updates < 0) throw std::invalid_argument("config: updates must be non-negative");
  } else if (key == "eta") {
    c.eta = non_negative(key, value);
  } else if (key == "theta") {
    c.theta = non_negative(key, value);
  } else if (key == "init_range") {
    c.init_range = non_negative(key, value);
  } else if (key == "projection_init_range") {
    c.projection_init_range = non_negative(key, value);
  } else if (key == "pdm_modes") {
    c.pdm_modes = positive_int(key, value);
  } else if (key == "gauss_newton_iterations") {
    c.gauss_newton_iterations = positive_int(key, value);
  } else if (key == "crop_size") {
    c.crop_size = positive_int(key, value);
  } else if (key == "window") {
    c.window = positive_int(key, value);
  } else if (key == "cells") {
    c.cells = positive_int(key, value);
  } else if (key == "perturb_fraction") {
    c.perturb_fraction = non_negative(key, value);
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

void apply_assignment(CascadeConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("config: expected key=value, got '" + assignment + "'");
  set_config_value(config, assignment.substr(0, eq), assignment.substr(eq + 1));
}

CascadeConfig load_config(const std::string& path, CascadeConfig base) {
  std::ifstream in(path);
  if (!in) throw DataError(DataErrc::kIo, "cannot open config '" + path + "'");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    try {
      apply_assignment(base, line);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

std::string format_config(const CascadeConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "stages=" << c.stages << '\n'
      << "depth=" << c.depth << '\n'
      << "trees_parametric=" << c.trees_parametric << '\n'
      << "trees_explicit=" << c.trees_explicit << '\n'
      << "projection_dim=" << c.projection_dim << '\n'
      << "learning_rate=" << c.learning_rate << '\n'
      << "projection_learning_rate=" << c.projection_learning_rate << '\n'
      << "updates=" << c.updates << '\n'
      << "eta=" << c.eta << '\n'
      << "theta=" << c.theta << '\n'
      << "init_range=" << c.init_range << '\n'
      << "projection_init_range=" << c.projection_init_range << '\n'
      << "pdm_modes=" << c.pdm_modes << '\n'
      << "gauss_newton_iterations=" << c.gauss_newton_iterations << '\n'
      << "crop_size=" << c.crop_size << '\n'
      << "window=" << c.window << '\n'
      << "cells=" << c.cells << '\n'
      << "perturb_fraction=" << c.perturb_fraction << '\n'
      << "seed=" << c.seed << '\n';
  return out.str();
}

}  // namespace gnf
