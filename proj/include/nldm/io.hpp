#pragma once

// Plain-text artifacts: trajectory CSV (`t,x1..xS`), basin raster CSV
// (`x,y,label`) and the versioned model file. Every float is written with 17
// significant digits so values survive a round trip bit-exactly.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nldm/basin.hpp"
#include "nldm/core.hpp"
#include "nldm/features.hpp"

namespace nldm::io {

inline constexpr int kModelFormatVersion = 1;

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& token, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::out_of_range&) {
    // subnormals and overflow still carry a meaningful value
    return std::strtod(token.c_str(), nullptr);
  } catch (const std::exception&) {
    throw ValidationError(where + ": cannot parse number '" + token + "'");
  }
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return out;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return in;
}

// ---------------------------------------------------------------------------
// Trajectories

inline void write_trajectory(std::ostream& out, const Trajectory& traj) {
  out << 't';
  for (Eigen::Index s = 0; s < traj.dim(); ++s) out << ",x" << (s + 1);
  out << '\n';
  for (Eigen::Index k = 0; k < traj.size(); ++k) {
    out << fmt17(traj.time(k));
    for (Eigen::Index s = 0; s < traj.dim(); ++s) out << ',' << fmt17(traj.states()(s, k));
    out << '\n';
  }
}

inline void write_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
  auto out = open_out(path);
  write_trajectory(out, traj);
}

inline Trajectory read_trajectory(std::istream& in, const std::string& name = "trajectory") {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(name + ": empty file");
  const auto header = split(line, ',');
  if (header.size() < 2 || header[0] != "t") {
    throw ValidationError(name + ": header must be 't,x1,...,xS'");
  }
  for (std::size_t s = 1; s < header.size(); ++s) {
    if (header[s] != "x" + std::to_string(s)) {
      throw ValidationError(name + ": unexpected column '" + header[s] + "'");
    }
  }
  const auto dim = static_cast<Eigen::Index>(header.size() - 1);
  std::vector<double> times;
  std::vector<double> values;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line, ',');
    if (static_cast<Eigen::Index>(cells.size()) != dim + 1) {
      throw ValidationError(name + ": row " + std::to_string(row) + " has " +
                            std::to_string(cells.size()) + " columns");
    }
    const std::string where = name + " row " + std::to_string(row);
    times.push_back(parse_double(cells[0], where));
    for (Eigen::Index s = 0; s < dim; ++s) values.push_back(parse_double(cells[s + 1], where));
  }
  const auto k = static_cast<Eigen::Index>(times.size());
  if (k < 2) throw TooShortError(name + ": needs at least 2 rows");
  const double dt = (times.back() - times.front()) / static_cast<double>(k - 1);
  for (Eigen::Index i = 1; i < k; ++i) {
    const double step = times[i] - times[i - 1];
    if (std::abs(step - dt) > 1e-6 * std::abs(dt)) {
      throw ValidationError(name + ": time column is not uniformly spaced");
    }
  }
  Matrix states = Eigen::Map<const Matrix>(values.data(), dim, k);
  return Trajectory(std::move(states), dt, times.front());
}

inline Trajectory read_trajectory(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_trajectory(in, path.string());
}

// ---------------------------------------------------------------------------
// Model file

inline void write_model(std::ostream& out, const LearnedOperator& op) {
  const auto& c = op.config();
  out << "nldm-model " << kModelFormatVersion << '\n'
      << "S " << c.state_dim() << '\n'
      << "d " << c.delay() << '\n'
      << "o " << c.degree() << '\n'
      << "L " << c.feature_dim() << '\n'
      << "dt " << fmt17(op.dt()) << '\n'
      << "ordering " << kGradedLexTag << '\n'
      << "lambda\n";
  for (Eigen::Index r = 0; r < op.lambda().rows(); ++r) {
    for (Eigen::Index j = 0; j < op.lambda().cols(); ++j) {
      if (j) out << ' ';
      out << fmt17(op.lambda()(r, j));
    }
    out << '\n';
  }
}

inline void write_model(const std::filesystem::path& path, const LearnedOperator& op) {
  auto out = open_out(path);
  write_model(out, op);
}

inline LearnedOperator read_model(std::istream& in, const std::string& name = "model") {
  auto expect = [&](const std::string& key) {
    std::string k, v;
    if (!(in >> k >> v) || k != key) {
      throw ValidationError(name + ": expected header field '" + key + "'");
    }
    return v;
  };
  const std::string version = expect("nldm-model");
  if (version != std::to_string(kModelFormatVersion)) {
    throw ValidationError(name + ": unsupported model format version " + version);
  }
  auto as_int = [&](const std::string& key) {
    const std::string v = expect(key);
    try {
      return std::stoi(v);
    } catch (const std::exception&) {
      throw ValidationError(name + ": field '" + key + "' is not an integer");
    }
  };
  const int s = as_int("S");
  const int d = as_int("d");
  const int o = as_int("o");
  const int l = as_int("L");
  const double dt = parse_double(expect("dt"), name);
  const std::string ordering = expect("ordering");
  if (ordering != kGradedLexTag) {
    throw ValidationError(name + ": unknown monomial ordering '" + ordering + "'");
  }
  const FeatureConfig config(s, d, o);
  if (config.feature_dim() != l) {
    throw ValidationError(name + ": L=" + std::to_string(l) + " inconsistent with S, d, o");
  }
  std::string marker;
  if (!(in >> marker) || marker != "lambda") throw ValidationError(name + ": missing 'lambda'");
  Matrix lambda(s, l);
  for (int r = 0; r < s; ++r) {
    for (int j = 0; j < l; ++j) {
      std::string tok;
      if (!(in >> tok)) throw ValidationError(name + ": lambda has too few entries");
      lambda(r, j) = parse_double(tok, name);
    }
  }
  std::string extra;
  if (in >> extra) throw ValidationError(name + ": trailing data after lambda");
  return LearnedOperator(std::move(lambda), config, dt);
}

inline LearnedOperator read_model(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_model(in, path.string());
}

// ---------------------------------------------------------------------------
// Basin rasters

/// One row per cell: grid coordinates and the label (attractor index,
/// -1 unresolved, -2 diverged).
inline void write_basin(std::ostream& out, const BasinGrid& grid) {
  out << "x,y,label\n";
  const int res = grid.spec.resolution;
  for (int j = 0; j < res; ++j) {
    for (int i = 0; i < res; ++i) {
      out << fmt17(grid.spec.x(i)) << ',' << fmt17(grid.spec.y(j)) << ',' << grid.at(i, j) << '\n';
    }
  }
}

inline void write_basin(const std::filesystem::path& path, const BasinGrid& grid) {
  auto out = open_out(path);
  write_basin(out, grid);
}

}  // namespace nldm::io
