#pragma once
// Prototype text files and small file helpers shared by the CLI.
//
// Text format: one class per line, `name v1 v2 ... vn`, whitespace separated.
// Blank lines and lines starting with '#' are skipped.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hyperdet/errors.hpp"
#include "hyperdet/heads.hpp"

namespace hyperdet {

struct EmbeddingTable {
  std::vector<std::string> names;
  std::vector<Vector> rows;
};

inline EmbeddingTable parse_embedding_text(const std::string& text) {
  EmbeddingTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string name;
    if (!(ls >> name) || name.front() == '#') continue;
    Vector row;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || !std::isfinite(v))
        throw ConfigError("line " + std::to_string(lineno) + ": bad number '" + tok + "'");
      row.push_back(v);
    }
    if (row.empty()) throw ConfigError("line " + std::to_string(lineno) + ": class '" + name + "' has no values");
    if (!t.rows.empty() && row.size() != t.rows.front().size())
      throw ConfigError("line " + std::to_string(lineno) + ": ragged row (" + std::to_string(row.size()) + " values, expected " +
                        std::to_string(t.rows.front().size()) + ")");
    if (std::find(t.names.begin(), t.names.end(), name) != t.names.end())
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate class '" + name + "'");
    t.names.push_back(std::move(name));
    t.rows.push_back(std::move(row));
  }
  if (t.names.size() < 2) throw ConfigError("embedding file: need at least 2 classes, got " + std::to_string(t.names.size()));
  return t;
}

/// Frozen bank from an embedding table. For the hyperbolic head, rows are
/// tangent coordinates at the origin mapped through exp0, or ambient
/// hyperboloid coordinates when `already_hyperbolic` is set.
inline PrototypeBank import_prototypes(const EmbeddingTable& t, HeadMode mode, bool already_hyperbolic = false,
                                       double delta = kDefaultDelta, double temperature = kDefaultTemperature) {
  try {
    if (mode != HeadMode::hyperbolic) {
      if (already_hyperbolic) throw ConfigError("--already-hyperbolic requires the hyperbolic head");
      return PrototypeBank::euclidean(mode, t.names, t.rows, true, delta, temperature);
    }
    std::vector<HyperboloidPoint> pts;
    for (const Vector& r : t.rows) pts.push_back(already_hyperbolic ? HyperboloidPoint::from_coords(r) : exp_map_origin(r));
    return PrototypeBank::hyperbolic(t.names, std::move(pts), true, delta);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("prototype import: ") + e.what());
  }
}

/// Text export. Hyperbolic banks are written as ambient coordinates, so a
/// re-import with `already_hyperbolic` reproduces the bank exactly.
inline std::string export_prototypes(const PrototypeBank& bank) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t c = 0; c < bank.num_classes(); ++c) {
    os << bank.class_names()[c];
    if (bank.is_hyperbolic()) {
      for (double x : bank.point(c).coords()) os << ' ' << x;
    } else {
      for (double x : bank.row(c)) os << ' ' << x;
    }
    os << '\n';
  }
  return os.str();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << content;
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

inline nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

/// Pretty-printed JSON with a trailing newline. Doubles are written with
/// round-trip precision, so dumps are bit-exact.
inline void write_json(const std::string& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

}  // namespace hyperdet
