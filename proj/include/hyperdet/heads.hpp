#pragma once
// Classification heads: distance-based hyperbolic logits and the matched
// Euclidean baselines, all trained through a sigmoid focal loss.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hyperdet/errors.hpp"
#include "hyperdet/lorentz.hpp"

namespace hyperdet {

using Rng = std::mt19937_64;

inline constexpr double kDefaultDelta = 1.4;
inline constexpr double kDefaultTemperature = 0.07;
inline constexpr int kBackground = -1;

enum class HeadMode { hyperbolic, euclidean_linear, euclidean_cosine };

inline std::string to_string(HeadMode m) {
  switch (m) {
    case HeadMode::hyperbolic: return "hyperbolic";
    case HeadMode::euclidean_linear: return "euclidean-linear";
    case HeadMode::euclidean_cosine: return "euclidean-cosine";
  }
  return "?";
}

inline HeadMode parse_head_mode(const std::string& s) {
  if (s == "hyperbolic") return HeadMode::hyperbolic;
  if (s == "euclidean-linear") return HeadMode::euclidean_linear;
  if (s == "euclidean-cosine") return HeadMode::euclidean_cosine;
  throw ConfigError("unknown head mode '" + s + "'");
}

inline double sigmoid(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

// log(1 + exp(s)) without overflow.
inline double softplus(double s) {
  return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
}

/// C class prototypes plus the head configuration.
///
/// Hyperbolic banks hold HyperboloidPoints; Euclidean banks hold weight rows
/// (columns of W for the linear head). A frozen bank is immutable and its
/// d_min is the minimum pairwise prototype distance; a learnable bank uses
/// d_min = 1.
class PrototypeBank {
 public:
  static PrototypeBank hyperbolic(std::vector<std::string> names, std::vector<HyperboloidPoint> points,
                                  bool frozen, double delta = kDefaultDelta) {
    PrototypeBank b;
    b.mode_ = HeadMode::hyperbolic;
    b.names_ = std::move(names);
    b.points_ = std::move(points);
    b.frozen_ = frozen;
    b.delta_ = delta;
    b.validate();
    return b;
  }

  static PrototypeBank euclidean(HeadMode mode, std::vector<std::string> names, std::vector<Vector> rows,
                                 bool frozen, double delta = kDefaultDelta,
                                 double temperature = kDefaultTemperature) {
    if (mode == HeadMode::hyperbolic) throw ContractError("PrototypeBank::euclidean: hyperbolic mode");
    PrototypeBank b;
    b.mode_ = mode;
    b.names_ = std::move(names);
    b.rows_ = std::move(rows);
    b.frozen_ = frozen;
    b.delta_ = delta;
    b.temperature_ = temperature;
    b.validate();
    return b;
  }

  /// Learnable hyperbolic prototypes: spatial tangent coordinates uniform in
  /// [-0.01, 0.01]^n, mapped through exp_map_origin.
  static PrototypeBank init_hyperbolic(std::vector<std::string> names, std::size_t n, Rng& rng,
                                       double delta = kDefaultDelta) {
    std::uniform_real_distribution<double> u(-0.01, 0.01);
    std::vector<HyperboloidPoint> pts;
    pts.reserve(names.size());
    for (std::size_t c = 0; c < names.size(); ++c) {
      Vector v(n);
      for (double& x : v) x = u(rng);
      pts.push_back(exp_map_origin(v));
    }
    return hyperbolic(std::move(names), std::move(pts), false, delta);
  }

  /// Learnable Euclidean rows, uniform in [-1/sqrt(n), 1/sqrt(n)].
  static PrototypeBank init_euclidean(HeadMode mode, std::vector<std::string> names, std::size_t n, Rng& rng,
                                      double delta = kDefaultDelta, double temperature = kDefaultTemperature) {
    const double a = 1.0 / std::sqrt(static_cast<double>(n));
    std::uniform_real_distribution<double> u(-a, a);
    std::vector<Vector> rows(names.size(), Vector(n));
    for (auto& r : rows)
      for (double& x : r) x = u(rng);
    return euclidean(mode, std::move(names), std::move(rows), false, delta, temperature);
  }

  HeadMode mode() const { return mode_; }
  bool is_hyperbolic() const { return mode_ == HeadMode::hyperbolic; }
  bool frozen() const { return frozen_; }
  double delta() const { return delta_; }
  double d_min() const { return d_min_; }
  double temperature() const { return temperature_; }
  std::size_t num_classes() const { return names_.size(); }
  const std::vector<std::string>& class_names() const { return names_; }

  /// Dimension of the feature consumed by the head (n; the ambient size is n+1
  /// for hyperbolic banks).
  std::size_t feature_dim() const { return is_hyperbolic() ? points_.front().dim() : rows_.front().size(); }

  const std::vector<HyperboloidPoint>& points() const { return points_; }
  const HyperboloidPoint& point(std::size_t c) const { return points_.at(c); }
  const std::vector<Vector>& rows() const { return rows_; }
  const Vector& row(std::size_t c) const { return rows_.at(c); }

  void set_point(std::size_t c, HyperboloidPoint p) {
    if (frozen_) throw ContractError("PrototypeBank: frozen bank is immutable");
    if (p.ambient_dim() != points_.at(c).ambient_dim()) throw DimensionError("PrototypeBank::set_point");
    points_[c] = std::move(p);
  }
  Vector& mutable_row(std::size_t c) {
    if (frozen_) throw ContractError("PrototypeBank: frozen bank is immutable");
    return rows_.at(c);
  }

  /// Minimum pairwise distance between prototypes (hyperbolic distance, or the
  /// Euclidean distance between rows for the baseline modes).
  double min_pairwise_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < num_classes(); ++i)
      for (std::size_t j = i + 1; j < num_classes(); ++j) best = std::min(best, prototype_distance(i, j));
    return best;
  }

  double prototype_distance(std::size_t i, std::size_t j) const {
    if (is_hyperbolic()) return hyperbolic_distance(points_[i], points_[j]);
    double s = 0.0;
    for (std::size_t k = 0; k < rows_[i].size(); ++k) s += (rows_[i][k] - rows_[j][k]) * (rows_[i][k] - rows_[j][k]);
    return std::sqrt(s);
  }

  friend bool operator==(const PrototypeBank&, const PrototypeBank&) = default;

 private:
  PrototypeBank() = default;

  void validate() {
    if (names_.size() < 2) throw ParameterError("PrototypeBank: need at least 2 classes");
    if (std::set<std::string>(names_.begin(), names_.end()).size() != names_.size())
      throw ConfigError("PrototypeBank: duplicate class names");
    if (!(delta_ > 0) || !std::isfinite(delta_)) throw ParameterError("PrototypeBank: delta must be > 0");
    if (!(temperature_ > 0)) throw ParameterError("PrototypeBank: temperature must be > 0");
    const std::size_t count = is_hyperbolic() ? points_.size() : rows_.size();
    if (count != names_.size()) throw DimensionError("PrototypeBank: prototype count != class count");
    if (is_hyperbolic()) {
      for (const auto& p : points_)
        if (p.ambient_dim() != points_.front().ambient_dim()) throw DimensionError("PrototypeBank: ragged prototypes");
    } else {
      for (const auto& r : rows_) {
        if (r.size() != rows_.front().size() || r.empty()) throw DimensionError("PrototypeBank: ragged prototypes");
        if (!detail::all_finite(r)) throw ContractError("PrototypeBank: non-finite prototype");
      }
    }
    if (frozen_) {
      d_min_ = min_pairwise_distance();
      if (!(d_min_ > 0)) throw ParameterError("PrototypeBank: frozen prototypes must be pairwise distinct");
    } else {
      d_min_ = 1.0;
    }
  }

  HeadMode mode_ = HeadMode::hyperbolic;
  std::vector<std::string> names_;
  std::vector<HyperboloidPoint> points_;
  std::vector<Vector> rows_;
  bool frozen_ = false;
  double delta_ = kDefaultDelta;
  double d_min_ = 1.0;
  double temperature_ = kDefaultTemperature;
};

struct LogitVector {
  Vector scores;
  std::size_t size() const { return scores.size(); }
  double operator[](std::size_t i) const { return scores[i]; }
};

struct FocalLossConfig {
  double gamma = 2.0;
  double alpha = 0.25;
  // Background targets are all-negative across classes. There is no
  // alternative path; the flag is recorded for provenance.
  bool background_as_all_negative = true;

  void validate() const {
    if (!(gamma >= 0)) throw ParameterError("focal loss: gamma must be >= 0");
    if (!(alpha > 0 && alpha <= 1)) throw ParameterError("focal loss: alpha must be in (0, 1]");
  }
};

inline Vector distances_to_prototypes(std::span<const double> feature, const PrototypeBank& bank) {
  if (!bank.is_hyperbolic()) throw ContractError("distances_to_prototypes: bank is not hyperbolic");
  if (feature.size() != bank.feature_dim()) throw DimensionError("distances_to_prototypes: feature dim");
  const HyperboloidPoint x = exp_map_origin(feature);
  Vector d(bank.num_classes());
  for (std::size_t c = 0; c < d.size(); ++c) d[c] = hyperbolic_distance(x, bank.point(c));
  return d;
}

/// s_c = delta - (delta / d_min) d_c, evaluated as delta (1 - d_c / d_min) so
/// that s(0) = delta and s(d_min) = 0 hold exactly in floating point.
inline LogitVector shift_logits(std::span<const double> distances, double delta, double d_min) {
  if (!(d_min > 0)) throw ParameterError("shift_logits: d_min must be > 0");
  LogitVector out{Vector(distances.size())};
  for (std::size_t c = 0; c < distances.size(); ++c) out.scores[c] = delta * (1.0 - distances[c] / d_min);
  return out;
}

/// Linear mode: W^T v. Cosine mode: cos(v, w_c) / temperature.
inline LogitVector baseline_logits(std::span<const double> feature, const PrototypeBank& bank) {
  if (bank.is_hyperbolic()) throw ContractError("baseline_logits: bank is hyperbolic");
  if (feature.size() != bank.feature_dim()) throw DimensionError("baseline_logits: feature dim");
  LogitVector out{Vector(bank.num_classes(), 0.0)};
  const double fn = detail::euclidean_norm(feature);
  for (std::size_t c = 0; c < bank.num_classes(); ++c) {
    const Vector& w = bank.row(c);
    double dot = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) dot += w[i] * feature[i];
    if (bank.mode() == HeadMode::euclidean_linear) {
      out.scores[c] = dot;
    } else {
      const double wn = detail::euclidean_norm(w);
      out.scores[c] = (fn > 0 && wn > 0) ? dot / (fn * wn) / bank.temperature() : 0.0;
    }
  }
  return out;
}

inline LogitVector head_logits(std::span<const double> feature, const PrototypeBank& bank) {
  if (bank.is_hyperbolic())
    return shift_logits(distances_to_prototypes(feature, bank), bank.delta(), bank.d_min());
  return baseline_logits(feature, bank);
}

struct FocalLossResult {
  double loss = 0.0;
  Vector grad;  // dL/ds per class
};

/// Sigmoid focal loss summed over classes, with its analytic gradient.
/// `target` is a class index or kBackground (all-negative).
inline FocalLossResult focal_loss(const LogitVector& logits, int target, const FocalLossConfig& cfg) {
  if (target != kBackground && (target < 0 || static_cast<std::size_t>(target) >= logits.size()))
    throw ParameterError("focal_loss: target out of range");
  FocalLossResult r{0.0, Vector(logits.size(), 0.0)};
  const double g = cfg.gamma;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    const double s = logits[c];
    const double p = sigmoid(s);
    if (static_cast<int>(c) == target) {
      // -alpha (1-p)^g log p
      const double q = 1.0 - p;
      const double log_p = -softplus(-s);
      const double w = std::pow(q, g);
      r.loss += -cfg.alpha * w * log_p;
      r.grad[c] = cfg.alpha * w * (g * p * log_p - q);
    } else {
      // -(1-alpha) p^g log(1-p)
      const double log_q = -softplus(s);
      const double w = std::pow(p, g);
      r.loss += -(1.0 - cfg.alpha) * w * log_q;
      r.grad[c] = (1.0 - cfg.alpha) * w * (p - g * (1.0 - p) * log_q);
    }
  }
  return r;
}

struct ScoredClass {
  int class_index = 0;
  double confidence = 0.0;
};

struct Classification {
  int predicted = 0;
  double confidence = 0.0;
  std::vector<ScoredClass> top_k;
};

/// Nearest prototype (hyperbolic) or largest logit (baseline); ties go to the
/// lower class index. Confidence is the sigmoid of the logit.
inline Classification classify(std::span<const double> feature, const PrototypeBank& bank, std::size_t k = 3) {
  if (k > bank.num_classes()) throw ParameterError("classify: k exceeds number of classes");
  Classification out;
  std::size_t best = 0;
  LogitVector logits;
  if (bank.is_hyperbolic()) {
    const Vector d = distances_to_prototypes(feature, bank);
    for (std::size_t c = 1; c < d.size(); ++c)
      if (d[c] < d[best]) best = c;
    logits = shift_logits(d, bank.delta(), bank.d_min());
  } else {
    logits = baseline_logits(feature, bank);
    for (std::size_t c = 1; c < logits.size(); ++c)
      if (logits[c] > logits[best]) best = c;
  }
  out.predicted = static_cast<int>(best);
  out.confidence = sigmoid(logits[best]);
  std::vector<ScoredClass> all(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) all[c] = {static_cast<int>(c), sigmoid(logits[c])};
  std::stable_sort(all.begin(), all.end(),
                   [](const ScoredClass& a, const ScoredClass& b) { return a.confidence > b.confidence; });
  all.resize(k);
  out.top_k = std::move(all);
  return out;
}

/// Loss and gradients of focal_loss(head_logits(feature)) for a single sample.
struct HeadGradient {
  double loss = 0.0;
  Vector feature;                 // dL/dfeature, length n
  std::vector<Vector> prototype;  // per class: ambient (n+1) for hyperbolic, n for baselines
};

inline HeadGradient head_loss_and_gradient(std::span<const double> feature, int target, const PrototypeBank& bank,
                                           const FocalLossConfig& cfg) {
  const std::size_t C = bank.num_classes();
  const std::size_t n = bank.feature_dim();
  if (feature.size() != n) throw DimensionError("head_loss_and_gradient: feature dim");
  HeadGradient out;
  out.feature.assign(n, 0.0);
  out.prototype.resize(C);

  if (bank.is_hyperbolic()) {
    const HyperboloidPoint x = exp_map_origin(feature);
    Vector d(C);
    for (std::size_t c = 0; c < C; ++c) d[c] = hyperbolic_distance(x, bank.point(c));
    const FocalLossResult fl = focal_loss(shift_logits(d, bank.delta(), bank.d_min()), target, cfg);
    out.loss = fl.loss;
    const double slope = -bank.delta() / bank.d_min();
    Vector grad_x(n + 1, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      const double gd = fl.grad[c] * slope;  // dL/dd_c
      const Vector gx = distance_gradient(x, bank.point(c), d[c]);
      const Vector gt = distance_gradient(bank.point(c), x, d[c]);
      for (std::size_t i = 0; i <= n; ++i) grad_x[i] += gd * gx[i];
      out.prototype[c].resize(n + 1);
      for (std::size_t i = 0; i <= n; ++i) out.prototype[c][i] = gd * gt[i];
    }
    out.feature = exp_map_origin_vjp(feature, grad_x);
    return out;
  }

  const LogitVector logits = baseline_logits(feature, bank);
  const FocalLossResult fl = focal_loss(logits, target, cfg);
  out.loss = fl.loss;
  if (bank.mode() == HeadMode::euclidean_linear) {
    for (std::size_t c = 0; c < C; ++c) {
      const Vector& w = bank.row(c);
      out.prototype[c].resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        out.feature[i] += fl.grad[c] * w[i];
        out.prototype[c][i] = fl.grad[c] * feature[i];
      }
    }
    return out;
  }
  // cosine: s = v.w / (|v||w| tau)
  const double vn = detail::euclidean_norm(feature);
  for (std::size_t c = 0; c < C; ++c) {
    const Vector& w = bank.row(c);
    out.prototype[c].assign(n, 0.0);
    const double wn = detail::euclidean_norm(w);
    if (vn == 0 || wn == 0) continue;
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += w[i] * feature[i];
    const double k = fl.grad[c] / bank.temperature();
    const double cosv = dot / (vn * wn);
    for (std::size_t i = 0; i < n; ++i) {
      out.feature[i] += k * (w[i] / (vn * wn) - cosv * feature[i] / (vn * vn));
      out.prototype[c][i] = k * (feature[i] / (vn * wn) - cosv * w[i] / (wn * wn));
    }
  }
  return out;
}

// --- JSON ------------------------------------------------------------------

inline nlohmann::json bank_to_json(const PrototypeBank& b) {
  nlohmann::json j;
  j["mode"] = to_string(b.mode());
  j["class_names"] = b.class_names();
  j["delta"] = b.delta();
  j["d_min"] = b.d_min();
  j["frozen"] = b.frozen();
  j["temperature"] = b.temperature();
  auto rows = nlohmann::json::array();
  if (b.is_hyperbolic()) {
    for (const auto& p : b.points()) rows.push_back(Vector(p.coords().begin(), p.coords().end()));
  } else {
    for (const auto& r : b.rows()) rows.push_back(r);
  }
  j["prototypes"] = std::move(rows);
  return j;
}

/// Re-validates the manifold constraint and recomputes d_min for frozen banks.
inline PrototypeBank bank_from_json(const nlohmann::json& j) {
  try {
    const HeadMode mode = parse_head_mode(j.at("mode").get<std::string>());
    auto names = j.at("class_names").get<std::vector<std::string>>();
    const double delta = j.at("delta").get<double>();
    const bool frozen = j.at("frozen").get<bool>();
    const double temperature = j.value("temperature", kDefaultTemperature);
    auto rows = j.at("prototypes").get<std::vector<Vector>>();
    if (mode == HeadMode::hyperbolic) {
      std::vector<HyperboloidPoint> pts;
      pts.reserve(rows.size());
      for (auto& r : rows) pts.push_back(HyperboloidPoint::from_coords(std::move(r)));
      return PrototypeBank::hyperbolic(std::move(names), std::move(pts), frozen, delta);
    }
    return PrototypeBank::euclidean(mode, std::move(names), std::move(rows), frozen, delta, temperature);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("prototype bank JSON: ") + e.what());
  }
}

}  // namespace hyperdet
