#pragma once
// Hubness diagnostics over a set of prototypes: pairwise-distance histograms
// and the skewness of the k-occurrence distribution of the k-NN graph.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hyperdet/errors.hpp"
#include "hyperdet/heads.hpp"
#include "hyperdet/lorentz.hpp"

namespace hyperdet {

enum class DistanceKind { hyperbolic, cosine };

inline std::string to_string(DistanceKind k) { return k == DistanceKind::hyperbolic ? "hyperbolic" : "cosine"; }

/// Dense symmetric N x N matrix, row-major.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }

  template <class F>
  DistanceMatrix transformed(F f) const {
    DistanceMatrix out = *this;
    for (double& x : out.data_) x = f(x);
    return out;
  }

 private:
  std::size_t n_ = 0;
  Vector data_;
};

inline DistanceMatrix pairwise_distances(const std::vector<HyperboloidPoint>& points) {
  if (points.size() < 2) throw ParameterError("pairwise_distances: need at least 2 points");
  DistanceMatrix m(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) m(i, j) = m(j, i) = hyperbolic_distance(points[i], points[j]);
  return m;
}

/// 1 - cosine similarity. Zero vectors have similarity 0 to everything.
inline DistanceMatrix pairwise_cosine_distances(const std::vector<Vector>& points) {
  if (points.size() < 2) throw ParameterError("pairwise_distances: need at least 2 points");
  DistanceMatrix m(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      if (points[i].size() != points[j].size()) throw DimensionError("pairwise_distances: ragged points");
      double dot = 0.0;
      for (std::size_t k = 0; k < points[i].size(); ++k) dot += points[i][k] * points[j][k];
      const double den = detail::euclidean_norm(points[i]) * detail::euclidean_norm(points[j]);
      const double cosv = den > 0 ? std::clamp(dot / den, -1.0, 1.0) : 0.0;
      m(i, j) = m(j, i) = 1.0 - cosv;
    }
  }
  return m;
}

/// Distance matrix of a bank's prototypes in its native geometry: hyperbolic
/// distance for hyperbolic banks, cosine distance for the Euclidean ones.
inline DistanceMatrix pairwise_distances(const PrototypeBank& bank) {
  return bank.is_hyperbolic() ? pairwise_distances(bank.points()) : pairwise_cosine_distances(bank.rows());
}

inline DistanceKind native_kind(const PrototypeBank& bank) {
  return bank.is_hyperbolic() ? DistanceKind::hyperbolic : DistanceKind::cosine;
}

/// Fisher-Pearson moment coefficient m3 / m2^(3/2); 0 when the variance is 0.
inline double skewness(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0;
  for (double x : xs) {
    const double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  if (m2 <= 1e-300) return 0.0;
  return m3 / std::pow(m2, 1.5);
}

struct KOccurrence {
  std::size_t k = 0;
  std::vector<std::size_t> counts;
  double skewness = 0.0;
};

/// k nearest neighbours of point i, excluding i. Among equal distances the
/// nearest preceding index wins: candidates are ordered by (i - j) mod N.
inline std::vector<std::size_t> nearest_neighbours(const DistanceMatrix& d, std::size_t i, std::size_t k) {
  const std::size_t n = d.size();
  std::vector<std::size_t> cand;
  cand.reserve(n - 1);
  for (std::size_t off = 1; off < n; ++off) cand.push_back((i + n - off) % n);
  // cand is already in tie-break order, so a stable partial ordering by
  // distance keeps it for ties.
  std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) { return d(i, a) < d(i, b); });
  cand.resize(k);
  return cand;
}

inline KOccurrence k_occurrence(const DistanceMatrix& d, std::size_t k) {
  if (k < 1 || k >= d.size()) throw ParameterError("k_occurrence: need 1 <= k < N");
  KOccurrence out;
  out.k = k;
  out.counts.assign(d.size(), 0);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j : nearest_neighbours(d, i, k)) ++out.counts[j];
  out.skewness = skewness(std::vector<double>(out.counts.begin(), out.counts.end()));
  return out;
}

struct DistanceHistogram {
  DistanceKind kind = DistanceKind::hyperbolic;
  Vector edges;  // bins + 1 ascending edges
  std::vector<std::size_t> counts;

  std::size_t total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }
};

/// Histogram of the N(N-1)/2 upper-triangle distances over [0, max] in equal bins.
inline DistanceHistogram distance_histogram(const DistanceMatrix& d, DistanceKind kind, std::size_t bins = 20) {
  if (bins < 1) throw ParameterError("distance_histogram: need at least one bin");
  double hi = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = i + 1; j < d.size(); ++j) hi = std::max(hi, d(i, j));
  if (hi <= 0) hi = 1.0;
  DistanceHistogram h;
  h.kind = kind;
  h.counts.assign(bins, 0);
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(hi * static_cast<double>(b) / static_cast<double>(bins));
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = i + 1; j < d.size(); ++j) {
      auto b = static_cast<std::size_t>(d(i, j) / hi * static_cast<double>(bins));
      ++h.counts[std::min(b, bins - 1)];
    }
  }
  return h;
}

struct HubnessReport {
  std::string label;
  DistanceKind kind = DistanceKind::hyperbolic;
  DistanceHistogram histogram;
  KOccurrence occurrence;
  double mean_distance = 0.0;
};

inline HubnessReport hubness_report(const PrototypeBank& bank, std::size_t k = 5, std::size_t bins = 20,
                                    std::string label = {}) {
  const DistanceMatrix d = pairwise_distances(bank);
  HubnessReport r;
  r.label = std::move(label);
  r.kind = native_kind(bank);
  r.histogram = distance_histogram(d, r.kind, bins);
  r.occurrence = k_occurrence(d, k);
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = i + 1; j < d.size(); ++j) s += d(i, j);
  r.mean_distance = s / static_cast<double>(d.size() * (d.size() - 1) / 2);
  return r;
}

inline nlohmann::json report_to_json(const HubnessReport& r) {
  return {{"label", r.label},
          {"kind", to_string(r.kind)},
          {"k", r.occurrence.k},
          {"distance_definition", r.kind == DistanceKind::cosine ? "1 - cosine similarity" : "arccosh(-<x,y>_l)"},
          {"histogram", {{"edges", r.histogram.edges}, {"counts", r.histogram.counts}}},
          {"k_occurrence", r.occurrence.counts},
          {"skewness", r.occurrence.skewness},
          {"mean_distance", r.mean_distance}};
}

/// Plot-ready `bin_center,count` rows.
inline std::string histogram_csv(const DistanceHistogram& h) {
  std::ostringstream os;
  os.precision(17);
  os << "bin_center,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) os << 0.5 * (h.edges[b] + h.edges[b + 1]) << ',' << h.counts[b] << '\n';
  return os.str();
}

}  // namespace hyperdet
