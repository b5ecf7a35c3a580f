#pragma once
// Synthetic hierarchical datasets standing in for detector proposal features.
//
// Two-level tree: supercategory means ~ N(0, sigma_super^2 I), leaf means =
// parent mean + N(0, sigma_leaf^2 I), samples = leaf mean + N(0, sigma_x^2 I).
// Background samples come from a broad isotropic Gaussian and carry label -1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hyperdet/errors.hpp"
#include "hyperdet/heads.hpp"

namespace hyperdet {

struct ClassTree {
  std::vector<std::string> supercategories;
  std::vector<std::string> leaf_names;
  std::vector<int> parent;  // per leaf, index into supercategories

  std::size_t num_super() const { return supercategories.size(); }
  std::size_t num_classes() const { return leaf_names.size(); }
  int parent_of(int c) const { return parent.at(static_cast<std::size_t>(c)); }

  /// Leaves are assigned to supercategories in contiguous blocks.
  static ClassTree balanced(std::size_t num_super, std::size_t num_classes) {
    if (num_super < 2) throw ParameterError("ClassTree: need at least 2 supercategories");
    if (num_classes < num_super) throw ParameterError("ClassTree: need C >= S");
    ClassTree t;
    for (std::size_t s = 0; s < num_super; ++s) t.supercategories.push_back("super_" + std::to_string(s));
    for (std::size_t c = 0; c < num_classes; ++c) {
      t.leaf_names.push_back("leaf_" + std::to_string(c));
      t.parent.push_back(static_cast<int>(c * num_super / num_classes));
    }
    return t;
  }

  void validate() const {
    if (num_super() < 2) throw ConfigError("ClassTree: need at least 2 supercategories");
    if (num_classes() < num_super()) throw ConfigError("ClassTree: need C >= S");
    if (parent.size() != leaf_names.size()) throw ConfigError("ClassTree: parent list length");
    for (int p : parent)
      if (p < 0 || static_cast<std::size_t>(p) >= num_super()) throw ConfigError("ClassTree: bad parent index");
  }

  int index_of(const std::string& name) const {
    auto it = std::find(leaf_names.begin(), leaf_names.end(), name);
    if (it == leaf_names.end()) throw ParameterError("unknown class '" + name + "'");
    return static_cast<int>(it - leaf_names.begin());
  }

  friend bool operator==(const ClassTree&, const ClassTree&) = default;
};

struct GenerationParams {
  std::size_t dim = 16;
  std::size_t num_super = 4;
  std::size_t num_classes = 16;
  std::size_t num_samples = 8000;
  double sigma_super = 4.0;
  double sigma_leaf = 1.0;
  double sigma_x = 0.5;
  double background_fraction = 0.2;
  double sigma_background = 6.0;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (dim < 1) throw ParameterError("generate: dim must be >= 1");
    if (num_super < 2) throw ParameterError("generate: need S >= 2");
    if (num_classes < num_super) throw ParameterError("generate: infeasible tree (C < S)");
    if (!(sigma_super >= 0 && sigma_leaf >= 0 && sigma_x >= 0 && sigma_background >= 0))
      throw ParameterError("generate: standard deviations must be >= 0");
    if (!(background_fraction >= 0 && background_fraction < 1))
      throw ParameterError("generate: background fraction must be in [0, 1)");
    if (!(val_fraction > 0 && val_fraction < 1)) throw ParameterError("generate: val fraction must be in (0, 1)");
  }

  friend bool operator==(const GenerationParams&, const GenerationParams&) = default;
};

enum class FrequencyBucket { frequent = 0, common = 1, rare = 2 };

inline std::string to_string(FrequencyBucket b) {
  switch (b) {
    case FrequencyBucket::frequent: return "frequent";
    case FrequencyBucket::common: return "common";
    case FrequencyBucket::rare: return "rare";
  }
  return "?";
}

struct SyntheticDataset {
  GenerationParams params;
  ClassTree tree;
  std::vector<Vector> features;
  std::vector<int> labels;  // class index or kBackground
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<Vector> leaf_means;
  std::vector<Vector> super_means;
  std::vector<FrequencyBucket> buckets;  // empty unless an imbalance profile was applied
  std::vector<int> unseen;               // held-out class indices, ascending
  double imbalance_exponent = 0.0;

  std::size_t size() const { return features.size(); }
  std::size_t dim() const { return params.dim; }
  std::size_t num_classes() const { return tree.num_classes(); }

  std::vector<std::size_t> class_counts(const std::vector<std::size_t>& split) const {
    std::vector<std::size_t> counts(num_classes(), 0);
    for (std::size_t i : split)
      if (labels[i] != kBackground) ++counts[static_cast<std::size_t>(labels[i])];
    return counts;
  }

  std::size_t background_count() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kBackground));
  }

  /// Throws ConfigError on any broken invariant. `min_train_per_class` is 10
  /// for freshly generated data; imbalance and holdout relax it.
  void validate(std::size_t min_train_per_class = 10) const {
    tree.validate();
    if (labels.size() != features.size()) throw ConfigError("dataset: labels/features length mismatch");
    for (const auto& f : features) {
      if (f.size() != dim()) throw ConfigError("dataset: feature of wrong dimension");
      if (!detail::all_finite(f)) throw ConfigError("dataset: non-finite feature");
    }
    for (int l : labels)
      if (l != kBackground && (l < 0 || static_cast<std::size_t>(l) >= num_classes()))
        throw ConfigError("dataset: label out of range");
    std::vector<int> seen(size(), 0);
    for (std::size_t i : train) {
      if (i >= size()) throw ConfigError("dataset: split index out of range");
      ++seen[i];
    }
    for (std::size_t i : val) {
      if (i >= size()) throw ConfigError("dataset: split index out of range");
      ++seen[i];
    }
    if (std::any_of(seen.begin(), seen.end(), [](int s) { return s != 1; }))
      throw ConfigError("dataset: train/val splits must be disjoint and covering");
    const auto counts = class_counts(train);
    for (std::size_t c = 0; c < counts.size(); ++c) {
      const bool held_out = std::find(unseen.begin(), unseen.end(), static_cast<int>(c)) != unseen.end();
      if (!held_out && counts[c] < min_train_per_class)
        throw ConfigError("dataset: class " + tree.leaf_names[c] + " has only " + std::to_string(counts[c]) +
                          " training samples");
    }
    if (!buckets.empty() && buckets.size() != num_classes()) throw ConfigError("dataset: bucket list length");
  }
};

namespace detail {

inline Vector gaussian_vector(std::size_t n, double sigma, Rng& rng, const Vector* mean = nullptr) {
  std::normal_distribution<double> z(0.0, 1.0);
  Vector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = (mean ? (*mean)[i] : 0.0) + sigma * z(rng);
  return v;
}

}  // namespace detail

/// Deterministic in (params, tree); the split is stratified per label.
inline SyntheticDataset generate(const GenerationParams& params, const ClassTree& tree) {
  params.validate();
  tree.validate();
  if (tree.num_classes() != params.num_classes || tree.num_super() != params.num_super)
    throw ParameterError("generate: tree does not match params");
  Rng rng(params.seed);
  SyntheticDataset ds;
  ds.params = params;
  ds.tree = tree;
  const std::size_t n = params.dim;
  for (std::size_t s = 0; s < params.num_super; ++s) ds.super_means.push_back(detail::gaussian_vector(n, params.sigma_super, rng));
  for (std::size_t c = 0; c < params.num_classes; ++c)
    ds.leaf_means.push_back(
        detail::gaussian_vector(n, params.sigma_leaf, rng, &ds.super_means[static_cast<std::size_t>(tree.parent[c])]));

  const auto n_bg = static_cast<std::size_t>(std::llround(params.background_fraction * static_cast<double>(params.num_samples)));
  const std::size_t n_fg = params.num_samples - n_bg;
  const std::size_t C = params.num_classes;
  for (std::size_t c = 0; c < C; ++c) {
    const std::size_t count = n_fg / C + (c < n_fg % C ? 1 : 0);
    for (std::size_t k = 0; k < count; ++k) {
      ds.features.push_back(detail::gaussian_vector(n, params.sigma_x, rng, &ds.leaf_means[c]));
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  for (std::size_t k = 0; k < n_bg; ++k) {
    ds.features.push_back(detail::gaussian_vector(n, params.sigma_background, rng));
    ds.labels.push_back(kBackground);
  }

  // Stratified split: each label group contributes round(val_fraction * size) to val.
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ds.labels.size(); ++i) groups[ds.labels[i]].push_back(i);
  for (auto& [label, idx] : groups) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(params.val_fraction * static_cast<double>(idx.size())));
    ds.val.insert(ds.val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    ds.train.insert(ds.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.val.begin(), ds.val.end());
  ds.validate();
  return ds;
}

inline SyntheticDataset generate(const GenerationParams& params) {
  return generate(params, ClassTree::balanced(params.num_super, params.num_classes));
}

namespace detail {

// Keeps samples where keep[i] is true and remaps split indices.
inline SyntheticDataset filter_samples(const SyntheticDataset& ds, const std::vector<bool>& keep) {
  SyntheticDataset out = ds;
  out.features.clear();
  out.labels.clear();
  out.train.clear();
  out.val.clear();
  std::vector<std::size_t> remap(ds.size(), SIZE_MAX);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!keep[i]) continue;
    remap[i] = out.features.size();
    out.features.push_back(ds.features[i]);
    out.labels.push_back(ds.labels[i]);
  }
  for (std::size_t i : ds.train)
    if (keep[i]) out.train.push_back(remap[i]);
  for (std::size_t i : ds.val)
    if (keep[i]) out.val.push_back(remap[i]);
  return out;
}

}  // namespace detail

/// Subsamples the training split so that the class at rank r (class index
/// order, r = 1..C) keeps floor(base * r^-exponent) samples, where base is the
/// smallest per-class training count. Validation data is left balanced.
/// Classes are bucketed into frequency terciles.
inline SyntheticDataset imbalance_profile(const SyntheticDataset& ds, double exponent) {
  if (!(exponent > 0)) throw ParameterError("imbalance_profile: exponent must be > 0");
  const std::size_t C = ds.num_classes();
  std::vector<std::vector<std::size_t>> per_class(C);
  for (std::size_t i : ds.train)
    if (ds.labels[i] != kBackground) per_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  std::size_t base = SIZE_MAX;
  for (const auto& v : per_class) base = std::min(base, v.size());
  std::vector<std::size_t> target(C);
  for (std::size_t c = 0; c < C; ++c) {
    const double t = std::floor(static_cast<double>(base) * std::pow(static_cast<double>(c + 1), -exponent) + 1e-9);
    if (t < 1.0) throw ParameterError("imbalance_profile: class " + ds.tree.leaf_names[c] + " would have no samples");
    target[c] = static_cast<std::size_t>(t);
  }
  std::vector<bool> keep(ds.size(), true);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = target[c]; k < per_class[c].size(); ++k) keep[per_class[c][k]] = false;
  SyntheticDataset out = detail::filter_samples(ds, keep);
  out.imbalance_exponent = exponent;

  std::vector<std::size_t> order(C);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return target[a] > target[b]; });
  out.buckets.assign(C, FrequencyBucket::frequent);
  for (std::size_t rank = 0; rank < C; ++rank)
    out.buckets[order[rank]] = static_cast<FrequencyBucket>(std::min<std::size_t>(2, 3 * rank / C));
  out.validate(1);
  return out;
}

struct HoldoutSplit {
  SyntheticDataset train;  // unseen-class samples removed everywhere
  SyntheticDataset eval;   // original samples, unseen classes recorded
  std::vector<bool> unseen_mask;  // per class
};

inline HoldoutSplit holdout_unseen(const SyntheticDataset& ds, std::vector<int> unseen) {
  std::sort(unseen.begin(), unseen.end());
  unseen.erase(std::unique(unseen.begin(), unseen.end()), unseen.end());
  for (int c : unseen)
    if (c < 0 || static_cast<std::size_t>(c) >= ds.num_classes()) throw ParameterError("holdout_unseen: unknown class");
  if (unseen.size() >= ds.num_classes()) throw ParameterError("holdout_unseen: every class would be unseen");
  HoldoutSplit out;
  out.unseen_mask.assign(ds.num_classes(), false);
  for (int c : unseen) out.unseen_mask[static_cast<std::size_t>(c)] = true;
  out.eval = ds;
  out.eval.unseen = unseen;
  if (unseen.empty()) {
    out.train = ds;
    return out;
  }
  std::vector<bool> keep(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i)
    keep[i] = ds.labels[i] == kBackground || !out.unseen_mask[static_cast<std::size_t>(ds.labels[i])];
  out.train = detail::filter_samples(ds, keep);
  out.train.unseen = unseen;
  return out;
}

/// Text embedding file (`name v1 ... vn` per line) built from the generating
/// leaf means scaled by `scale`. Used as semantic prototypes for zero-shot runs.
inline std::string semantic_embedding_text(const SyntheticDataset& ds, double scale) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t c = 0; c < ds.num_classes(); ++c) {
    os << ds.tree.leaf_names[c];
    for (double x : ds.leaf_means[c]) os << ' ' << scale * x;
    os << '\n';
  }
  return os.str();
}

// --- JSON ------------------------------------------------------------------

inline nlohmann::json params_to_json(const GenerationParams& p) {
  return {{"dim", p.dim},
          {"num_super", p.num_super},
          {"num_classes", p.num_classes},
          {"num_samples", p.num_samples},
          {"sigma_super", p.sigma_super},
          {"sigma_leaf", p.sigma_leaf},
          {"sigma_x", p.sigma_x},
          {"background_fraction", p.background_fraction},
          {"sigma_background", p.sigma_background},
          {"val_fraction", p.val_fraction},
          {"seed", p.seed}};
}

/// Missing keys keep their defaults.
inline GenerationParams params_from_json(const nlohmann::json& j) {
  GenerationParams p;
  p.dim = j.value("dim", p.dim);
  p.num_super = j.value("num_super", p.num_super);
  p.num_classes = j.value("num_classes", p.num_classes);
  p.num_samples = j.value("num_samples", p.num_samples);
  p.sigma_super = j.value("sigma_super", p.sigma_super);
  p.sigma_leaf = j.value("sigma_leaf", p.sigma_leaf);
  p.sigma_x = j.value("sigma_x", p.sigma_x);
  p.background_fraction = j.value("background_fraction", p.background_fraction);
  p.sigma_background = j.value("sigma_background", p.sigma_background);
  p.val_fraction = j.value("val_fraction", p.val_fraction);
  p.seed = j.value("seed", p.seed);
  return p;
}

inline nlohmann::json dataset_to_json(const SyntheticDataset& ds) {
  nlohmann::json j;
  j["params"] = params_to_json(ds.params);
  j["tree"] = {{"supercategories", ds.tree.supercategories},
               {"leaf_classes", ds.tree.leaf_names},
               {"parent", ds.tree.parent}};
  j["features"] = ds.features;
  j["labels"] = ds.labels;
  j["splits"] = {{"train", ds.train}, {"val", ds.val}};
  j["leaf_means"] = ds.leaf_means;
  j["super_means"] = ds.super_means;
  j["unseen"] = ds.unseen;
  j["imbalance_exponent"] = ds.imbalance_exponent;
  auto b = nlohmann::json::array();
  for (auto x : ds.buckets) b.push_back(to_string(x));
  j["buckets"] = std::move(b);
  return j;
}

inline SyntheticDataset dataset_from_json(const nlohmann::json& j) {
  SyntheticDataset ds;
  try {
    ds.params = params_from_json(j.at("params"));
    ds.tree.supercategories = j.at("tree").at("supercategories").get<std::vector<std::string>>();
    ds.tree.leaf_names = j.at("tree").at("leaf_classes").get<std::vector<std::string>>();
    ds.tree.parent = j.at("tree").at("parent").get<std::vector<int>>();
    ds.features = j.at("features").get<std::vector<Vector>>();
    ds.labels = j.at("labels").get<std::vector<int>>();
    ds.train = j.at("splits").at("train").get<std::vector<std::size_t>>();
    ds.val = j.at("splits").at("val").get<std::vector<std::size_t>>();
    ds.leaf_means = j.value("leaf_means", std::vector<Vector>{});
    ds.super_means = j.value("super_means", std::vector<Vector>{});
    ds.unseen = j.value("unseen", std::vector<int>{});
    ds.imbalance_exponent = j.value("imbalance_exponent", 0.0);
    for (const auto& b : j.value("buckets", nlohmann::json::array())) {
      const auto s = b.get<std::string>();
      if (s == "frequent") ds.buckets.push_back(FrequencyBucket::frequent);
      else if (s == "common") ds.buckets.push_back(FrequencyBucket::common);
      else if (s == "rare") ds.buckets.push_back(FrequencyBucket::rare);
      else throw ConfigError("dataset: unknown bucket '" + s + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset JSON: ") + e.what());
  }
  ds.params.num_classes = ds.tree.num_classes();
  ds.params.num_super = ds.tree.num_super();
  if (!ds.features.empty()) ds.params.dim = ds.features.front().size();
  ds.validate(ds.buckets.empty() ? 10 : 1);
  return ds;
}

}  // namespace hyperdet
