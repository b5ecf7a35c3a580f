#pragma once
// Experiment driver: encoder -> head -> focal loss -> optimizer, evaluation
// metrics, zero-shot runs against frozen prototypes, and checkpoints.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hyperdet/encoder.hpp"
#include "hyperdet/errors.hpp"
#include "hyperdet/heads.hpp"
#include "hyperdet/optim.hpp"
#include "hyperdet/synthetic.hpp"

namespace hyperdet {

enum class DMinPolicy { constant_one, min_inter_class };

inline std::string to_string(DMinPolicy p) {
  return p == DMinPolicy::constant_one ? "constant-1" : "min-inter-class";
}

inline DMinPolicy parse_d_min_policy(const std::string& s) {
  if (s == "constant-1") return DMinPolicy::constant_one;
  if (s == "min-inter-class") return DMinPolicy::min_inter_class;
  throw ConfigError("unknown d_min policy '" + s + "'");
}

struct ExperimentConfig {
  // Data: a dataset file, or generation parameters when the path is empty.
  std::string dataset_path;
  GenerationParams dataset;
  std::vector<std::string> unseen;  // class names held out of training
  double imbalance_exponent = 0.0;  // 0 disables the power-law profile

  HeadMode head = HeadMode::hyperbolic;
  double delta = kDefaultDelta;
  double temperature = kDefaultTemperature;
  DMinPolicy d_min_policy = DMinPolicy::constant_one;
  std::string prototype_path;  // frozen prototypes, required by min-inter-class

  FocalLossConfig focal;

  double learning_rate = 1e-2;   // Adam, Euclidean parameters
  double prototype_lr = 0.1;     // Riemannian SGD, hyperbolic prototypes
  double weight_decay = 1e-4;
  std::optional<double> grad_clip_norm = 5.0;

  bool encoder_enabled = true;
  std::size_t hidden = 64;
  std::size_t embedding_dim = 16;

  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::size_t eval_every = 10;

  void validate() const {
    focal.validate();
    if (!(delta > 0)) throw ConfigError("config: delta must be > 0");
    if (!(temperature > 0)) throw ConfigError("config: temperature must be > 0");
    if (!(learning_rate > 0) || !(prototype_lr > 0)) throw ConfigError("config: learning rates must be > 0");
    if (!(weight_decay >= 0)) throw ConfigError("config: weight_decay must be >= 0");
    if (grad_clip_norm && !(*grad_clip_norm > 0)) throw ConfigError("config: grad_clip_norm must be > 0");
    if (batch_size == 0) throw ConfigError("config: batch_size must be positive");
    if (eval_every == 0) throw ConfigError("config: eval_every must be positive");
    if (encoder_enabled && (hidden == 0 || embedding_dim == 0)) throw ConfigError("config: encoder sizes");
    if (imbalance_exponent < 0) throw ConfigError("config: imbalance exponent must be >= 0");
    if (d_min_policy == DMinPolicy::min_inter_class && prototype_path.empty())
      throw ConfigError("config: min-inter-class d_min requires a frozen prototype file");
    if (d_min_policy == DMinPolicy::constant_one && !prototype_path.empty())
      throw ConfigError("config: a fixed prototype file implies the min-inter-class d_min policy");
  }
};

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["dataset_path"] = c.dataset_path;
  j["dataset"] = params_to_json(c.dataset);
  j["unseen"] = c.unseen;
  j["imbalance_exponent"] = c.imbalance_exponent;
  j["head"] = to_string(c.head);
  j["delta"] = c.delta;
  j["temperature"] = c.temperature;
  j["d_min_policy"] = to_string(c.d_min_policy);
  j["prototype_path"] = c.prototype_path;
  j["focal"] = {{"gamma", c.focal.gamma},
                {"alpha", c.focal.alpha},
                {"background_as_all_negative", c.focal.background_as_all_negative}};
  j["optimizer"] = {{"learning_rate", c.learning_rate},
                    {"prototype_lr", c.prototype_lr},
                    {"weight_decay", c.weight_decay},
                    {"grad_clip_norm", c.grad_clip_norm ? nlohmann::json(*c.grad_clip_norm) : nlohmann::json(nullptr)}};
  j["encoder"] = {{"enabled", c.encoder_enabled}, {"hidden", c.hidden}, {"embedding_dim", c.embedding_dim}};
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["eval_every"] = c.eval_every;
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "dataset_path", "dataset", "unseen",    "imbalance_exponent", "head",   "delta",      "temperature",
      "d_min_policy", "prototype_path", "focal", "optimizer",        "encoder", "epochs",     "batch_size",
      "seed",         "eval_every"};
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    for (const auto& [k, v] : j.items())
      if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("config: unknown key '" + k + "'");
    c.dataset_path = j.value("dataset_path", c.dataset_path);
    if (j.contains("dataset")) c.dataset = params_from_json(j.at("dataset"));
    c.unseen = j.value("unseen", c.unseen);
    c.imbalance_exponent = j.value("imbalance_exponent", c.imbalance_exponent);
    if (j.contains("head")) c.head = parse_head_mode(j.at("head").get<std::string>());
    c.delta = j.value("delta", c.delta);
    c.temperature = j.value("temperature", c.temperature);
    if (j.contains("d_min_policy")) c.d_min_policy = parse_d_min_policy(j.at("d_min_policy").get<std::string>());
    c.prototype_path = j.value("prototype_path", c.prototype_path);
    if (j.contains("focal")) {
      const auto& f = j.at("focal");
      c.focal.gamma = f.value("gamma", c.focal.gamma);
      c.focal.alpha = f.value("alpha", c.focal.alpha);
      c.focal.background_as_all_negative = f.value("background_as_all_negative", true);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      c.learning_rate = o.value("learning_rate", c.learning_rate);
      c.prototype_lr = o.value("prototype_lr", c.prototype_lr);
      c.weight_decay = o.value("weight_decay", c.weight_decay);
      if (o.contains("grad_clip_norm"))
        c.grad_clip_norm = o.at("grad_clip_norm").is_null() ? std::nullopt
                                                            : std::optional<double>(o.at("grad_clip_norm").get<double>());
    }
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      c.encoder_enabled = e.value("enabled", c.encoder_enabled);
      c.hidden = e.value("hidden", c.hidden);
      c.embedding_dim = e.value("embedding_dim", c.embedding_dim);
    }
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.eval_every = j.value("eval_every", c.eval_every);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

// --- evaluation ---------------------------------------------------------------

struct ClassStats {
  std::string name;
  std::size_t support = 0;
  double precision = 0.0;
  double recall = 0.0;
};

struct EvaluationResult {
  std::size_t num_samples = 0;
  double accuracy = 0.0;
  double supercategory_accuracy = 0.0;
  std::optional<double> background_accuracy;
  std::vector<ClassStats> per_class;
  std::optional<double> seen_accuracy;
  std::optional<double> unseen_accuracy;
  std::optional<double> harmonic_mean;
  std::map<std::string, double> bucket_accuracy;
  std::vector<int> predictions;  // per evaluated sample, kBackground when rejected
};

/// 2ab / (a + b); 0 if either is 0.
inline double harmonic_mean(double a, double b) {
  if (a <= 0 || b <= 0) return 0.0;
  return 2.0 * a * b / (a + b);
}

/// Embedding fed to the head: the encoder output, or the raw feature when the
/// encoder is disabled.
inline Vector embed(const std::optional<EncoderParams>& encoder, std::span<const double> x) {
  if (!encoder) return Vector(x.begin(), x.end());
  return encoder_forward(*encoder, x).out;
}

/// Predicted class, or kBackground when no class confidence exceeds 0.5.
inline int predict(const PrototypeBank& bank, std::span<const double> embedding) {
  const Classification c = classify(embedding, bank, 1);
  return c.confidence > 0.5 ? c.predicted : kBackground;
}

inline EvaluationResult evaluate(const PrototypeBank& bank, const std::optional<EncoderParams>& encoder,
                                 const SyntheticDataset& ds, const std::vector<std::size_t>& split) {
  const std::size_t C = ds.num_classes();
  if (bank.num_classes() != C) throw DimensionError("evaluate: bank/dataset class count mismatch");
  EvaluationResult r;
  r.num_samples = split.size();
  std::vector<std::size_t> tp(C, 0), predicted(C, 0), support(C, 0);
  std::size_t correct = 0, super_correct = 0, bg_total = 0, bg_correct = 0;
  std::size_t seen_total = 0, seen_correct = 0, unseen_total = 0, unseen_correct = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> buckets;
  std::vector<bool> unseen_mask(C, false);
  for (int u : ds.unseen) unseen_mask[static_cast<std::size_t>(u)] = true;

  for (std::size_t i : split) {
    const int truth = ds.labels[i];
    const int pred = predict(bank, embed(encoder, ds.features[i]));
    r.predictions.push_back(pred);
    const bool ok = pred == truth;
    bool super_ok = ok;
    if (!ok && pred != kBackground && truth != kBackground) super_ok = ds.tree.parent_of(pred) == ds.tree.parent_of(truth);
    correct += ok;
    super_correct += super_ok;
    if (pred != kBackground) ++predicted[static_cast<std::size_t>(pred)];
    if (truth == kBackground) {
      ++bg_total;
      bg_correct += ok;
      continue;
    }
    const auto t = static_cast<std::size_t>(truth);
    ++support[t];
    tp[t] += ok;
    if (unseen_mask[t]) {
      ++unseen_total;
      unseen_correct += ok;
    } else {
      ++seen_total;
      seen_correct += ok;
    }
    if (!ds.buckets.empty()) {
      auto& b = buckets[to_string(ds.buckets[t])];
      ++b.first;
      b.second += ok;
    }
  }
  auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  r.accuracy = ratio(correct, split.size());
  r.supercategory_accuracy = ratio(super_correct, split.size());
  if (bg_total > 0) r.background_accuracy = ratio(bg_correct, bg_total);
  for (std::size_t c = 0; c < C; ++c)
    r.per_class.push_back({ds.tree.leaf_names[c], support[c], ratio(tp[c], predicted[c]), ratio(tp[c], support[c])});
  if (!ds.unseen.empty()) {
    r.seen_accuracy = ratio(seen_correct, seen_total);
    r.unseen_accuracy = ratio(unseen_correct, unseen_total);
    r.harmonic_mean = harmonic_mean(*r.seen_accuracy, *r.unseen_accuracy);
  }
  for (const auto& [name, b] : buckets) r.bucket_accuracy[name] = ratio(b.second, b.first);
  return r;
}

inline nlohmann::json evaluation_to_json(const EvaluationResult& r) {
  nlohmann::json j;
  j["num_samples"] = r.num_samples;
  j["accuracy"] = r.accuracy;
  j["supercategory_accuracy"] = r.supercategory_accuracy;
  if (r.background_accuracy) j["background_accuracy"] = *r.background_accuracy;
  auto pc = nlohmann::json::array();
  for (const auto& c : r.per_class)
    pc.push_back({{"name", c.name}, {"support", c.support}, {"precision", c.precision}, {"recall", c.recall}});
  j["per_class"] = std::move(pc);
  if (r.seen_accuracy) {
    j["seen_accuracy"] = *r.seen_accuracy;
    j["unseen_accuracy"] = *r.unseen_accuracy;
    j["harmonic_mean"] = *r.harmonic_mean;
  }
  if (!r.bucket_accuracy.empty()) j["bucket_accuracy"] = r.bucket_accuracy;
  return j;
}

/// Mean intra-supercategory prototype distance over mean inter-supercategory
/// distance, in the bank's own geometry.
inline double hierarchy_ratio(const PrototypeBank& bank, const ClassTree& tree) {
  double intra = 0, inter = 0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < bank.num_classes(); ++i) {
    for (std::size_t j = i + 1; j < bank.num_classes(); ++j) {
      const double d = bank.prototype_distance(i, j);
      if (tree.parent[i] == tree.parent[j]) {
        intra += d;
        ++n_intra;
      } else {
        inter += d;
        ++n_inter;
      }
    }
  }
  if (n_intra == 0 || n_inter == 0 || inter == 0) return 0.0;
  return (intra / static_cast<double>(n_intra)) / (inter / static_cast<double>(n_inter));
}

// --- training state and checkpoints -----------------------------------------

struct EvalPoint {
  std::size_t epoch = 0;
  double accuracy = 0.0;
  double supercategory_accuracy = 0.0;
};

struct MetricsReport {
  std::string head;
  std::vector<double> train_loss;  // mean focal loss per epoch, index = epoch - 1
  std::vector<EvalPoint> evaluations;
  EvaluationResult final_eval;
  double wall_clock_seconds = 0.0;  // not serialized, so reports stay bit-reproducible
};

struct TrainingState {
  ExperimentConfig config;
  std::optional<EncoderParams> encoder;
  PrototypeBank bank;
  OptimizerState optimizer;
  std::size_t epoch = 0;  // completed epochs
  Rng rng;
  std::vector<double> train_loss;
  std::vector<EvalPoint> evaluations;
};

inline std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng rng_from_string(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw ConfigError("checkpoint: malformed rng state");
  return rng;
}

inline nlohmann::json checkpoint_to_json(const TrainingState& s) {
  nlohmann::json j;
  j["format"] = "hyperdet-checkpoint-v1";
  j["config"] = config_to_json(s.config);
  j["encoder"] = s.encoder ? encoder_to_json(*s.encoder) : nlohmann::json(nullptr);
  j["prototype_bank"] = bank_to_json(s.bank);
  j["optimizer"] = optimizer_to_json(s.optimizer);
  j["epoch"] = s.epoch;
  j["rng"] = rng_to_string(s.rng);
  j["train_loss"] = s.train_loss;
  auto ev = nlohmann::json::array();
  for (const auto& e : s.evaluations)
    ev.push_back({{"epoch", e.epoch}, {"accuracy", e.accuracy}, {"supercategory_accuracy", e.supercategory_accuracy}});
  j["evaluations"] = std::move(ev);
  return j;
}

inline TrainingState checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "hyperdet-checkpoint-v1") throw ConfigError("checkpoint: unknown format");
    TrainingState s{config_from_json(j.at("config")),
                    j.at("encoder").is_null() ? std::nullopt : std::optional(encoder_from_json(j.at("encoder"))),
                    bank_from_json(j.at("prototype_bank")),
                    optimizer_from_json(j.at("optimizer")),
                    j.at("epoch").get<std::size_t>(),
                    rng_from_string(j.at("rng").get<std::string>()),
                    j.at("train_loss").get<std::vector<double>>(),
                    {}};
    for (const auto& e : j.at("evaluations"))
      s.evaluations.push_back({e.at("epoch").get<std::size_t>(), e.at("accuracy").get<double>(),
                               e.at("supercategory_accuracy").get<double>()});
    if (s.encoder.has_value() != s.config.encoder_enabled)
      throw ConfigError("checkpoint: encoder presence does not match the config");
    if (s.encoder && s.encoder->n_emb != s.bank.feature_dim())
      throw ConfigError("checkpoint: encoder output and prototype dimensions differ");
    if (s.train_loss.size() != s.epoch) throw ConfigError("checkpoint: loss history does not match the epoch count");
    if (s.bank.mode() != s.config.head) throw ConfigError("checkpoint: prototype bank mode does not match the config head");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint JSON: ") + e.what());
  }
}

inline nlohmann::json metrics_to_json(const MetricsReport& m) {
  nlohmann::json j;
  j["head"] = m.head;
  j["train_loss"] = m.train_loss;
  auto ev = nlohmann::json::array();
  for (const auto& e : m.evaluations)
    ev.push_back({{"epoch", e.epoch}, {"accuracy", e.accuracy}, {"supercategory_accuracy", e.supercategory_accuracy}});
  j["evaluations"] = std::move(ev);
  j["final"] = evaluation_to_json(m.final_eval);
  return j;
}

/// Flat `epoch,metric,value` rows.
inline std::string metrics_csv(const MetricsReport& m) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,metric,value\n";
  for (std::size_t e = 0; e < m.train_loss.size(); ++e) os << e + 1 << ",train_loss," << m.train_loss[e] << '\n';
  for (const auto& p : m.evaluations) {
    os << p.epoch << ",val_accuracy," << p.accuracy << '\n';
    os << p.epoch << ",val_supercategory_accuracy," << p.supercategory_accuracy << '\n';
  }
  return os.str();
}

/// Thrown when the loss or a gradient goes non-finite; carries a diagnostic dump.
struct TrainingDiverged : NumericalError {
  TrainingDiverged(const std::string& what, nlohmann::json dump) : NumericalError(what), dump(std::move(dump)) {}
  nlohmann::json dump;
};

/// Resolves class names to indices, throwing ConfigError for unknown names.
inline std::vector<int> resolve_classes(const ClassTree& tree, const std::vector<std::string>& names) {
  std::vector<int> out;
  for (const auto& n : names) {
    auto it = std::find(tree.leaf_names.begin(), tree.leaf_names.end(), n);
    if (it == tree.leaf_names.end()) throw ConfigError("unknown class '" + n + "'");
    out.push_back(static_cast<int>(it - tree.leaf_names.begin()));
  }
  return out;
}

/// Reorders a bank to the dataset's class order, optionally freezing it.
/// Every dataset class must have a prototype.
inline PrototypeBank align_bank(const PrototypeBank& bank, const ClassTree& tree, bool freeze = false) {
  const bool frozen = freeze || bank.frozen();
  std::vector<std::size_t> idx;
  for (const auto& name : tree.leaf_names) {
    auto it = std::find(bank.class_names().begin(), bank.class_names().end(), name);
    if (it == bank.class_names().end()) throw ConfigError("prototype file has no prototype for class '" + name + "'");
    idx.push_back(static_cast<std::size_t>(it - bank.class_names().begin()));
  }
  if (bank.is_hyperbolic()) {
    std::vector<HyperboloidPoint> pts;
    for (std::size_t i : idx) pts.push_back(bank.point(i));
    return PrototypeBank::hyperbolic(tree.leaf_names, std::move(pts), frozen, bank.delta());
  }
  std::vector<Vector> rows;
  for (std::size_t i : idx) rows.push_back(bank.row(i));
  return PrototypeBank::euclidean(bank.mode(), tree.leaf_names, std::move(rows), frozen, bank.delta(),
                                  bank.temperature());
}

/// Fresh state. `fixed_bank` supplies frozen prototypes for the
/// min-inter-class policy.
inline TrainingState init_training(const ExperimentConfig& cfg, const SyntheticDataset& ds,
                                   const std::optional<PrototypeBank>& fixed_bank = std::nullopt) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::optional<EncoderParams> encoder;
  std::size_t emb = ds.dim();
  if (cfg.encoder_enabled) {
    encoder = EncoderParams::init(ds.dim(), cfg.hidden, cfg.embedding_dim, rng);
    emb = cfg.embedding_dim;
  }
  std::optional<PrototypeBank> bank;
  if (cfg.d_min_policy == DMinPolicy::min_inter_class) {
    if (!fixed_bank) throw ConfigError("training: min-inter-class policy needs fixed prototypes");
    if (fixed_bank->mode() != cfg.head) throw ConfigError("training: prototype file mode does not match head");
    bank = align_bank(*fixed_bank, ds.tree, true);
  } else if (cfg.head == HeadMode::hyperbolic) {
    bank = PrototypeBank::init_hyperbolic(ds.tree.leaf_names, emb, rng, cfg.delta);
  } else {
    bank = PrototypeBank::init_euclidean(cfg.head, ds.tree.leaf_names, emb, rng, cfg.delta, cfg.temperature);
  }
  if (bank->feature_dim() != emb)
    throw ConfigError("training: prototype dimension " + std::to_string(bank->feature_dim()) +
                      " does not match embedding dimension " + std::to_string(emb));
  OptimizerState opt;
  opt.learning_rate = cfg.learning_rate;
  opt.weight_decay = cfg.weight_decay;
  opt.grad_clip_norm = cfg.grad_clip_norm;
  return TrainingState{cfg, std::move(encoder), std::move(*bank), std::move(opt), 0, rng, {}, {}};
}

namespace detail {

inline double param_norm(const Vector& v) { return euclidean_norm(v); }

inline nlohmann::json divergence_dump(const TrainingState& s, const std::vector<std::size_t>& batch) {
  nlohmann::json norms;
  if (s.encoder) {
    norms["encoder.w1"] = param_norm(s.encoder->w1);
    norms["encoder.b1"] = param_norm(s.encoder->b1);
    norms["encoder.w2"] = param_norm(s.encoder->w2);
    norms["encoder.b2"] = param_norm(s.encoder->b2);
  }
  for (std::size_t c = 0; c < s.bank.num_classes(); ++c) {
    const double n = s.bank.is_hyperbolic() ? param_norm(Vector(s.bank.point(c).coords().begin(), s.bank.point(c).coords().end()))
                                            : param_norm(s.bank.row(c));
    norms["prototype." + s.bank.class_names()[c]] = n;
  }
  return {{"epoch", s.epoch + 1}, {"step", s.optimizer.step_count}, {"last_batch", batch}, {"parameter_norms", norms}};
}

}  // namespace detail

/// Runs epochs until state.epoch == config.epochs. `on_epoch` is invoked after
/// every epoch with the updated state (used for checkpointing).
template <class OnEpoch>
inline void run_training(TrainingState& s, const SyntheticDataset& ds, OnEpoch on_epoch) {
  const ExperimentConfig& cfg = s.config;
  const std::size_t C = s.bank.num_classes();
  const bool learn_protos = !s.bank.frozen();
  while (s.epoch < cfg.epochs) {
    std::vector<std::size_t> order = ds.train;
    std::shuffle(order.begin(), order.end(), s.rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      std::optional<EncoderParams> genc;
      if (s.encoder) genc = zeros_like(*s.encoder);
      std::vector<Vector> gproto(C);
      double batch_loss = 0.0;
      for (std::size_t i : batch) {
        const Vector& x = ds.features[i];
        std::optional<EncoderActivations> act;
        Vector emb;
        if (s.encoder) {
          act = encoder_forward(*s.encoder, x);
          emb = act->out;
        } else {
          emb = x;
        }
        if (!detail::all_finite(emb))
          throw TrainingDiverged("training diverged: non-finite embedding", detail::divergence_dump(s, batch));
        HeadGradient hg = head_loss_and_gradient(emb, ds.labels[i], s.bank, cfg.focal);
        batch_loss += hg.loss;
        if (s.encoder) encoder_backward(*s.encoder, x, *act, hg.feature, *genc);
        if (learn_protos) {
          for (std::size_t c = 0; c < C; ++c) {
            if (gproto[c].empty()) gproto[c].assign(hg.prototype[c].size(), 0.0);
            for (std::size_t k = 0; k < gproto[c].size(); ++k) gproto[c][k] += hg.prototype[c][k];
          }
        }
      }
      const double inv = 1.0 / static_cast<double>(batch.size());
      std::vector<Vector*> all;
      if (genc)
        for (Vector* v : {&genc->w1, &genc->b1, &genc->w2, &genc->b2}) all.push_back(v);
      if (learn_protos)
        for (auto& g : gproto) all.push_back(&g);
      for (Vector* g : all)
        for (double& x : *g) x *= inv;
      bool finite = std::isfinite(batch_loss);
      for (const Vector* g : all) finite = finite && detail::all_finite(*g);
      if (!finite) throw TrainingDiverged("training diverged: non-finite loss or gradient", detail::divergence_dump(s, batch));
      if (cfg.grad_clip_norm && !all.empty()) clip_gradients(all, *cfg.grad_clip_norm);

      s.optimizer.advance();
      if (s.encoder) {
        s.encoder->w1 = euclidean_step(s.encoder->w1, genc->w1, s.optimizer, "encoder.w1");
        s.encoder->b1 = euclidean_step(s.encoder->b1, genc->b1, s.optimizer, "encoder.b1");
        s.encoder->w2 = euclidean_step(s.encoder->w2, genc->w2, s.optimizer, "encoder.w2");
        s.encoder->b2 = euclidean_step(s.encoder->b2, genc->b2, s.optimizer, "encoder.b2");
      }
      if (learn_protos) {
        for (std::size_t c = 0; c < C; ++c) {
          if (s.bank.is_hyperbolic()) {
            s.bank.set_point(c, riemannian_step(s.bank.point(c), gproto[c], cfg.prototype_lr));
          } else {
            s.bank.mutable_row(c) =
                euclidean_step(s.bank.row(c), gproto[c], s.optimizer, "head." + s.bank.class_names()[c]);
          }
        }
      }
      epoch_loss += batch_loss;
    }
    ++s.epoch;
    s.train_loss.push_back(order.empty() ? 0.0 : epoch_loss / static_cast<double>(order.size()));
    if (s.epoch % cfg.eval_every == 0 || s.epoch == cfg.epochs) {
      const EvaluationResult e = evaluate(s.bank, s.encoder, ds, ds.val);
      s.evaluations.push_back({s.epoch, e.accuracy, e.supercategory_accuracy});
    }
    on_epoch(s);
  }
}

inline void run_training(TrainingState& s, const SyntheticDataset& ds) {
  run_training(s, ds, [](const TrainingState&) {});
}

/// Mean focal loss of the current parameters over a split (no updates).
inline double mean_loss(const TrainingState& s, const SyntheticDataset& ds, const std::vector<std::size_t>& split) {
  double total = 0.0;
  for (std::size_t i : split) total += head_loss_and_gradient(embed(s.encoder, ds.features[i]), ds.labels[i], s.bank, s.config.focal).loss;
  return split.empty() ? 0.0 : total / static_cast<double>(split.size());
}

inline MetricsReport make_report(const TrainingState& s, const SyntheticDataset& eval_ds) {
  MetricsReport m;
  m.head = to_string(s.config.head);
  m.train_loss = s.train_loss;
  m.evaluations = s.evaluations;
  m.final_eval = evaluate(s.bank, s.encoder, eval_ds, eval_ds.val);
  return m;
}

/// Prepares the dataset a config asks for: load or generate, then apply the
/// optional imbalance profile.
inline SyntheticDataset prepare_dataset(const ExperimentConfig& cfg, const std::optional<SyntheticDataset>& loaded) {
  SyntheticDataset ds = loaded ? *loaded : generate(cfg.dataset);
  if (cfg.imbalance_exponent > 0) ds = imbalance_profile(ds, cfg.imbalance_exponent);
  return ds;
}

struct TrainResult {
  TrainingState state;
  MetricsReport report;
};

/// Full run from scratch. Unseen classes in the config are held out of the
/// training split and reported separately.
template <class OnEpoch>
inline TrainResult train(const ExperimentConfig& cfg, const SyntheticDataset& ds,
                         const std::optional<PrototypeBank>& fixed_bank, OnEpoch on_epoch) {
  const auto t0 = std::chrono::steady_clock::now();
  const HoldoutSplit split = holdout_unseen(ds, resolve_classes(ds.tree, cfg.unseen));
  TrainingState s = init_training(cfg, split.train, fixed_bank);
  run_training(s, split.train, on_epoch);
  MetricsReport report = make_report(s, split.eval);
  report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(s), std::move(report)};
}

inline TrainResult train(const ExperimentConfig& cfg, const SyntheticDataset& ds,
                         const std::optional<PrototypeBank>& fixed_bank = std::nullopt) {
  return train(cfg, ds, fixed_bank, [](const TrainingState&) {});
}

/// Zero-shot run: frozen prototypes for all classes, encoder trained on the
/// seen classes only, report split by seen/unseen with the harmonic mean.
inline TrainResult zero_shot_eval(ExperimentConfig cfg, const SyntheticDataset& ds, const PrototypeBank& fixed_bank) {
  if (cfg.prototype_path.empty()) cfg.prototype_path = "<in-memory>";
  cfg.d_min_policy = DMinPolicy::min_inter_class;
  // Fails with ConfigError when an unseen class has no prototype.
  (void)align_bank(fixed_bank, ds.tree);
  return train(cfg, ds, fixed_bank);
}

}  // namespace hyperdet
