#include <cmath>

#include <gtest/gtest.h>

#include "hyperdet/io.hpp"
#include "hyperdet/training.hpp"
#include "test_support.hpp"

namespace hyperdet {
namespace {

using testing::random_vector;

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.dataset.num_samples = 1600;
  c.epochs = 6;
  c.eval_every = 2;
  return c;
}

/// Dataset assembled by hand: sample i has feature `features[i]` and label
/// `labels[i]`, and every sample is in the validation split.
SyntheticDataset manual_dataset(const ClassTree& tree, std::vector<Vector> features, std::vector<int> labels) {
  SyntheticDataset ds;
  ds.tree = tree;
  ds.params.num_super = tree.num_super();
  ds.params.num_classes = tree.num_classes();
  ds.params.dim = features.front().size();
  ds.params.num_samples = features.size();
  ds.features = std::move(features);
  ds.labels = std::move(labels);
  for (std::size_t i = 0; i < ds.features.size(); ++i) ds.val.push_back(i);
  return ds;
}

TEST(EncoderGradient, MatchesFiniteDifferences) {
  Rng rng(40);
  const EncoderParams enc = EncoderParams::init(5, 7, 3, rng);
  const Vector x = random_vector(5, 1, rng);
  const Vector g = random_vector(3, 1, rng);
  // f(theta) = <g, encoder(x; theta)>
  EncoderParams grads = zeros_like(enc);
  encoder_backward(enc, x, encoder_forward(enc, x), g, grads);
  auto check = [&](Vector EncoderParams::*member) {
    auto f = [&](const Vector& theta) {
      EncoderParams e = enc;
      e.*member = theta;
      const Vector out = encoder_forward(e, x).out;
      double s = 0;
      for (std::size_t i = 0; i < out.size(); ++i) s += g[i] * out[i];
      return s;
    };
    EXPECT_LT(testing::relative_error(grads.*member, testing::central_difference(f, enc.*member)), 1e-6);
  };
  check(&EncoderParams::w1);
  check(&EncoderParams::b1);
  check(&EncoderParams::w2);
  check(&EncoderParams::b2);
}

TEST(Config, JsonRoundTripAndValidation) {
  ExperimentConfig c = small_config();
  c.unseen = {"leaf_3"};
  c.head = HeadMode::euclidean_cosine;
  c.grad_clip_norm.reset();
  const auto j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);

  auto bad = j;
  bad["learning_rte"] = 0.1;
  EXPECT_THROW(config_from_json(bad), ConfigError);
  bad = j;
  bad["head"] = "poincare";
  EXPECT_THROW(config_from_json(bad), ConfigError);
  bad = j;
  bad["d_min_policy"] = "min-inter-class";
  EXPECT_THROW(config_from_json(bad), ConfigError);
  bad = j;
  bad["focal"]["alpha"] = 0.0;
  EXPECT_THROW(config_from_json(bad), ParameterError);
}

TEST(Evaluate, DefinitionCases) {
  // Two supercategories with two leaves each; prototypes on the axes.
  const ClassTree tree = ClassTree::balanced(2, 4);
  std::vector<HyperboloidPoint> pts;
  std::vector<Vector> feats;
  for (int c = 0; c < 4; ++c) {
    Vector v(4, 0.0);
    v[static_cast<std::size_t>(c)] = 1.0;
    pts.push_back(exp_map_origin(v));
    feats.push_back(v);
  }
  const PrototypeBank bank = PrototypeBank::hyperbolic(tree.leaf_names, pts, true);

  const EvaluationResult all = evaluate(bank, std::nullopt, manual_dataset(tree, feats, {0, 1, 2, 3}), {0, 1, 2, 3});
  EXPECT_EQ(all.accuracy, 1.0);
  EXPECT_EQ(all.supercategory_accuracy, 1.0);
  EXPECT_FALSE(all.background_accuracy.has_value());
  EXPECT_FALSE(all.harmonic_mean.has_value());

  // Truth is the sibling leaf under the same parent.
  const EvaluationResult sib = evaluate(bank, std::nullopt, manual_dataset(tree, feats, {1, 0, 3, 2}), {0, 1, 2, 3});
  EXPECT_EQ(sib.accuracy, 0.0);
  EXPECT_EQ(sib.supercategory_accuracy, 1.0);

  // Truth under the other parent.
  const EvaluationResult far = evaluate(bank, std::nullopt, manual_dataset(tree, feats, {2, 3, 0, 1}), {0, 1, 2, 3});
  EXPECT_EQ(far.supercategory_accuracy, 0.0);

  // A probe far from every prototype has no confident class: background.
  feats.push_back({-9.0, -9.0, -9.0, -9.0});
  const EvaluationResult bg =
      evaluate(bank, std::nullopt, manual_dataset(tree, feats, {0, 1, 2, 3, kBackground}), {0, 1, 2, 3, 4});
  EXPECT_EQ(bg.predictions.back(), kBackground);
  EXPECT_EQ(*bg.background_accuracy, 1.0);
  EXPECT_EQ(bg.accuracy, 1.0);
  for (const ClassStats& s : bg.per_class) {
    EXPECT_EQ(s.precision, 1.0);
    EXPECT_EQ(s.recall, 1.0);
    EXPECT_EQ(s.support, 1u);
  }
}

TEST(Evaluate, RandomPrototypesGiveChanceAccuracy) {
  // Labels independent of features: expected accuracy is exactly 1/C.
  // Small norms keep every distance below d_min = 1, so nothing is rejected.
  const std::size_t C = 8, N = 4000;
  Rng rng(41);
  const PrototypeBank bank = PrototypeBank::init_hyperbolic(ClassTree::balanced(2, C).leaf_names, 6, rng);
  std::vector<Vector> feats;
  std::vector<int> labels;
  std::uniform_int_distribution<int> lab(0, static_cast<int>(C) - 1);
  for (std::size_t i = 0; i < N; ++i) {
    feats.push_back(random_vector(6, 0.05, rng));
    labels.push_back(lab(rng));
  }
  const SyntheticDataset ds = manual_dataset(ClassTree::balanced(2, C), feats, labels);
  const EvaluationResult r = evaluate(bank, std::nullopt, ds, ds.val);
  for (int p : r.predictions) ASSERT_NE(p, kBackground);
  const double p = 1.0 / C;
  EXPECT_NEAR(r.accuracy, p, 3.0 * std::sqrt(p * (1 - p) / N));
}

TEST(HarmonicMean, HandValues) {
  EXPECT_NEAR(harmonic_mean(0.6, 0.3), 0.4, 1e-15);
  EXPECT_EQ(harmonic_mean(0.5, 0.5), 0.5);
  EXPECT_EQ(harmonic_mean(0.0, 0.9), 0.0);
  EXPECT_EQ(harmonic_mean(0.9, 0.0), 0.0);
}

TEST(Train, NoiselessDataIsLearnedPerfectly) {
  ExperimentConfig c;
  c.dataset.sigma_x = 0;
  c.epochs = 20;
  const TrainResult r = train(c, generate(c.dataset));
  EXPECT_EQ(r.report.final_eval.accuracy, 1.0);
  EXPECT_EQ(r.report.evaluations.back().epoch, 20u);
}

TEST(Train, LossDecreasesForBothHeads) {
  for (HeadMode h : {HeadMode::hyperbolic, HeadMode::euclidean_linear, HeadMode::euclidean_cosine}) {
    ExperimentConfig c = small_config();
    c.head = h;
    const TrainResult r = train(c, generate(c.dataset));
    EXPECT_LT(r.report.train_loss.back(), r.report.train_loss.front()) << to_string(h);
    for (const EvalPoint& e : r.report.evaluations) {
      EXPECT_GE(e.accuracy, 0.0);
      EXPECT_LE(e.accuracy, 1.0);
    }
  }
}

TEST(Train, DeterministicToTheLastBit) {
  const ExperimentConfig c = small_config();
  const SyntheticDataset ds = generate(c.dataset);
  const TrainResult a = train(c, ds), b = train(c, ds);
  EXPECT_EQ(checkpoint_to_json(a.state).dump(), checkpoint_to_json(b.state).dump());
  EXPECT_EQ(metrics_to_json(a.report).dump(), metrics_to_json(b.report).dump());
  EXPECT_EQ(a.report.train_loss.back(), b.report.train_loss.back());

  ExperimentConfig other = c;
  other.seed = 1;
  EXPECT_NE(train(other, ds).report.train_loss.back(), a.report.train_loss.back());
}

TEST(Train, EvaluationCadence) {
  ExperimentConfig c = small_config();
  c.epochs = 5;
  std::vector<std::size_t> epochs;
  train(c, generate(c.dataset), std::nullopt, [&](const TrainingState& s) { epochs.push_back(s.epoch); });
  EXPECT_EQ(epochs, (std::vector<std::size_t>{1, 2, 3, 4, 5}));
  const TrainResult r = train(c, generate(c.dataset));
  ASSERT_EQ(r.report.evaluations.size(), 3u);
  EXPECT_EQ(r.report.evaluations[0].epoch, 2u);
  EXPECT_EQ(r.report.evaluations[2].epoch, 5u);
}

TEST(Train, BisectorProbeScoresBothClassesEqually) {
  // Encoder disabled, n = 2, C = 2: after training, the geodesic midpoint of
  // the two prototypes is equidistant and gets identical scores.
  ExperimentConfig c;
  c.encoder_enabled = false;
  c.dataset.dim = 2;
  c.dataset.num_super = 2;
  c.dataset.num_classes = 2;
  c.dataset.num_samples = 600;
  c.dataset.background_fraction = 0;
  c.epochs = 10;
  const TrainResult r = train(c, generate(c.dataset));
  const PrototypeBank& bank = r.state.bank;
  const HyperboloidPoint& t0 = bank.point(0);
  const HyperboloidPoint& t1 = bank.point(1);
  TangentVector half = log_map_at(t0, t1);
  for (double& x : half.components) x *= 0.5;
  const HyperboloidPoint mid = exp_map_at(t0, half);
  EXPECT_NEAR(hyperbolic_distance(mid, t0), hyperbolic_distance(mid, t1), 1e-9);

  // Feed the midpoint's tangent coordinates at the origin as the feature.
  const Vector feature = log_map_at(HyperboloidPoint::origin(2), mid).components;
  const Vector spatial(feature.begin() + 1, feature.end());
  const LogitVector s = head_logits(spatial, bank);
  EXPECT_NEAR(s.scores[0], s.scores[1], 1e-8);
  const double p0 = sigmoid(s.scores[0]), p1 = sigmoid(s.scores[1]);
  EXPECT_NEAR(p0 / (p0 + p1), 0.5, 1e-9);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const ExperimentConfig c = small_config();
  const SyntheticDataset ds = generate(c.dataset);
  const TrainResult r = train(c, ds);
  const std::string text = checkpoint_to_json(r.state).dump(2);
  const TrainingState loaded = checkpoint_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(checkpoint_to_json(loaded).dump(2), text);
  EXPECT_EQ(evaluation_to_json(evaluate(loaded.bank, loaded.encoder, ds, ds.val)).dump(),
            evaluation_to_json(evaluate(r.state.bank, r.state.encoder, ds, ds.val)).dump());
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  ExperimentConfig c = small_config();
  const SyntheticDataset ds = generate(c.dataset);
  const TrainResult full = train(c, ds);

  ExperimentConfig first = c;
  first.epochs = 3;
  const TrainResult half = train(first, ds);
  TrainingState resumed = checkpoint_from_json(nlohmann::json::parse(checkpoint_to_json(half.state).dump()));
  EXPECT_EQ(resumed.epoch, 3u);
  resumed.config.epochs = c.epochs;
  std::vector<std::size_t> epochs;
  run_training(resumed, ds, [&](const TrainingState& s) { epochs.push_back(s.epoch); });
  EXPECT_EQ(epochs, (std::vector<std::size_t>{4, 5, 6}));
  EXPECT_EQ(resumed.train_loss, full.state.train_loss);
  EXPECT_EQ(bank_to_json(resumed.bank), bank_to_json(full.state.bank));
  EXPECT_EQ(encoder_to_json(*resumed.encoder), encoder_to_json(*full.state.encoder));
}

TEST(Checkpoint, RejectsCorruptInput) {
  const ExperimentConfig c = small_config();
  TrainingState s = init_training(c, generate(c.dataset));
  auto j = checkpoint_to_json(s);
  j["format"] = "something-else";
  EXPECT_THROW(checkpoint_from_json(j), ConfigError);
  j = checkpoint_to_json(s);
  j["rng"] = "not a state";
  EXPECT_THROW(checkpoint_from_json(j), ConfigError);
  j = checkpoint_to_json(s);
  j.erase("encoder");
  j["config"]["encoder"]["enabled"] = true;
  EXPECT_THROW(checkpoint_from_json(j), ConfigError);
}

TEST(Train, NonFiniteInputAbortsWithDump) {
  ExperimentConfig c = small_config();
  SyntheticDataset ds = generate(c.dataset);
  ds.features[ds.train[5]][0] = NAN;
  try {
    train(c, ds);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_TRUE(e.dump.contains("last_batch"));
    EXPECT_TRUE(e.dump.at("parameter_norms").contains("encoder.w1"));
    EXPECT_TRUE(e.dump.at("parameter_norms").contains("prototype.leaf_0"));
    EXPECT_EQ(e.dump.at("epoch"), 1);
  }
}

TEST(Train, OverflowingLearningRateAbortsWithDump) {
  ExperimentConfig c = small_config();
  c.head = HeadMode::euclidean_linear;
  c.learning_rate = 1e300;
  EXPECT_THROW(train(c, generate(c.dataset)), TrainingDiverged);
}

TEST(ZeroShot, NoUnseenClassesMatchesPlainEvaluation) {
  ExperimentConfig c = small_config();
  const SyntheticDataset ds = generate(c.dataset);
  Rng rng(42);
  std::vector<HyperboloidPoint> pts;
  for (std::size_t k = 0; k < ds.num_classes(); ++k) pts.push_back(exp_map_origin(random_vector(16, 1, rng)));
  const PrototypeBank bank = PrototypeBank::hyperbolic(ds.tree.leaf_names, pts, true);
  const TrainResult r = zero_shot_eval(c, ds, bank);
  EXPECT_TRUE(r.state.bank.frozen());
  EXPECT_FALSE(r.report.final_eval.harmonic_mean.has_value());
  EXPECT_EQ(evaluation_to_json(r.report.final_eval), evaluation_to_json(evaluate(r.state.bank, r.state.encoder, ds, ds.val)));
}

TEST(ZeroShot, MissingUnseenPrototypeIsConfigError) {
  ExperimentConfig c = small_config();
  c.unseen = {"leaf_15"};
  const SyntheticDataset ds = generate(c.dataset);
  Rng rng(43);
  std::vector<std::string> names(ds.tree.leaf_names.begin(), ds.tree.leaf_names.end() - 1);
  std::vector<HyperboloidPoint> pts;
  for (std::size_t k = 0; k < names.size(); ++k) pts.push_back(exp_map_origin(random_vector(16, 1, rng)));
  EXPECT_THROW(zero_shot_eval(c, ds, PrototypeBank::hyperbolic(names, pts, true)), ConfigError);
}

TEST(ZeroShot, AliasedUnseenClassTracksItsSeenTwin) {
  // Train against frozen prototypes with class u held out. Then swap the
  // prototypes of u and a seen class A and relabel A's validation samples as
  // u: those samples now land on u's slot, so unseen accuracy must track A's.
  ExperimentConfig c;
  c.unseen = {"leaf_13"};
  const SyntheticDataset ds = generate(c.dataset);
  const PrototypeBank bank = import_prototypes(parse_embedding_text(semantic_embedding_text(ds, 0.25)), HeadMode::hyperbolic);
  const TrainResult r = zero_shot_eval(c, ds, bank);
  const int u = 13, a = 4;
  const double a_acc = r.report.final_eval.per_class[a].recall;
  EXPECT_GT(a_acc, 0.5);

  std::vector<HyperboloidPoint> swapped = r.state.bank.points();
  std::swap(swapped[u], swapped[a]);
  const PrototypeBank aliased = PrototypeBank::hyperbolic(ds.tree.leaf_names, swapped, true);
  EXPECT_EQ(aliased.d_min(), r.state.bank.d_min());

  SyntheticDataset relabeled = ds;
  relabeled.unseen = {u};
  relabeled.val.clear();
  for (std::size_t i : ds.val) {
    if (ds.labels[i] == u) continue;
    if (ds.labels[i] == a) relabeled.labels[i] = u;
    relabeled.val.push_back(i);
  }
  const EvaluationResult e = evaluate(aliased, r.state.encoder, relabeled, relabeled.val);
  EXPECT_NEAR(*e.unseen_accuracy, a_acc, 0.05);
  EXPECT_NEAR(*e.harmonic_mean, harmonic_mean(*e.seen_accuracy, *e.unseen_accuracy), 1e-15);
}

}  // namespace
}  // namespace hyperdet
