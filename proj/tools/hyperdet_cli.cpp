// hyperdet: dataset generation, training, evaluation, zero-shot runs, hubness
// reports and prototype import/export.
//
// Exit codes: 0 ok, 2 invalid config or input, 3 numerical failure.

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hyperdet/hubness.hpp"
#include "hyperdet/io.hpp"
#include "hyperdet/manifest.hpp"
#include "hyperdet/training.hpp"

namespace fs = std::filesystem;
using namespace hyperdet;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr const char* kCheckpointFormat = "hyperdet-checkpoint-v1";

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string manifest_path_for(const std::string& out, const std::string& override_path) {
  return override_path.empty() ? out + ".manifest.json" : override_path;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create directory '" + dir + "': " + ec.message());
}

/// Loads a prototype bank from either a bank file or a training checkpoint.
PrototypeBank load_bank(const std::string& path) {
  const json j = read_json(path);
  if (j.is_object() && j.value("format", "") == kCheckpointFormat) return bank_from_json(j.at("prototype_bank"));
  return bank_from_json(j);
}

SyntheticDataset load_dataset(const std::string& path, RunManifest& manifest) {
  manifest.add_input(path);
  return dataset_from_json(read_json(path));
}

/// Dataset named by the config: the file at dataset_path, else generated from
/// the inline generation parameters. The optional imbalance profile is applied.
SyntheticDataset dataset_for(const ExperimentConfig& cfg, RunManifest& manifest) {
  std::optional<SyntheticDataset> loaded;
  if (!cfg.dataset_path.empty()) loaded = load_dataset(cfg.dataset_path, manifest);
  return prepare_dataset(cfg, loaded);
}

std::optional<PrototypeBank> fixed_bank_for(const ExperimentConfig& cfg, RunManifest& manifest) {
  if (cfg.prototype_path.empty()) return std::nullopt;
  manifest.add_input(cfg.prototype_path);
  return load_bank(cfg.prototype_path);
}

void print_summary(const SyntheticDataset& ds) {
  std::cout << "samples " << ds.size() << ", dim " << ds.dim() << ", classes " << ds.num_classes() << ", supercategories "
            << ds.tree.num_super() << ", background " << ds.background_count() << "\n";
  std::cout << "split train " << ds.train.size() << ", val " << ds.val.size() << "\n";
  const auto tr = ds.class_counts(ds.train);
  const auto va = ds.class_counts(ds.val);
  std::cout << std::left << std::setw(12) << "class" << std::setw(12) << "parent" << std::setw(8) << "train" << std::setw(8)
            << "val" << "bucket\n";
  for (std::size_t c = 0; c < ds.num_classes(); ++c) {
    const bool unseen = std::find(ds.unseen.begin(), ds.unseen.end(), static_cast<int>(c)) != ds.unseen.end();
    std::cout << std::setw(12) << ds.tree.leaf_names[c] << std::setw(12)
              << ds.tree.supercategories[static_cast<std::size_t>(ds.tree.parent[c])] << std::setw(8) << tr[c]
              << std::setw(8) << va[c] << (ds.buckets.empty() ? "-" : to_string(ds.buckets[c]))
              << (unseen ? " (unseen)" : "") << "\n";
  }
}

json metrics_document(const MetricsReport& report, const ExperimentConfig& cfg) {
  json j = metrics_to_json(report);
  j["config"] = config_to_json(cfg);
  return j;
}

std::string checkpoint_name(std::size_t epoch) {
  std::ostringstream os;
  os << "checkpoint_epoch_" << std::setw(4) << std::setfill('0') << epoch << ".json";
  return os.str();
}

/// Runs `body`, mapping library errors to exit codes and finalizing the manifest.
template <class Body>
int guarded(RunManifest* manifest, const std::string& nan_dump_path, Body body) {
  int code = kExitOk;
  std::string error;
  try {
    body();
  } catch (const TrainingDiverged& e) {
    error = e.what();
    code = kExitNumerical;
    if (!nan_dump_path.empty()) {
      try {
        write_json(nan_dump_path, e.dump);
        std::cerr << "diagnostic dump written to " << nan_dump_path << "\n";
      } catch (const std::exception& w) {
        std::cerr << "could not write diagnostic dump: " << w.what() << "\n";
      }
    }
  } catch (const NumericalError& e) {
    error = e.what();
    code = kExitNumerical;
  } catch (const ConfigError& e) {
    error = e.what();
    code = kExitInput;
  } catch (const std::invalid_argument& e) {
    error = e.what();
    code = kExitInput;
  } catch (const ContractError& e) {
    error = e.what();
    code = kExitInput;
  }
  if (code != kExitOk) std::cerr << "error: " << error << "\n";
  if (manifest) {
    try {
      manifest->finish(code, error);
    } catch (const std::exception& e) {
      std::cerr << "could not finalize manifest: " << e.what() << "\n";
    }
  }
  return code;
}

// --- generate -----------------------------------------------------------------

struct GenerateOptions {
  std::string spec_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples, dim, supers, classes;
  std::optional<double> sigma_x, background_fraction, val_fraction;
  double imbalance = 0.0;
  std::string unseen;
  std::string out = "dataset.json";
  std::string semantic_out;
  double semantic_scale = 0.25;
  std::string manifest;
};

int cmd_generate(const GenerateOptions& o, const std::vector<std::string>& argv) {
  RunManifest manifest(manifest_path_for(o.out, o.manifest), "generate", argv);
  return guarded(&manifest, "", [&] {
    GenerationParams p;
    if (!o.spec_path.empty()) {
      manifest.add_input(o.spec_path);
      p = params_from_json(read_json(o.spec_path));
    }
    if (o.seed) p.seed = *o.seed;
    if (o.samples) p.num_samples = *o.samples;
    if (o.dim) p.dim = *o.dim;
    if (o.supers) p.num_super = *o.supers;
    if (o.classes) p.num_classes = *o.classes;
    if (o.sigma_x) p.sigma_x = *o.sigma_x;
    if (o.background_fraction) p.background_fraction = *o.background_fraction;
    if (o.val_fraction) p.val_fraction = *o.val_fraction;
    const std::vector<std::string> unseen = split_csv(o.unseen);
    manifest.set_config({{"generation", params_to_json(p)},
                         {"imbalance_exponent", o.imbalance},
                         {"unseen", unseen},
                         {"semantic_scale", o.semantic_scale}});
    manifest.set_seed(p.seed);
    manifest.add_output(o.out);
    if (!o.semantic_out.empty()) manifest.add_output(o.semantic_out);
    manifest.begin();

    SyntheticDataset ds = generate(p);
    if (o.imbalance > 0) ds = imbalance_profile(ds, o.imbalance);
    ds.unseen = resolve_classes(ds.tree, unseen);
    std::sort(ds.unseen.begin(), ds.unseen.end());
    ds.validate(o.imbalance > 0 ? 1 : 10);
    write_json(o.out, dataset_to_json(ds));
    if (!o.semantic_out.empty()) write_file(o.semantic_out, semantic_embedding_text(ds, o.semantic_scale));
    print_summary(ds);
    std::cout << "wrote " << o.out << "\n";
  });
}

// --- train / zero-shot ----------------------------------------------------------

struct TrainOptions {
  std::string config_path;
  std::string head;
  std::string dataset;
  std::string prototypes;
  std::string unseen;
  std::string resume;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "run";
  bool quiet = false;
};

ExperimentConfig load_config(const std::string& path, RunManifest& manifest) {
  if (path.empty()) return ExperimentConfig{};
  manifest.add_input(path);
  return config_from_json(read_json(path));
}

int run_train(const TrainOptions& o, const std::vector<std::string>& argv, bool zero_shot) {
  ensure_dir(o.out_dir);
  const std::string out = (fs::path(o.out_dir) / "").string();
  RunManifest manifest(out + "manifest.json", zero_shot ? "zero-shot" : "train", argv);
  return guarded(&manifest, out + "nan_dump.json", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<TrainingState> resumed;
    ExperimentConfig cfg;
    if (!o.resume.empty()) {
      manifest.add_input(o.resume);
      resumed = checkpoint_from_json(read_json(o.resume));
      cfg = resumed->config;
      if (!o.config_path.empty()) throw ConfigError("--resume takes its config from the checkpoint; drop --config");
    } else {
      cfg = load_config(o.config_path, manifest);
    }
    if (!o.head.empty()) {
      const HeadMode h = parse_head_mode(o.head);
      if (resumed && h != cfg.head) throw ConfigError("--head differs from the checkpoint's head");
      cfg.head = h;
    }
    if (!o.dataset.empty()) cfg.dataset_path = o.dataset;
    if (!o.unseen.empty()) cfg.unseen = split_csv(o.unseen);
    if (o.epochs) cfg.epochs = *o.epochs;
    if (o.seed) {
      if (resumed) throw ConfigError("--seed cannot change a resumed run");
      cfg.seed = *o.seed;
    }
    if (!o.prototypes.empty()) {
      cfg.prototype_path = o.prototypes;
      cfg.d_min_policy = DMinPolicy::min_inter_class;
    }
    if (zero_shot) {
      if (cfg.prototype_path.empty()) throw ConfigError("zero-shot needs --prototypes (or prototype_path in the config)");
      cfg.d_min_policy = DMinPolicy::min_inter_class;
    }
    cfg.validate();
    if (resumed) {
      if (cfg.epochs < resumed->epoch)
        throw ConfigError("--epochs " + std::to_string(cfg.epochs) + " is before the checkpoint epoch " +
                          std::to_string(resumed->epoch));
      resumed->config = cfg;
    }

    std::optional<PrototypeBank> fixed = resumed ? std::nullopt : fixed_bank_for(cfg, manifest);
    if (fixed && zero_shot) cfg.head = fixed->mode();
    const SyntheticDataset ds = dataset_for(cfg, manifest);
    if (zero_shot && cfg.unseen.empty())
      for (int u : ds.unseen) cfg.unseen.push_back(ds.tree.leaf_names[static_cast<std::size_t>(u)]);
    manifest.set_config(config_to_json(cfg));
    manifest.set_seed(cfg.seed);
    manifest.add_output(out + "checkpoint.json");
    manifest.add_output(out + "metrics.json");
    manifest.add_output(out + "metrics.csv");
    manifest.begin();

    const HoldoutSplit split = holdout_unseen(ds, resolve_classes(ds.tree, cfg.unseen));
    if (fixed) (void)align_bank(*fixed, ds.tree);  // every class, seen or unseen, needs a prototype
    TrainingState state = resumed ? std::move(*resumed) : init_training(cfg, split.train, fixed);
    run_training(state, split.train, [&](const TrainingState& s) {
      const bool last = s.epoch == s.config.epochs;
      if (!o.quiet) {
        std::cout << "epoch " << s.epoch << " loss " << s.train_loss.back();
        if (!s.evaluations.empty() && s.evaluations.back().epoch == s.epoch)
          std::cout << " val_acc " << s.evaluations.back().accuracy << " val_super_acc "
                    << s.evaluations.back().supercategory_accuracy;
        std::cout << "\n";
      }
      if (s.epoch % s.config.eval_every == 0 || last) {
        const json ck = checkpoint_to_json(s);
        const std::string name = out + checkpoint_name(s.epoch);
        write_json(name, ck);
        manifest.add_output(name);
        write_json(out + "checkpoint.json", ck);
      }
    });
    write_json(out + "checkpoint.json", checkpoint_to_json(state));
    MetricsReport report = make_report(state, split.eval);
    report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json(out + "metrics.json", metrics_document(report, cfg));
    manifest.set_result("wall_clock_seconds", report.wall_clock_seconds);
    manifest.set_result("epochs_completed", state.epoch);
    manifest.set_result("final_accuracy", report.final_eval.accuracy);
    write_file(out + "metrics.csv", metrics_csv(report));
    const EvaluationResult& e = report.final_eval;
    std::cout << "final val accuracy " << e.accuracy << ", supercategory accuracy " << e.supercategory_accuracy;
    if (e.harmonic_mean)
      std::cout << ", seen " << *e.seen_accuracy << ", unseen " << *e.unseen_accuracy << ", HM " << *e.harmonic_mean;
    std::cout << " (" << std::setprecision(3) << report.wall_clock_seconds << " s)\n";
  });
}

// --- evaluate -------------------------------------------------------------------

struct EvaluateOptions {
  std::string checkpoint;
  std::string dataset;
  std::string split = "val";
  std::string out = "evaluation.json";
  std::size_t top_k = 3;
  std::string dump;
  std::string manifest;
};

int cmd_evaluate(const EvaluateOptions& o, const std::vector<std::string>& argv) {
  RunManifest manifest(manifest_path_for(o.out, o.manifest), "evaluate", argv);
  return guarded(&manifest, "", [&] {
    if (o.split != "val" && o.split != "train") throw ConfigError("--split must be 'val' or 'train'");
    manifest.add_input(o.checkpoint);
    const TrainingState s = checkpoint_from_json(read_json(o.checkpoint));
    ExperimentConfig cfg = s.config;
    if (!o.dataset.empty()) cfg.dataset_path = o.dataset;
    const SyntheticDataset full = dataset_for(cfg, manifest);
    manifest.set_config(config_to_json(cfg));
    manifest.set_seed(cfg.seed);
    manifest.add_output(o.out);
    if (!o.dump.empty()) manifest.add_output(o.dump);
    manifest.begin();

    const SyntheticDataset ds = holdout_unseen(full, resolve_classes(full.tree, cfg.unseen)).eval;
    const PrototypeBank bank = align_bank(s.bank, ds.tree);
    const std::vector<std::size_t>& split = o.split == "val" ? ds.val : ds.train;
    const EvaluationResult r = evaluate(bank, s.encoder, ds, split);
    json doc = evaluation_to_json(r);
    doc["split"] = o.split;
    doc["epoch"] = s.epoch;
    doc["head"] = to_string(bank.mode());
    doc["config"] = config_to_json(cfg);
    write_json(o.out, doc);

    if (!o.dump.empty()) {
      const std::size_t k = std::min(o.top_k, bank.num_classes());
      auto rows = json::array();
      for (std::size_t n = 0; n < split.size(); ++n) {
        const std::size_t i = split[n];
        const Classification c = classify(embed(s.encoder, ds.features[i]), bank, k);
        auto top = json::array();
        for (const ScoredClass& sc : c.top_k)
          top.push_back({{"class", bank.class_names()[static_cast<std::size_t>(sc.class_index)]}, {"confidence", sc.confidence}});
        const int truth = ds.labels[i];
        rows.push_back({{"sample", i},
                        {"label", truth == kBackground ? "background" : ds.tree.leaf_names[static_cast<std::size_t>(truth)]},
                        {"predicted", r.predictions[n] == kBackground
                                          ? "background"
                                          : ds.tree.leaf_names[static_cast<std::size_t>(r.predictions[n])]},
                        {"top_k", std::move(top)}});
      }
      write_json(o.dump, {{"k", k}, {"samples", std::move(rows)}});
    }
    std::cout << o.split << " accuracy " << r.accuracy << ", supercategory accuracy " << r.supercategory_accuracy;
    if (r.background_accuracy) std::cout << ", background accuracy " << *r.background_accuracy;
    if (r.harmonic_mean) std::cout << ", seen " << *r.seen_accuracy << ", unseen " << *r.unseen_accuracy << ", HM " << *r.harmonic_mean;
    std::cout << "\n";
  });
}

// --- hubness --------------------------------------------------------------------

struct HubnessOptions {
  std::vector<std::string> inputs;
  std::size_t k = 5;
  std::size_t bins = 20;
  std::string out_dir = "hubness";
};

int cmd_hubness(const HubnessOptions& o, const std::vector<std::string>& argv) {
  ensure_dir(o.out_dir);
  const std::string out = (fs::path(o.out_dir) / "").string();
  RunManifest manifest(out + "manifest.json", "hubness", argv);
  return guarded(&manifest, "", [&] {
    if (o.bins == 0) throw ConfigError("--bins must be positive");
    manifest.set_config({{"k", o.k}, {"bins", o.bins}, {"inputs", o.inputs}});
    std::vector<std::pair<std::string, PrototypeBank>> banks;
    std::map<std::string, int> seen_labels;
    for (const std::string& path : o.inputs) {
      manifest.add_input(path);
      std::string label = fs::path(path).stem().string();
      if (const int n = seen_labels[label]++; n > 0) label += "_" + std::to_string(n + 1);
      banks.emplace_back(label, load_bank(path));
    }
    for (const auto& [label, bank] : banks) {
      manifest.add_output(out + "hubness_" + label + ".json");
      manifest.add_output(out + "hubness_" + label + ".csv");
    }
    manifest.add_output(out + "comparison.json");
    manifest.add_output(out + "comparison.csv");
    manifest.begin();

    auto reports = json::array();
    std::ostringstream csv;
    csv << "label,kind,k,num_prototypes,skewness,max_k_occurrence,mean_distance\n";
    csv << std::setprecision(17);
    std::cout << std::left << std::setw(24) << "label" << std::setw(12) << "kind" << std::setw(6) << "k" << std::setw(14)
              << "skewness" << std::setw(10) << "max N_k" << "mean distance\n";
    for (const auto& [label, bank] : banks) {
      const HubnessReport r = hubness_report(bank, o.k, o.bins, label);
      const json j = report_to_json(r);
      write_json(out + "hubness_" + label + ".json", j);
      write_file(out + "hubness_" + label + ".csv", histogram_csv(r.histogram));
      const std::size_t max_count = *std::max_element(r.occurrence.counts.begin(), r.occurrence.counts.end());
      reports.push_back({{"label", label},
                         {"kind", to_string(r.kind)},
                         {"k", o.k},
                         {"num_prototypes", bank.num_classes()},
                         {"skewness", r.occurrence.skewness},
                         {"max_k_occurrence", max_count},
                         {"mean_distance", r.mean_distance}});
      csv << label << ',' << to_string(r.kind) << ',' << o.k << ',' << bank.num_classes() << ',' << r.occurrence.skewness
          << ',' << max_count << ',' << r.mean_distance << '\n';
      std::cout << std::setw(24) << label << std::setw(12) << to_string(r.kind) << std::setw(6) << o.k << std::setw(14)
                << r.occurrence.skewness << std::setw(10) << max_count << r.mean_distance << "\n";
    }
    write_json(out + "comparison.json", {{"k", o.k}, {"reports", std::move(reports)}});
    write_file(out + "comparison.csv", csv.str());
  });
}

// --- prototype import / export -------------------------------------------------

struct ImportOptions {
  std::string input;
  std::string head = "hyperbolic";
  bool already_hyperbolic = false;
  double delta = kDefaultDelta;
  double temperature = kDefaultTemperature;
  std::string out = "prototypes.json";
  std::string manifest;
};

int cmd_import(const ImportOptions& o, const std::vector<std::string>& argv) {
  RunManifest manifest(manifest_path_for(o.out, o.manifest), "import-prototypes", argv);
  return guarded(&manifest, "", [&] {
    manifest.add_input(o.input);
    manifest.set_config({{"head", o.head},
                         {"already_hyperbolic", o.already_hyperbolic},
                         {"delta", o.delta},
                         {"temperature", o.temperature}});
    manifest.add_output(o.out);
    manifest.begin();
    const PrototypeBank bank =
        import_prototypes(parse_embedding_text(read_file(o.input)), parse_head_mode(o.head), o.already_hyperbolic, o.delta,
                          o.temperature);
    write_json(o.out, bank_to_json(bank));
    std::cout << "imported " << bank.num_classes() << " prototypes (" << to_string(bank.mode()) << ", dim "
              << bank.feature_dim() << "), d_min " << std::setprecision(17) << bank.d_min() << "\n";
  });
}

struct ExportOptions {
  std::string input;
  std::string out = "prototypes.txt";
  std::string manifest;
};

int cmd_export(const ExportOptions& o, const std::vector<std::string>& argv) {
  RunManifest manifest(manifest_path_for(o.out, o.manifest), "export-prototypes", argv);
  return guarded(&manifest, "", [&] {
    manifest.add_input(o.input);
    manifest.add_output(o.out);
    manifest.begin();
    const PrototypeBank bank = load_bank(o.input);
    write_file(o.out, export_prototypes(bank));
    std::cout << "exported " << bank.num_classes() << " prototypes to " << o.out << "\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Hyperbolic prototype classification heads: experiments on synthetic hierarchical data"};
  app.set_version_flag("--version", std::string(HYPERDET_VERSION));
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic hierarchical dataset");
  g->add_option("--spec", gen.spec_path, "Generation parameters JSON (flags override its fields)");
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--samples", gen.samples, "Total number of samples (default 8000)");
  g->add_option("--dim", gen.dim, "Feature dimension (default 16)");
  g->add_option("--supercategories", gen.supers, "Number of supercategories (default 4)");
  g->add_option("--classes", gen.classes, "Number of leaf classes (default 16)");
  g->add_option("--sigma-x", gen.sigma_x, "Within-class noise (default 0.5)");
  g->add_option("--background-fraction", gen.background_fraction, "Fraction of background samples (default 0.2)");
  g->add_option("--val-fraction", gen.val_fraction, "Validation fraction (default 0.2)");
  g->add_option("--imbalance", gen.imbalance, "Power-law exponent applied to the training split (0 = balanced)");
  g->add_option("--unseen", gen.unseen, "Comma-separated leaf classes to mark as unseen, e.g. leaf_12,leaf_15");
  g->add_option("--out", gen.out, "Dataset output file")->capture_default_str();
  g->add_option("--semantic-out", gen.semantic_out, "Also write per-class semantic embeddings (text format)");
  g->add_option("--semantic-scale", gen.semantic_scale, "Scale applied to leaf means in the semantic file")
      ->capture_default_str();
  g->add_option("--manifest", gen.manifest, "Manifest path (default <out>.manifest.json)");

  TrainOptions tr;
  auto add_train_flags = [&](CLI::App* c) {
    c->add_option("--config", tr.config_path, "Experiment config JSON (defaults are used when omitted)");
    c->add_option("--head", tr.head, "hyperbolic | euclidean-linear | euclidean-cosine");
    c->add_option("--dataset", tr.dataset, "Dataset file (overrides the config)");
    c->add_option("--prototypes", tr.prototypes, "Frozen prototype bank JSON; selects the min-inter-class d_min policy");
    c->add_option("--unseen", tr.unseen, "Comma-separated classes held out of training");
    c->add_option("--epochs", tr.epochs, "Epoch budget (overrides the config)");
    c->add_option("--seed", tr.seed, "Training seed (overrides the config)");
    c->add_option("--out-dir", tr.out_dir, "Output directory for checkpoints, metrics and manifest")->capture_default_str();
    c->add_flag("--quiet", tr.quiet, "Only print the final summary");
  };
  auto* t = app.add_subcommand("train", "Train an encoder and classification head");
  add_train_flags(t);
  t->add_option("--resume", tr.resume, "Continue from a checkpoint; epoch numbering continues");
  auto* z = app.add_subcommand("zero-shot", "Train against frozen semantic prototypes and report seen/unseen accuracy");
  add_train_flags(z);

  EvaluateOptions ev;
  auto* e = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint JSON")->required();
  e->add_option("--dataset", ev.dataset, "Dataset file (default: the checkpoint config's dataset)");
  e->add_option("--split", ev.split, "val | train")->capture_default_str();
  e->add_option("--out", ev.out, "Evaluation report JSON")->capture_default_str();
  e->add_option("--top-k", ev.top_k, "Entries per sample in the top-k dump")->capture_default_str();
  e->add_option("--dump", ev.dump, "Write per-sample top-k predictions to this file");
  e->add_option("--manifest", ev.manifest, "Manifest path (default <out>.manifest.json)");

  HubnessOptions hb;
  auto* h = app.add_subcommand("hubness", "Prototype distance histograms and k-occurrence skewness");
  h->add_option("inputs", hb.inputs, "Checkpoints or prototype bank files")->required();
  h->add_option("-k,--k", hb.k, "Neighbours per prototype")->capture_default_str();
  h->add_option("--bins", hb.bins, "Histogram bins")->capture_default_str();
  h->add_option("--out-dir", hb.out_dir, "Output directory")->capture_default_str();

  ImportOptions im;
  auto* i = app.add_subcommand("import-prototypes", "Build a frozen prototype bank from a text embedding file");
  i->add_option("input", im.input, "Text file: one line per class, `name v1 v2 ... vn`")->required();
  i->add_option("--head", im.head, "hyperbolic | euclidean-linear | euclidean-cosine")->capture_default_str();
  i->add_flag("--already-hyperbolic", im.already_hyperbolic,
              "Rows are (n+1) hyperboloid coordinates instead of tangent vectors at the origin");
  i->add_option("--delta", im.delta, "Logit offset")->capture_default_str();
  i->add_option("--temperature", im.temperature, "Cosine head temperature")->capture_default_str();
  i->add_option("--out", im.out, "Prototype bank JSON")->capture_default_str();
  i->add_option("--manifest", im.manifest, "Manifest path (default <out>.manifest.json)");

  ExportOptions ex;
  auto* x = app.add_subcommand("export-prototypes",
                               "Write a bank's prototypes as text (hyperbolic banks as hyperboloid coordinates)");
  x->add_option("input", ex.input, "Checkpoint or prototype bank JSON")->required();
  x->add_option("--out", ex.out, "Text output file")->capture_default_str();
  x->add_option("--manifest", ex.manifest, "Manifest path (default <out>.manifest.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*g) return cmd_generate(gen, args);
    if (*t) return run_train(tr, args, false);
    if (*z) return run_train(tr, args, true);
    if (*e) return cmd_evaluate(ev, args);
    if (*h) return cmd_hubness(hb, args);
    if (*i) return cmd_import(im, args);
    if (*x) return cmd_export(ex, args);
  } catch (const ConfigError& err) {
    // Raised before a manifest exists (e.g. an unwritable output directory).
    std::cerr << "error: " << err.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
