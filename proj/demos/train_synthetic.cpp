// Train both heads on a small synthetic hierarchy and compare them.

#include <cstdio>

#include "hyperdet/hubness.hpp"
#include "hyperdet/training.hpp"

using namespace hyperdet;

int main() {
  ExperimentConfig cfg;
  cfg.seed = cfg.dataset.seed = 3;
  const SyntheticDataset ds = generate(cfg.dataset);
  std::printf("%zu samples, %zu classes under %zu supercategories\n", ds.features.size(), ds.num_classes(),
              ds.tree.num_super());

  for (HeadMode head : {HeadMode::hyperbolic, HeadMode::euclidean_linear}) {
    cfg.head = head;
    const TrainResult r = train(cfg, ds, std::nullopt, [](const TrainingState& s) {
      if (s.epoch % 10 == 0) std::printf("  epoch %2zu  loss %.4f\n", s.epoch, s.train_loss.back());
    });
    const EvaluationResult& e = r.report.final_eval;
    const HubnessReport h = hubness_report(r.state.bank);
    std::printf("%s: accuracy %.4f, supercategory accuracy %.4f, k-occurrence skewness %.3f (%s)\n",
                to_string(head).c_str(), e.accuracy, e.supercategory_accuracy, h.occurrence.skewness,
                to_string(h.kind).c_str());
    if (head == HeadMode::hyperbolic)
      std::printf("  intra/inter supercategory distance ratio %.4f\n", hierarchy_ratio(r.state.bank, ds.tree));
  }
}
