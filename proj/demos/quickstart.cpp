// Lorentz geometry and the hyperbolic classification head on hand-made points.

#include <cstdio>

#include "hyperdet/heads.hpp"

using namespace hyperdet;

int main() {
  // Three prototypes mapped from tangent coordinates at the origin.
  std::vector<HyperboloidPoint> protos = {exp_map_origin(Vector{1.0, 0.0}), exp_map_origin(Vector{-1.0, 0.0}),
                                          exp_map_origin(Vector{0.0, 1.5})};
  const PrototypeBank bank = PrototypeBank::hyperbolic({"cat", "dog", "car"}, protos, /*frozen=*/true);
  std::printf("d_min = %.6f (min pairwise prototype distance)\n", bank.d_min());

  const HyperboloidPoint x = exp_map_origin(Vector{0.9, 0.1});
  std::printf("<x,x> + 1 = %.2e\n", lorentz_inner(x.coords(), x.coords()) + 1.0);

  // log then exp returns to the same point.
  const TangentVector u = log_map_at(protos[0], x);
  const HyperboloidPoint back = exp_map_at(protos[0], u);
  std::printf("d(x, exp(log(x))) = %.2e\n", hyperbolic_distance(x, back));

  const Classification c = classify(Vector{0.9, 0.1}, bank, 3);
  for (const ScoredClass& s : c.top_k)
    std::printf("  %-4s p = %.4f\n", bank.class_names()[static_cast<std::size_t>(s.class_index)].c_str(), s.confidence);
  std::printf("predicted: %s\n", bank.class_names()[static_cast<std::size_t>(c.predicted)].c_str());

  // Far from every prototype all confidences fall below 0.5: background.
  const Classification far = classify(Vector{0.0, -4.0}, bank, 1);
  std::printf("far feature: nearest %s, confidence %.4f -> %s\n",
              bank.class_names()[static_cast<std::size_t>(far.predicted)].c_str(), far.confidence,
              far.confidence > 0.5 ? "accepted" : "background");
}
