#pragma once
// Two-layer rectified-linear perceptron mapping input features to the
// embedding consumed by a classification head.

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "hyperdet/errors.hpp"
#include "hyperdet/heads.hpp"

namespace hyperdet {

struct EncoderParams {
  std::size_t n_in = 0;
  std::size_t hidden = 0;
  std::size_t n_emb = 0;
  Vector w1, b1;  // hidden x n_in, hidden
  Vector w2, b2;  // n_emb x hidden, n_emb

  static EncoderParams init(std::size_t n_in, std::size_t hidden, std::size_t n_emb, Rng& rng) {
    if (n_in == 0 || hidden == 0 || n_emb == 0) throw ParameterError("encoder: layer sizes must be positive");
    EncoderParams e{n_in, hidden, n_emb, Vector(hidden * n_in), Vector(hidden, 0.0), Vector(n_emb * hidden),
                    Vector(n_emb, 0.0)};
    std::uniform_real_distribution<double> u1(-std::sqrt(6.0 / static_cast<double>(n_in)),
                                              std::sqrt(6.0 / static_cast<double>(n_in)));
    std::uniform_real_distribution<double> u2(-std::sqrt(3.0 / static_cast<double>(hidden)),
                                              std::sqrt(3.0 / static_cast<double>(hidden)));
    for (double& w : e.w1) w = u1(rng);
    for (double& w : e.w2) w = u2(rng);
    return e;
  }

  void validate() const {
    if (w1.size() != hidden * n_in || b1.size() != hidden || w2.size() != n_emb * hidden || b2.size() != n_emb)
      throw DimensionError("encoder: inconsistent parameter shapes");
    for (const Vector* v : {&w1, &b1, &w2, &b2})
      if (!detail::all_finite(*v)) throw NumericalError("encoder: non-finite parameter");
  }

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

struct EncoderActivations {
  Vector pre;  // hidden pre-activation
  Vector out;  // embedding
};

inline EncoderActivations encoder_forward(const EncoderParams& e, std::span<const double> x) {
  if (x.size() != e.n_in) throw DimensionError("encoder: input dimension");
  EncoderActivations a{Vector(e.hidden), Vector(e.n_emb)};
  for (std::size_t h = 0; h < e.hidden; ++h) {
    double s = e.b1[h];
    const double* row = &e.w1[h * e.n_in];
    for (std::size_t i = 0; i < e.n_in; ++i) s += row[i] * x[i];
    a.pre[h] = s;
  }
  for (std::size_t o = 0; o < e.n_emb; ++o) {
    double s = e.b2[o];
    const double* row = &e.w2[o * e.hidden];
    for (std::size_t h = 0; h < e.hidden; ++h) s += row[h] * std::max(0.0, a.pre[h]);
    a.out[o] = s;
  }
  return a;
}

/// Accumulates parameter gradients of a scalar whose gradient w.r.t. the
/// embedding is `grad_out` into `grads` (same shapes as the encoder).
inline void encoder_backward(const EncoderParams& e, std::span<const double> x, const EncoderActivations& a,
                             std::span<const double> grad_out, EncoderParams& grads) {
  Vector gh(e.hidden, 0.0);
  for (std::size_t o = 0; o < e.n_emb; ++o) {
    const double g = grad_out[o];
    grads.b2[o] += g;
    double* grow = &grads.w2[o * e.hidden];
    const double* row = &e.w2[o * e.hidden];
    for (std::size_t h = 0; h < e.hidden; ++h) {
      grow[h] += g * std::max(0.0, a.pre[h]);
      gh[h] += g * row[h];
    }
  }
  for (std::size_t h = 0; h < e.hidden; ++h) {
    if (a.pre[h] <= 0) continue;
    grads.b1[h] += gh[h];
    double* grow = &grads.w1[h * e.n_in];
    for (std::size_t i = 0; i < e.n_in; ++i) grow[i] += gh[h] * x[i];
  }
}

inline EncoderParams zeros_like(const EncoderParams& e) {
  return EncoderParams{e.n_in, e.hidden, e.n_emb, Vector(e.w1.size(), 0.0), Vector(e.b1.size(), 0.0),
                       Vector(e.w2.size(), 0.0), Vector(e.b2.size(), 0.0)};
}

inline nlohmann::json encoder_to_json(const EncoderParams& e) {
  return {{"n_in", e.n_in}, {"hidden", e.hidden}, {"n_emb", e.n_emb}, {"activation", "relu"},
          {"w1", e.w1},     {"b1", e.b1},         {"w2", e.w2},       {"b2", e.b2}};
}

inline EncoderParams encoder_from_json(const nlohmann::json& j) {
  EncoderParams e{j.at("n_in").get<std::size_t>(), j.at("hidden").get<std::size_t>(),
                  j.at("n_emb").get<std::size_t>(), j.at("w1").get<Vector>(),
                  j.at("b1").get<Vector>(),         j.at("w2").get<Vector>(),
                  j.at("b2").get<Vector>()};
  e.validate();
  return e;
}

}  // namespace hyperdet
