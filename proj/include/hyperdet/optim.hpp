#pragma once
// Riemannian SGD for hyperboloid parameters and decoupled-weight-decay Adam
// for Euclidean ones.

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hyperdet/errors.hpp"
#include "hyperdet/lorentz.hpp"

namespace hyperdet {

/// One retraction step: scale the ambient gradient by the inverse metric
/// diag(-1, 1, ..., 1), project onto T_x, then follow the geodesic backwards.
inline HyperboloidPoint riemannian_step(const HyperboloidPoint& x, std::span<const double> ambient_grad, double lr) {
  if (ambient_grad.size() != x.ambient_dim()) throw DimensionError("riemannian_step: gradient size");
  if (!detail::all_finite(ambient_grad)) throw NumericalError("riemannian_step: non-finite gradient");
  Vector scaled(ambient_grad.begin(), ambient_grad.end());
  scaled[0] = -scaled[0];
  TangentVector u = tangent_project(x, scaled);
  for (double& c : u.components) c *= -lr;
  return project_to_manifold(exp_map_at(x, u).coords());
}

/// The Riemannian gradient that riemannian_step descends along.
inline TangentVector riemannian_gradient(const HyperboloidPoint& x, std::span<const double> ambient_grad) {
  Vector scaled(ambient_grad.begin(), ambient_grad.end());
  scaled[0] = -scaled[0];
  return tangent_project(x, scaled);
}

struct AdamMoments {
  Vector first;
  Vector second;
  friend bool operator==(const AdamMoments&, const AdamMoments&) = default;
};

struct OptimizerState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  std::optional<double> grad_clip_norm;
  long step_count = 0;
  // Keyed by parameter name, so independent tensors never share buffers.
  std::map<std::string, AdamMoments> moments;

  void advance() { ++step_count; }

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// AdamW update for one parameter tensor. Call state.advance() once per
/// iteration before updating the tensors of that iteration.
inline Vector euclidean_step(std::span<const double> param, std::span<const double> grad, OptimizerState& state,
                             const std::string& slot) {
  if (param.size() != grad.size()) throw DimensionError("euclidean_step: param/grad size mismatch");
  if (state.step_count < 1) throw ContractError("euclidean_step: call advance() first");
  AdamMoments& m = state.moments[slot];
  if (m.first.empty()) {
    m.first.assign(param.size(), 0.0);
    m.second.assign(param.size(), 0.0);
  }
  if (m.first.size() != param.size()) throw DimensionError("euclidean_step: slot '" + slot + "' changed shape");
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  Vector out(param.begin(), param.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    m.first[i] = state.beta1 * m.first[i] + (1.0 - state.beta1) * grad[i];
    m.second[i] = state.beta2 * m.second[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double mh = m.first[i] / bc1;
    const double vh = m.second[i] / bc2;
    out[i] -= state.learning_rate * (mh / (std::sqrt(vh) + state.epsilon) + state.weight_decay * param[i]);
  }
  return out;
}

/// Scales every gradient by max_norm / global_norm when the joint L2 norm
/// exceeds max_norm. Returns the norm before clipping.
inline double clip_gradients(std::span<Vector*> grads, double max_norm) {
  if (!(max_norm > 0)) throw ParameterError("clip_gradients: max_norm must be > 0");
  double sq = 0.0;
  for (const Vector* g : grads)
    for (double x : *g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double k = max_norm / norm;
    for (Vector* g : grads)
      for (double& x : *g) x *= k;
  }
  return norm;
}

inline nlohmann::json optimizer_to_json(const OptimizerState& s) {
  nlohmann::json j;
  j["learning_rate"] = s.learning_rate;
  j["beta1"] = s.beta1;
  j["beta2"] = s.beta2;
  j["epsilon"] = s.epsilon;
  j["weight_decay"] = s.weight_decay;
  j["grad_clip_norm"] = s.grad_clip_norm ? nlohmann::json(*s.grad_clip_norm) : nlohmann::json(nullptr);
  j["step_count"] = s.step_count;
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [k, v] : s.moments) m[k] = {{"first", v.first}, {"second", v.second}};
  j["moments"] = std::move(m);
  return j;
}

inline OptimizerState optimizer_from_json(const nlohmann::json& j) {
  OptimizerState s;
  s.learning_rate = j.at("learning_rate").get<double>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.epsilon = j.at("epsilon").get<double>();
  s.weight_decay = j.at("weight_decay").get<double>();
  if (!j.at("grad_clip_norm").is_null()) s.grad_clip_norm = j.at("grad_clip_norm").get<double>();
  s.step_count = j.at("step_count").get<long>();
  for (const auto& [k, v] : j.at("moments").items())
    s.moments[k] = {v.at("first").get<Vector>(), v.at("second").get<Vector>()};
  return s;
}

}  // namespace hyperdet
