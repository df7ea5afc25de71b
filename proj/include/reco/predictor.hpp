#pragma once

#include <array>
#include <utility>

#include <json.hpp>

#include "reco/tensor.hpp"

namespace reco {

struct HeadParams {
  Tensor w_t, b_t;  // threshold head, m x 2
  Tensor w_s, b_s;  // scene head, m x 2
  Tensor w_1, b_1;  // reliability intermediate 1, 2m x m
  Tensor w_2, b_2;  // reliability intermediate 2, 2m x m
  Tensor w_c, b_c;  // chain head, 2m x 2
};

// Index 0 of each distribution is "problem absent" / "chain unreliable",
// index 1 "problem present" / "chain reliable".
struct PredictionOutput {
  Tensor p_threshold;
  Tensor p_scene;
  Tensor p_chain;
  Tensor p1;
  Tensor p2;
};

// (threshold, scene) existence distributions from the final gate estimates.
inline std::pair<Tensor, Tensor> problem_heads(Trace& tr, const Tensor& alpha_T, const Tensor& beta_T,
                                               const HeadParams& p) {
  Tensor p_threshold = softmax2(tr, affine(tr, beta_T, p.w_t, p.b_t));
  Tensor p_scene = softmax2(tr, affine(tr, alpha_T, p.w_s, p.b_s));
  return {std::move(p_threshold), std::move(p_scene)};
}

struct ReliabilityOut {
  Tensor p_chain;
  Tensor p1;
  Tensor p2;
};

inline ReliabilityOut reliability_head(Trace& tr, const Tensor& h_pen, const Tensor& h_last, const Tensor& u_in_last,
                                       const Tensor& contradiction_T, const HeadParams& p) {
  ReliabilityOut out;
  out.p1 = tanh(tr, affine(tr, concat(tr, h_pen, u_in_last), p.w_1, p.b_1));
  out.p2 = tanh(tr, affine(tr, concat(tr, h_last, contradiction_T), p.w_2, p.b_2));
  out.p_chain = softmax2(tr, affine(tr, concat(tr, out.p1, out.p2), p.w_c, p.b_c));
  return out;
}

struct Diagnosis {
  bool reliable = false;
  bool scene_drift = false;
  bool threshold_effect = false;
  std::array<double, 2> p_chain{};
  std::array<double, 2> p_scene{};
  std::array<double, 2> p_threshold{};
};

// Argmax decisions; an exact tie picks index 0 (unreliable / problem absent).
inline Diagnosis diagnose(const PredictionOutput& po) {
  Diagnosis d;
  d.p_chain = {po.p_chain[0], po.p_chain[1]};
  d.p_scene = {po.p_scene[0], po.p_scene[1]};
  d.p_threshold = {po.p_threshold[0], po.p_threshold[1]};
  d.reliable = po.p_chain[1] > po.p_chain[0];
  d.scene_drift = po.p_scene[1] > po.p_scene[0];
  d.threshold_effect = po.p_threshold[1] > po.p_threshold[0];
  return d;
}

inline nlohmann::ordered_json diagnosis_to_json(const Diagnosis& d) {
  nlohmann::ordered_json j;
  j["prediction"] = d.reliable ? "Reliable" : "Unreliable";
  j["scene_drift"] = d.scene_drift;
  j["threshold_effect"] = d.threshold_effect;
  j["probabilities"]["chain"] = d.p_chain;
  j["probabilities"]["scene"] = d.p_scene;
  j["probabilities"]["threshold"] = d.p_threshold;
  return j;
}

}  // namespace reco
