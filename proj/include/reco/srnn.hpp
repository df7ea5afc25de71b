#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "reco/tensor.hpp"

namespace reco {

struct SrnnParams {
  Tensor w_m1, b_m1;  // scene drift, m x m
  Tensor w_m2, b_m2;  // scene drift, m x m
  Tensor w_h, b_h;    // hidden gate, 2m x m, shared by both aggregations
  Tensor w_beta;      // threshold estimator, 2m x m, no bias
  Tensor w_e, b_e;    // exogenous gate, m x m
  Tensor w_o, b_o;    // output gate, 2m x m
};

// One recurrent step consumes three consecutive endogenous representations
// and two consecutive exogenous representations.
struct SrnnInput {
  Tensor h_a, h_b, h_c;
  Tensor u_a, u_b;
};

struct SrnnStepOutput {
  Tensor alpha;    // scene-drift estimate, (0,1)^m
  Tensor beta;     // threshold-effect estimate, (0,1)^m
  Tensor h_b_agg;  // aggregated endogenous pair (a,b)
  Tensor h_c_agg;  // aggregated endogenous pair (b,c)
  Tensor contradiction;  // E, (-1,1)^m
  Tensor u_agg;          // aggregated exogenous, (-1,1)^m
};

// Final outputs after n-2 steps; u_in_last is the exogenous first-slot input
// of the final step (u_1 when n == 3), consumed by the reliability head.
struct SrnnFinal {
  Tensor alpha_T;
  Tensor beta_T;
  Tensor h_pen;
  Tensor h_last;
  Tensor contradiction_T;
  Tensor u_in_last;
};

// Test hooks that force the gate values instead of computing them.
struct SrnnOverrides {
  const Tensor* alpha = nullptr;
  const Tensor* beta = nullptr;
};

inline Tensor scene_drift(Trace& tr, const Tensor& u_a, const Tensor& u_b, const SrnnParams& p) {
  return sigmoid(tr, sub(tr, affine(tr, u_a, p.w_m1, p.b_m1), affine(tr, u_b, p.w_m2, p.b_m2)));
}

inline std::pair<Tensor, Tensor> hidden_gate(Trace& tr, const Tensor& h_a, const Tensor& h_b, const Tensor& h_c,
                                             const SrnnParams& p) {
  Tensor h_b_agg = tanh(tr, affine(tr, concat(tr, h_a, h_b), p.w_h, p.b_h));
  Tensor h_c_agg = tanh(tr, affine(tr, concat(tr, h_b, h_c), p.w_h, p.b_h));
  return {std::move(h_b_agg), std::move(h_c_agg)};
}

// Threshold effect is only worth discussing when the scene is consistent, so
// the pre-activation is gated by (1 - alpha).
inline Tensor threshold_effect(Trace& tr, const Tensor& u_a, const Tensor& u_b, const Tensor& h_b_agg,
                               const Tensor& h_c_agg, const Tensor& alpha, const SrnnParams& p) {
  const Tensor d = sub(tr, concat(tr, u_b, h_c_agg), concat(tr, u_a, h_b_agg));
  const Tensor z = affine(tr, d, p.w_beta, Tensor::zeros({alpha.numel()}));
  const Tensor gate = sub(tr, Tensor::full({alpha.numel()}, 1.0), alpha);
  return sigmoid(tr, mul(tr, z, gate));
}

// Contradiction of u_a against u_b, with the problem estimates as the mixing
// coefficient on u_a.
inline Tensor exogenous_gate(Trace& tr, const Tensor& u_a, const Tensor& u_b, const Tensor& alpha, const Tensor& beta,
                             const SrnnParams& p) {
  const Tensor coeff = scale(tr, add(tr, alpha, beta), 0.5);
  return tanh(tr, affine(tr, add(tr, u_b, mul(tr, coeff, u_a)), p.w_e, p.b_e));
}

inline Tensor output_gate(Trace& tr, const Tensor& u_a, const Tensor& contradiction, const SrnnParams& p) {
  return tanh(tr, affine(tr, concat(tr, u_a, contradiction), p.w_o, p.b_o));
}

inline SrnnStepOutput srnn_step(Trace& tr, const SrnnInput& in, const SrnnParams& p,
                                const SrnnOverrides* ov = nullptr) {
  SrnnStepOutput out;
  out.alpha = (ov && ov->alpha) ? *ov->alpha : scene_drift(tr, in.u_a, in.u_b, p);
  auto [h_b_agg, h_c_agg] = hidden_gate(tr, in.h_a, in.h_b, in.h_c, p);
  out.h_b_agg = std::move(h_b_agg);
  out.h_c_agg = std::move(h_c_agg);
  out.beta = (ov && ov->beta) ? *ov->beta
                              : threshold_effect(tr, in.u_a, in.u_b, out.h_b_agg, out.h_c_agg, out.alpha, p);
  out.contradiction = exogenous_gate(tr, in.u_a, in.u_b, out.alpha, out.beta, p);
  out.u_agg = output_gate(tr, in.u_a, out.contradiction, p);
  return out;
}

// Runs the recurrence over a chain of n events and n-1 exogenous samples:
// step 1 consumes <h_1, h_2, h_3, u_1, u_2>, step t+1 consumes the previous
// step's aggregates together with the next event and latent.
inline SrnnFinal srnn_forward(Trace& tr, const std::vector<Tensor>& events, const std::vector<Tensor>& latents,
                              const SrnnParams& p) {
  const std::size_t n = events.size();
  if (n < 3 || n > 5) throw ShapeError("srnn_forward: chain length must be 3..5, got " + std::to_string(n));
  if (latents.size() + 1 != n)
    throw ShapeError("srnn_forward: expected " + std::to_string(n - 1) + " latents, got " +
                     std::to_string(latents.size()));

  SrnnInput in{events[0], events[1], events[2], latents[0], latents[1]};
  SrnnFinal fin;
  for (std::size_t t = 0; t + 2 < n; ++t) {
    const SrnnStepOutput step = srnn_step(tr, in, p);
    fin.alpha_T = step.alpha;
    fin.beta_T = step.beta;
    fin.h_pen = step.h_b_agg;
    fin.h_last = step.h_c_agg;
    fin.contradiction_T = step.contradiction;
    fin.u_in_last = in.u_a;
    if (t + 3 < n) in = SrnnInput{step.h_b_agg, step.h_c_agg, events[t + 3], step.u_agg, latents[t + 2]};
  }
  return fin;
}

}  // namespace reco
