#pragma once

#include <vector>

#include "reco/data.hpp"
#include "reco/eacvae.hpp"
#include "reco/predictor.hpp"
#include "reco/tensor.hpp"

namespace reco {

// Probabilities are clamped here before every log so no loss can hit -inf.
inline constexpr double kProbFloor = 1e-12;

inline Tensor log_prob(Trace& tr, const Tensor& dist, std::size_t idx) {
  return log(tr, clamp_min(tr, index(tr, dist, idx), kProbFloor));
}

// Cross entropy of the reliability label against the chain distribution.
inline Tensor chain_loss(Trace& tr, const Tensor& p_chain, const InstanceLabel& label) {
  label.validate();
  return scale(tr, log_prob(tr, p_chain, label.reliable ? 1 : 0), -1.0);
}

// Absolute log-difference tying the problem heads to the chain head:
//   reliable               | log(PT0 * PS0) - log(PC1) |
//   unreliable, scene      | log(PS1 * PT0) - log(PC0) |
//   unreliable, threshold  | log(PT1 * PS0) - log(PC0) |
inline Tensor logic_loss(Trace& tr, const Tensor& p_threshold, const Tensor& p_scene, const Tensor& p_chain,
                         const InstanceLabel& label) {
  label.validate();
  Tensor lhs, rhs;
  if (label.reliable) {
    lhs = add(tr, log_prob(tr, p_threshold, 0), log_prob(tr, p_scene, 0));
    rhs = log_prob(tr, p_chain, 1);
  } else if (label.problem == Problem::scene) {
    lhs = add(tr, log_prob(tr, p_scene, 1), log_prob(tr, p_threshold, 0));
    rhs = log_prob(tr, p_chain, 0);
  } else {
    lhs = add(tr, log_prob(tr, p_threshold, 1), log_prob(tr, p_scene, 0));
    rhs = log_prob(tr, p_chain, 0);
  }
  return abs(tr, sub(tr, lhs, rhs));
}

// Replacement supervision for the problem heads: one cross entropy per head.
inline Tensor ablation_problem_ce(Trace& tr, const Tensor& p_threshold, const Tensor& p_scene,
                                  const InstanceLabel& label) {
  label.validate();
  const std::size_t t_idx = label.problem == Problem::threshold ? 1 : 0;
  const std::size_t s_idx = label.problem == Problem::scene ? 1 : 0;
  return add(tr, scale(tr, log_prob(tr, p_threshold, t_idx), -1.0),
             scale(tr, log_prob(tr, p_scene, s_idx), -1.0));
}

struct LossConfig {
  double lambda1 = 1.0;
  double lambda2 = 0.01;
  bool no_logic_supervision = false;
  bool problem_ce_instead_of_logic = false;
  KlDirection kl_direction = KlDirection::prior_to_posterior;
};

struct LossBreakdown {
  Tensor total;
  Tensor l_chain;
  Tensor l_logic;
  Tensor l_kl;
  double lambda1 = 1.0;
  double lambda2 = 0.01;
};

// total = l_chain + lambda1 * l_logic + lambda2 * l_kl, assembled exactly in
// that form on the trace. One GaussianPair per causal pair; an empty list
// (the no-CVAE ablation) zeroes the KL term.
inline LossBreakdown total_loss(Trace& tr, const PredictionOutput& po, const std::vector<GaussianPair>& gaussians,
                                const InstanceLabel& label, const LossConfig& cfg) {
  LossBreakdown lb;
  lb.lambda1 = cfg.lambda1;
  lb.lambda2 = cfg.lambda2;
  lb.l_chain = chain_loss(tr, po.p_chain, label);
  if (cfg.no_logic_supervision)
    lb.l_logic = Tensor::scalar(0.0);
  else if (cfg.problem_ce_instead_of_logic)
    lb.l_logic = ablation_problem_ce(tr, po.p_threshold, po.p_scene, label);
  else
    lb.l_logic = logic_loss(tr, po.p_threshold, po.p_scene, po.p_chain, label);
  if (gaussians.empty()) {
    lb.l_kl = Tensor::scalar(0.0);
  } else {
    Tensor acc = kl_term(tr, gaussians[0], cfg.kl_direction);
    for (std::size_t i = 1; i < gaussians.size(); ++i) acc = add(tr, acc, kl_term(tr, gaussians[i], cfg.kl_direction));
    lb.l_kl = acc;
  }
  lb.total = add(tr, lb.l_chain, add(tr, scale(tr, lb.l_logic, cfg.lambda1), scale(tr, lb.l_kl, cfg.lambda2)));
  return lb;
}

}  // namespace reco
