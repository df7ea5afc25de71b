#pragma once

#include <cstddef>

#include "reco/tensor.hpp"

namespace reco {

enum class Mode { train, predict };

// Direction of the KL regularizer. prior_to_posterior is the primary form;
// posterior_to_prior is the conventional CVAE direction, kept as a switch.
enum class KlDirection { prior_to_posterior, posterior_to_prior };

struct CvaeParams {
  Tensor w1, b1;  // prior mean,   2m x m
  Tensor w2, b2;  // prior sigma,  2m x m (log-scale, exponentiated)
  Tensor w3, b3;  // posterior mean,  3m x m
  Tensor w4, b4;  // posterior sigma, 3m x m
};

// Diagonal prior (event pair only) and context-aware posterior of one causal
// pair's exogenous variable. Sigmas are exp-parameterized, hence positive.
struct GaussianPair {
  Tensor mu;
  Tensor sigma;
  Tensor mu_prime;
  Tensor sigma_prime;
};

struct LatentSample {
  Tensor u;
  Tensor epsilon;
  Mode mode = Mode::train;
};

inline GaussianPair estimate_gaussians(Trace& tr, const Tensor& h_event, const Tensor& h_next, const Tensor& h_ctx,
                                       const CvaeParams& p) {
  const Tensor v = concat(tr, h_event, h_next);
  const Tensor v_prime = concat(tr, concat(tr, h_event, h_ctx), h_next);
  GaussianPair gp;
  gp.mu = affine(tr, v, p.w1, p.b1);
  gp.sigma = exp(tr, affine(tr, v, p.w2, p.b2));
  gp.mu_prime = affine(tr, v_prime, p.w3, p.b3);
  gp.sigma_prime = exp(tr, affine(tr, v_prime, p.w4, p.b4));
  return gp;
}

// Reparameterized sample: posterior in training, prior at prediction, so
// contexts are not needed once training is done.
inline LatentSample sample_exogenous(Trace& tr, const GaussianPair& gp, const Tensor& epsilon, Mode mode) {
  const Tensor& mu = (mode == Mode::train) ? gp.mu_prime : gp.mu;
  const Tensor& sigma = (mode == Mode::train) ? gp.sigma_prime : gp.sigma;
  LatentSample s;
  s.epsilon = epsilon;
  s.mode = mode;
  s.u = add(tr, mu, mul(tr, epsilon, sigma));
  return s;
}

// Closed-form diagonal Gaussian KL, summed over dimensions.
inline Tensor kl_term(Trace& tr, const GaussianPair& gp, KlDirection dir = KlDirection::prior_to_posterior) {
  const bool p2q = dir == KlDirection::prior_to_posterior;
  const Tensor& mu_a = p2q ? gp.mu : gp.mu_prime;
  const Tensor& sigma_a = p2q ? gp.sigma : gp.sigma_prime;
  const Tensor& mu_b = p2q ? gp.mu_prime : gp.mu;
  const Tensor& sigma_b = p2q ? gp.sigma_prime : gp.sigma;

  const Tensor log_ratio = sub(tr, log(tr, sigma_b), log(tr, sigma_a));
  const Tensor d = sub(tr, mu_a, mu_b);
  const Tensor num = add(tr, mul(tr, sigma_a, sigma_a), mul(tr, d, d));
  const Tensor den = scale(tr, mul(tr, sigma_b, sigma_b), 2.0);
  const Tensor per_dim = shift(tr, add(tr, log_ratio, div(tr, num, den)), -0.5);
  return sum(tr, per_dim);
}

}  // namespace reco
