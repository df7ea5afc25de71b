#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "reco/config.hpp"
#include "reco/eacvae.hpp"
#include "reco/embedding.hpp"
#include "reco/losses.hpp"
#include "reco/param_store.hpp"
#include "reco/predictor.hpp"
#include "reco/rng.hpp"
#include "reco/srnn.hpp"

namespace reco {

// Every trainable tensor of the model, leased onto one trace.
struct ModelTensors {
  Tensor proj_w, proj_b;
  CvaeParams cvae;
  SrnnParams srnn;
  HeadParams head;
};

inline void init_params(ParameterStore& store, std::size_t d, std::size_t m, Rng& rng) {
  store.add("proj.W", uniform_matrix(rng, d, m));
  store.add("proj.b", Tensor::zeros({m}));

  store.add("cvae.W1", uniform_matrix(rng, 2 * m, m));
  store.add("cvae.b1", Tensor::zeros({m}));
  store.add("cvae.W2", uniform_matrix(rng, 2 * m, m));
  store.add("cvae.b2", Tensor::zeros({m}));
  store.add("cvae.W3", uniform_matrix(rng, 3 * m, m));
  store.add("cvae.b3", Tensor::zeros({m}));
  store.add("cvae.W4", uniform_matrix(rng, 3 * m, m));
  store.add("cvae.b4", Tensor::zeros({m}));

  store.add("srnn.Wm1", uniform_matrix(rng, m, m));
  store.add("srnn.bm1", Tensor::zeros({m}));
  store.add("srnn.Wm2", uniform_matrix(rng, m, m));
  store.add("srnn.bm2", Tensor::zeros({m}));
  store.add("srnn.Wh", uniform_matrix(rng, 2 * m, m));
  store.add("srnn.bh", Tensor::zeros({m}));
  store.add("srnn.Wbeta", uniform_matrix(rng, 2 * m, m));
  store.add("srnn.We", uniform_matrix(rng, m, m));
  store.add("srnn.be", Tensor::zeros({m}));
  store.add("srnn.Wo", uniform_matrix(rng, 2 * m, m));
  store.add("srnn.bo", Tensor::zeros({m}));

  store.add("head.WT", uniform_matrix(rng, m, 2));
  store.add("head.bT", Tensor::zeros({2}));
  store.add("head.WS", uniform_matrix(rng, m, 2));
  store.add("head.bS", Tensor::zeros({2}));
  store.add("head.W1", uniform_matrix(rng, 2 * m, m));
  store.add("head.b1", Tensor::zeros({m}));
  store.add("head.W2", uniform_matrix(rng, 2 * m, m));
  store.add("head.b2", Tensor::zeros({m}));
  store.add("head.WC", uniform_matrix(rng, 2 * m, 2));
  store.add("head.bC", Tensor::zeros({2}));
}

inline ModelTensors lease_params(Trace& tr, const ParameterStore& store) {
  auto lease = [&](const char* name) { return tr.leaf(store.value(name), name); };
  ModelTensors p;
  p.proj_w = lease("proj.W");
  p.proj_b = lease("proj.b");
  p.cvae = {lease("cvae.W1"), lease("cvae.b1"), lease("cvae.W2"), lease("cvae.b2"),
            lease("cvae.W3"), lease("cvae.b3"), lease("cvae.W4"), lease("cvae.b4")};
  p.srnn = {lease("srnn.Wm1"), lease("srnn.bm1"), lease("srnn.Wm2"), lease("srnn.bm2"),
            lease("srnn.Wh"),  lease("srnn.bh"),  lease("srnn.Wbeta"),
            lease("srnn.We"),  lease("srnn.be"),  lease("srnn.Wo"),  lease("srnn.bo")};
  p.head = {lease("head.WT"), lease("head.bT"), lease("head.WS"), lease("head.bS"), lease("head.W1"),
            lease("head.b1"), lease("head.W2"), lease("head.b2"), lease("head.WC"), lease("head.bC")};
  return p;
}

// Source of the reparameterization noise vectors, one per causal pair in
// forward order.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual std::vector<double> epsilon(std::size_t m) = 0;
};

class ZeroNoise final : public NoiseSource {
 public:
  std::vector<double> epsilon(std::size_t m) override { return std::vector<double>(m, 0.0); }
};

class GaussianNoise final : public NoiseSource {
 public:
  explicit GaussianNoise(Rng& rng) : rng_(rng) {}
  std::vector<double> epsilon(std::size_t m) override {
    std::vector<double> e(m);
    for (double& x : e) x = rng_.normal();
    return e;
  }

 private:
  Rng& rng_;
};

// Replays a pre-drawn sequence; lets a loss closure be evaluated repeatedly
// with frozen noise (finite differences, line searches).
class FixedNoise final : public NoiseSource {
 public:
  explicit FixedNoise(const std::vector<std::vector<double>>& seq) : seq_(&seq) {}
  std::vector<double> epsilon(std::size_t m) override {
    if (next_ >= seq_->size()) throw Error("FixedNoise: sequence exhausted");
    const auto& e = (*seq_)[next_++];
    if (e.size() != m) throw ShapeError("FixedNoise: vector dim mismatch");
    return e;
  }

 private:
  const std::vector<std::vector<double>>* seq_;
  std::size_t next_ = 0;
};

struct ForwardOut {
  PredictionOutput pred;
  std::vector<GaussianPair> gaussians;  // empty under the no-CVAE ablation
};

// Full model pass over one instance: embed, estimate/sample the exogenous
// variables (or take the projected contexts under the no-CVAE ablation), run
// the recurrence, apply the heads.
inline ForwardOut forward_instance(Trace& tr, const ModelTensors& p, const EmbeddingProvider& provider,
                                   const Instance& inst, const TrainConfig& cfg, Mode mode, NoiseSource& noise) {
  inst.validate();
  const EmbeddedChain emb = embed_chain(tr, provider, p.proj_w, p.proj_b, inst.events, inst.contexts, inst.id);
  const std::size_t n = emb.event_vecs.size();

  ForwardOut out;
  std::vector<Tensor> latents;
  latents.reserve(n - 1);
  if (cfg.no_eacvae) {
    latents = emb.context_vecs;
  } else {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      GaussianPair gp = estimate_gaussians(tr, emb.event_vecs[i], emb.event_vecs[i + 1], emb.context_vecs[i], p.cvae);
      const Tensor eps = Tensor::vector(noise.epsilon(cfg.m));
      latents.push_back(sample_exogenous(tr, gp, eps, mode).u);
      out.gaussians.push_back(std::move(gp));
    }
  }

  const SrnnFinal fin = srnn_forward(tr, emb.event_vecs, latents, p.srnn);
  const Tensor& u_in = cfg.u_in_last_mode == UInLastMode::raw ? latents[n - 3] : fin.u_in_last;
  auto [p_threshold, p_scene] = problem_heads(tr, fin.alpha_T, fin.beta_T, p.head);
  ReliabilityOut rel = reliability_head(tr, fin.h_pen, fin.h_last, u_in, fin.contradiction_T, p.head);
  out.pred = {std::move(p_threshold), std::move(p_scene), std::move(rel.p_chain), std::move(rel.p1),
              std::move(rel.p2)};
  return out;
}

}  // namespace reco
