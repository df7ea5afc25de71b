#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "reco/gradcheck.hpp"
#include "reco/model.hpp"
#include "reco/trainer.hpp"

namespace reco {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst;
  std::size_t n_params = 0;
  std::size_t n_coords = 0;
  double elapsed_seconds = 0.0;
};

namespace detail {

inline std::vector<Instance> gradcheck_instances() {
  auto mk = [](const char* id, std::vector<std::string> events, bool reliable, Problem prob) {
    Instance inst;
    inst.id = id;
    inst.events = std::move(events);
    for (std::size_t e = 0; e + 1 < inst.events.size(); ++e)
      inst.contexts.push_back("ctx pair_" + std::to_string(e) + " " + inst.events[e]);
    inst.label = {reliable, prob};
    inst.source_chain = id;
    inst.length = static_cast<int>(inst.events.size());
    return inst;
  };
  return {
      mk("gc3", {"storm surge", "power outage", "hospital backup"}, false, Problem::threshold),
      mk("gc4", {"heavy rain", "river rises", "field floods", "harvest fails"}, false, Problem::scene),
      mk("gc5", {"budget cut", "staff leaves", "backlog grows", "deadline slips", "client churns"}, true,
         Problem::none),
  };
}

}  // namespace detail

// Backward vs central finite differences over every parameter of the full
// model, on one instance of each chain length, with frozen noise. The logic
// loss is non-smooth where its two logs meet; seeds whose forward lands
// within 1e-6 of that kink are skipped and the next seed is tried.
inline GradCheckReport run_model_gradcheck(std::size_t m = 8, std::size_t d = 16, std::uint64_t seed = 1,
                                           double h = 1e-4) {
  const auto t0 = std::chrono::steady_clock::now();
  const HashingProvider provider(d);
  const std::vector<Instance> instances = detail::gradcheck_instances();

  TrainConfig cfg;
  cfg.m = m;
  cfg.provider.kind = "hashing";
  cfg.provider.dim = d;
  const LossConfig loss_cfg = cfg.loss_config();

  for (std::uint64_t attempt = 0; attempt < 16; ++attempt) {
    const std::uint64_t s = seed + attempt;
    Rng rng(s);
    ParameterStore store;
    init_params(store, d, m, rng);

    std::vector<std::vector<std::vector<double>>> noise_per_instance;
    for (const auto& inst : instances) {
      std::vector<std::vector<double>> eps;
      for (int i = 0; i + 1 < inst.length; ++i) {
        std::vector<double> e(m);
        for (double& x : e) x = rng.normal();
        eps.push_back(std::move(e));
      }
      noise_per_instance.push_back(std::move(eps));
    }

    auto losses = [&](Trace& tr, const ParameterStore& s) {
      const ModelTensors p = lease_params(tr, s);
      std::vector<LossBreakdown> out;
      for (std::size_t k = 0; k < instances.size(); ++k) {
        FixedNoise noise(noise_per_instance[k]);
        const ForwardOut fw = forward_instance(tr, p, provider, instances[k], cfg, Mode::train, noise);
        out.push_back(total_loss(tr, fw.pred, fw.gaussians, instances[k].label, loss_cfg));
      }
      return out;
    };

    // Kink check: the logic loss must sit clearly away from zero.
    {
      Trace probe(false);
      bool near_kink = false;
      for (const LossBreakdown& lb : losses(probe, store))
        if (lb.l_logic.value() < 1e-6) near_kink = true;
      if (near_kink) continue;
    }

    Trace tr;
    Tensor total;
    bool first = true;
    for (const LossBreakdown& lb : losses(tr, store)) {
      total = first ? lb.total : add(tr, total, lb.total);
      first = false;
    }
    const Gradients analytic = tr.backward(total);

    auto f = [&](const ParameterStore& s) {
      Trace t2(false);
      double acc = 0.0;
      for (const LossBreakdown& lb : losses(t2, s)) acc += lb.total.value();
      return acc;
    };
    const FiniteDiffResult fd = finite_diff(f, store, h);
    const RelErrReport rep = max_rel_err(analytic.named(), fd.grad);

    GradCheckReport out;
    out.max_rel_err = rep.max_rel_err;
    out.worst = rep.worst;
    out.n_params = store.size();
    out.n_coords = store.total_coords();
    out.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
  }
  throw Error("gradient check could not find a seed away from the logic-loss kink");
}

}  // namespace reco
