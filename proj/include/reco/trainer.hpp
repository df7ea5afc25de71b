#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <thread>
#include <vector>

#include "reco/checkpoint.hpp"
#include "reco/config.hpp"
#include "reco/metrics.hpp"
#include "reco/model.hpp"

namespace reco {

// Deterministic prediction-mode evaluation. Sampling mode derives one RNG per
// instance from (seed, index), so results are independent of worker count.
inline MetricsReport evaluate(const ParameterStore& store, const TrainConfig& cfg, const EmbeddingProvider& provider,
                              const std::vector<Instance>& data, int jobs = 1) {
  if (data.empty()) throw ValidationError("evaluate: empty dataset");
  std::vector<EvalRecord> records(data.size());
  auto eval_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Trace tr(false);
      const ModelTensors p = lease_params(tr, store);
      ForwardOut out;
      if (cfg.eval_epsilon_mode == EvalEpsilonMode::sample) {
        Rng rng(derive_seed(cfg.seed, i));
        GaussianNoise noise(rng);
        out = forward_instance(tr, p, provider, data[i], cfg, Mode::predict, noise);
      } else {
        ZeroNoise noise;
        out = forward_instance(tr, p, provider, data[i], cfg, Mode::predict, noise);
      }
      const Diagnosis d = diagnose(out.pred);
      records[i] = {data[i].length,  data[i].label.reliable, data[i].label.problem,
                    d.reliable,      d.scene_drift,          d.threshold_effect};
    }
  };
  if (jobs <= 1 || data.size() < 2) {
    eval_range(0, data.size());
  } else {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), data.size());
    std::vector<std::thread> pool;
    const std::size_t chunk = (data.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(begin + chunk, data.size());
      if (begin >= end) break;
      pool.emplace_back(eval_range, begin, end);
    }
    for (auto& t : pool) t.join();
  }
  return MetricsReport::compute(records);
}

struct EpochLog {
  double train_loss = 0.0;
  double dev_accuracy = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

// Seeded-shuffle epochs over length-homogeneous batches, mean batch loss,
// Adam updates, best-dev-accuracy checkpoint retention (ties keep the earlier
// epoch). Aborts if the loss stops being finite.
inline TrainResult train(const TrainConfig& cfg, const EmbeddingProvider& provider,
                         const std::vector<Instance>& train_set, const std::vector<Instance>& dev_set) {
  cfg.validate();
  if (train_set.empty()) throw ValidationError("train: empty training set");
  for (const auto& inst : train_set) inst.validate();

  Rng rng(cfg.seed);
  ParameterStore store;
  init_params(store, provider.dim(), cfg.m, rng);

  TrainResult result;
  double best_acc = -1.0;
  const LossConfig loss_cfg = cfg.loss_config();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    // Batches are homogeneous in chain length; batch order is reshuffled so
    // the lengths interleave.
    std::vector<std::vector<std::size_t>> batches;
    for (int len = 3; len <= 5; ++len) {
      std::vector<std::size_t> bucket;
      for (std::size_t i : order)
        if (train_set[i].length == len) bucket.push_back(i);
      for (std::size_t start = 0; start < bucket.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(start + cfg.batch_size, bucket.size());
        batches.emplace_back(bucket.begin() + static_cast<std::ptrdiff_t>(start),
                             bucket.begin() + static_cast<std::ptrdiff_t>(end));
      }
    }
    rng.shuffle(batches);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const auto& batch : batches) {
      Trace tr;
      const ModelTensors p = lease_params(tr, store);
      GaussianNoise noise(rng);
      Tensor acc;
      bool first = true;
      for (std::size_t i : batch) {
        const ForwardOut out = forward_instance(tr, p, provider, train_set[i], cfg, Mode::train, noise);
        const LossBreakdown lb = total_loss(tr, out.pred, out.gaussians, train_set[i].label, loss_cfg);
        acc = first ? lb.total : add(tr, acc, lb.total);
        first = false;
      }
      const Tensor mean_loss = scale(tr, acc, 1.0 / static_cast<double>(batch.size()));
      if (!std::isfinite(mean_loss.value()))
        throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1));
      const Gradients grads = tr.backward(mean_loss);
      store.adam_step(grads.named(), cfg.adam());
      loss_sum += mean_loss.value() * static_cast<double>(batch.size());
      seen += batch.size();
    }

    EpochLog log;
    log.train_loss = loss_sum / static_cast<double>(seen);
    if (!dev_set.empty()) log.dev_accuracy = evaluate(store, cfg, provider, dev_set).accuracy;
    result.log.push_back(log);

    const double score = dev_set.empty() ? static_cast<double>(epoch) : log.dev_accuracy;
    if (score > best_acc) {
      best_acc = score;
      result.best_epoch = epoch;
      result.best.version = kCheckpointVersion;
      result.best.config = cfg;
      result.best.epoch = epoch;
      result.best.rng_state = rng.state();
      result.best.store = store;
    }
  }
  return result;
}

}  // namespace reco
