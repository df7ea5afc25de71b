#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "reco/rng.hpp"
#include "reco/tensor.hpp"

namespace reco {

struct AdamHyper {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named trainable tensors plus their Adam state. std::map keeps iteration
// order deterministic for checkpointing and finite differences.
class ParameterStore {
 public:
  struct Entry {
    Tensor value;
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;
  };

  Tensor& add(const std::string& name, Tensor value) {
    if (entries_.count(name)) throw ValidationError("duplicate parameter name: " + name);
    value.requires_grad = true;
    Entry e;
    e.m.assign(value.numel(), 0.0);
    e.v.assign(value.numel(), 0.0);
    e.value = std::move(value);
    return entries_.emplace(name, std::move(e)).first->second.value;
  }

  void add_with_state(const std::string& name, Tensor value, std::vector<double> m, std::vector<double> v,
                      std::int64_t step) {
    if (entries_.count(name)) throw ValidationError("duplicate parameter name: " + name);
    if (m.size() != value.numel() || v.size() != value.numel())
      throw ShapeError("moment size does not match parameter " + name);
    if (step < 0) throw ValidationError("negative step count for parameter " + name);
    value.requires_grad = true;
    Entry e;
    e.value = std::move(value);
    e.m = std::move(m);
    e.v = std::move(v);
    e.step = step;
    entries_.emplace(name, std::move(e));
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }

  Tensor& value(const std::string& name) { return find(name).value; }
  const Tensor& value(const std::string& name) const { return find(name).value; }
  const Entry& entry(const std::string& name) const { return find(name); }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, _] : entries_) out.push_back(k);
    return out;
  }

  std::size_t total_coords() const {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_) n += e.value.numel();
    return n;
  }

  // Standard bias-corrected Adam update for every gradient entry.
  void adam_step(const std::map<std::string, Tensor>& grads, const AdamHyper& hp) {
    for (const auto& [name, g] : grads) {
      auto it = entries_.find(name);
      if (it == entries_.end()) throw ValidationError("gradient for unknown parameter: " + name);
      Entry& e = it->second;
      if (g.shape != e.value.shape)
        throw ShapeError("adam_step: gradient shape " + shape_str(g.shape) + " != parameter shape " +
                         shape_str(e.value.shape) + " for " + name);
      e.step += 1;
      const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(e.step));
      const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(e.step));
      for (std::size_t i = 0; i < g.numel(); ++i) {
        const double gi = g.values[i];
        e.m[i] = hp.beta1 * e.m[i] + (1.0 - hp.beta1) * gi;
        e.v[i] = hp.beta2 * e.v[i] + (1.0 - hp.beta2) * gi * gi;
        const double mhat = e.m[i] / c1;
        const double vhat = e.v[i] / c2;
        e.value.values[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
      }
    }
  }

 private:
  Entry& find(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ValidationError("unknown parameter: " + name);
    return it->second;
  }
  const Entry& find(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ValidationError("unknown parameter: " + name);
    return it->second;
  }

  std::map<std::string, Entry> entries_;
};

// Uniform init in [-1/sqrt(rows), +1/sqrt(rows)], rows = input dimension.
inline Tensor uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t = Tensor::zeros({rows, cols});
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  for (double& v : t.values) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace reco
