#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "reco/param_store.hpp"
#include "reco/tensor.hpp"

namespace reco {

inline double rel_err(double a, double b) {
  const double denom = std::max({1.0, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) / denom;
}

struct FiniteDiffResult {
  std::map<std::string, Tensor> grad;
  // Coordinates where the one-sided slopes disagree, formatted "name[i]".
  std::vector<std::string> nonsmooth;
};

// Central-difference gradient estimates for f over every parameter coordinate.
// f must be deterministic for fixed parameters (freeze any noise sources).
inline FiniteDiffResult finite_diff(const std::function<double(const ParameterStore&)>& f, ParameterStore& store,
                                    double h = 1e-4) {
  if (!(h > 0.0)) throw ValidationError("finite_diff: step must be positive");
  FiniteDiffResult out;
  const double f0 = f(store);
  if (!std::isfinite(f0)) throw Error("finite_diff: non-finite base evaluation");
  for (const std::string& name : store.names()) {
    Tensor& t = store.value(name);
    Tensor g = Tensor::zeros(t.shape);
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double orig = t.values[i];
      t.values[i] = orig + h;
      const double fp = f(store);
      t.values[i] = orig - h;
      const double fm = f(store);
      t.values[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw Error("finite_diff: non-finite evaluation while perturbing " + name);
      g.values[i] = (fp - fm) / (2.0 * h);
      const double fwd = (fp - f0) / h;
      const double bwd = (f0 - fm) / h;
      if (rel_err(fwd, bwd) > 1e-2) out.nonsmooth.push_back(name + "[" + std::to_string(i) + "]");
    }
    out.grad.emplace(name, std::move(g));
  }
  return out;
}

struct RelErrReport {
  double max_rel_err = 0.0;
  std::string worst;  // "name[i]"
};

inline RelErrReport max_rel_err(const std::map<std::string, Tensor>& a, const std::map<std::string, Tensor>& b) {
  RelErrReport rep;
  for (const auto& [name, ga] : a) {
    auto it = b.find(name);
    if (it == b.end()) throw ValidationError("max_rel_err: missing gradient for " + name);
    const Tensor& gb = it->second;
    if (ga.shape != gb.shape) throw ShapeError("max_rel_err: shape mismatch for " + name);
    for (std::size_t i = 0; i < ga.numel(); ++i) {
      const double e = rel_err(ga.values[i], gb.values[i]);
      if (e > rep.max_rel_err) {
        rep.max_rel_err = e;
        rep.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

}  // namespace reco
