#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>

#include <json.hpp>

#include "reco/embedding.hpp"
#include "reco/losses.hpp"
#include "reco/param_store.hpp"

namespace reco {

enum class EvalEpsilonMode { zero, sample };

// How the reliability head reads its exogenous input: the aggregate entering
// the final recurrent step, or the raw latent of the penultimate pair.
enum class UInLastMode { aggregated, raw };

struct ProviderConfig {
  std::string kind = "hashing";  // hashing | file | http
  std::size_t dim = 256;         // hashing only
  std::string path;              // file only
  std::string endpoint;          // http only
  int timeout_ms = 5000;         // http only

  void validate() const {
    if (kind == "hashing") {
      if (dim < 8) throw ValidationError("hashing provider dim must be >= 8");
    } else if (kind == "file") {
      if (path.empty()) throw ValidationError("file provider needs a path");
    } else if (kind == "http") {
      if (endpoint.empty()) throw ValidationError("http provider needs an endpoint");
      if (timeout_ms <= 0) throw ValidationError("http timeout must be positive");
    } else {
      throw ValidationError("unknown provider kind: " + kind);
    }
  }
};

struct TrainConfig {
  std::size_t m = 256;
  double lr = 1e-5;
  std::size_t batch_size = 24;
  std::size_t epochs = 50;
  double lambda1 = 1.0;
  double lambda2 = 0.01;
  std::uint64_t seed = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  ProviderConfig provider;
  bool no_eacvae = false;
  bool no_logic_supervision = false;
  bool problem_ce_instead_of_logic = false;
  KlDirection kl_direction = KlDirection::prior_to_posterior;
  EvalEpsilonMode eval_epsilon_mode = EvalEpsilonMode::zero;
  UInLastMode u_in_last_mode = UInLastMode::aggregated;

  void validate() const {
    if (m == 0) throw ValidationError("m must be positive");
    if (!(lr > 0.0)) throw ValidationError("lr must be positive");
    if (batch_size == 0) throw ValidationError("batch_size must be positive");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ValidationError("loss coefficients must be non-negative");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0))
      throw ValidationError("invalid Adam hyperparameters");
    if (no_logic_supervision && problem_ce_instead_of_logic)
      throw ValidationError("no_logic_supervision and problem_ce_instead_of_logic are mutually exclusive");
    provider.validate();
  }

  AdamHyper adam() const { return {lr, adam_beta1, adam_beta2, adam_eps}; }

  LossConfig loss_config() const {
    return {lambda1, lambda2, no_logic_supervision, problem_ce_instead_of_logic, kl_direction};
  }
};

inline nlohmann::ordered_json config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["m"] = c.m;
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["lambda1"] = c.lambda1;
  j["lambda2"] = c.lambda2;
  j["seed"] = c.seed;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["provider"]["kind"] = c.provider.kind;
  j["provider"]["dim"] = c.provider.dim;
  j["provider"]["path"] = c.provider.path;
  j["provider"]["endpoint"] = c.provider.endpoint;
  j["provider"]["timeout_ms"] = c.provider.timeout_ms;
  j["no_eacvae"] = c.no_eacvae;
  j["no_logic_supervision"] = c.no_logic_supervision;
  j["problem_ce_instead_of_logic"] = c.problem_ce_instead_of_logic;
  j["kl_direction"] = c.kl_direction == KlDirection::prior_to_posterior ? "prior_to_posterior" : "posterior_to_prior";
  j["eval_epsilon_mode"] = c.eval_epsilon_mode == EvalEpsilonMode::zero ? "zero" : "sample";
  j["u_in_last_mode"] = c.u_in_last_mode == UInLastMode::aggregated ? "aggregated" : "raw";
  return j;
}

inline TrainConfig config_from_json(const nlohmann::ordered_json& j) {
  static const std::set<std::string> known{
      "m",         "lr",        "batch_size",  "epochs",    "lambda1",   "lambda2",
      "seed",      "adam_beta1", "adam_beta2", "adam_eps",  "provider",  "no_eacvae",
      "no_logic_supervision", "problem_ce_instead_of_logic", "kl_direction", "eval_epsilon_mode",
      "u_in_last_mode"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ValidationError("unknown config key: " + key);

  TrainConfig c;
  c.m = j.value("m", c.m);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.lambda1 = j.value("lambda1", c.lambda1);
  c.lambda2 = j.value("lambda2", c.lambda2);
  c.seed = j.value("seed", c.seed);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  if (j.contains("provider")) {
    const auto& p = j.at("provider");
    static const std::set<std::string> pknown{"kind", "dim", "path", "endpoint", "timeout_ms"};
    for (const auto& [key, _] : p.items())
      if (!pknown.count(key)) throw ValidationError("unknown provider config key: " + key);
    c.provider.kind = p.value("kind", c.provider.kind);
    c.provider.dim = p.value("dim", c.provider.dim);
    c.provider.path = p.value("path", c.provider.path);
    c.provider.endpoint = p.value("endpoint", c.provider.endpoint);
    c.provider.timeout_ms = p.value("timeout_ms", c.provider.timeout_ms);
  }
  c.no_eacvae = j.value("no_eacvae", c.no_eacvae);
  c.no_logic_supervision = j.value("no_logic_supervision", c.no_logic_supervision);
  c.problem_ce_instead_of_logic = j.value("problem_ce_instead_of_logic", c.problem_ce_instead_of_logic);
  if (j.contains("kl_direction")) {
    const std::string s = j.at("kl_direction").get<std::string>();
    if (s == "prior_to_posterior")
      c.kl_direction = KlDirection::prior_to_posterior;
    else if (s == "posterior_to_prior")
      c.kl_direction = KlDirection::posterior_to_prior;
    else
      throw ValidationError("unknown kl_direction: " + s);
  }
  if (j.contains("eval_epsilon_mode")) {
    const std::string s = j.at("eval_epsilon_mode").get<std::string>();
    if (s == "zero")
      c.eval_epsilon_mode = EvalEpsilonMode::zero;
    else if (s == "sample")
      c.eval_epsilon_mode = EvalEpsilonMode::sample;
    else
      throw ValidationError("unknown eval_epsilon_mode: " + s);
  }
  if (j.contains("u_in_last_mode")) {
    const std::string s = j.at("u_in_last_mode").get<std::string>();
    if (s == "aggregated")
      c.u_in_last_mode = UInLastMode::aggregated;
    else if (s == "raw")
      c.u_in_last_mode = UInLastMode::raw;
    else
      throw ValidationError("unknown u_in_last_mode: " + s);
  }
  c.validate();
  return c;
}

inline std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& pc) {
  pc.validate();
  if (pc.kind == "hashing") return std::make_unique<HashingProvider>(pc.dim);
  if (pc.kind == "file") return std::make_unique<FileProvider>(pc.path);
  return std::make_unique<HttpProvider>(pc.endpoint, pc.timeout_ms);
}

}  // namespace reco
