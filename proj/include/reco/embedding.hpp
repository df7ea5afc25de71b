#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "reco/data.hpp"
#include "reco/error.hpp"
#include "reco/tensor.hpp"
#include "reco/text.hpp"

namespace reco {

// Deterministic text -> d-vector lookup. Providers are read-only after
// construction and safe to call concurrently.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual const std::string& name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) const = 0;
};

// Signed bag-of-tokens feature hashing, L2-normalized.
inline std::vector<double> hashing_embed(std::string_view text, std::size_t dim) {
  if (dim < 8) throw ValidationError("hashing dim must be >= 8");
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw ValidationError("empty text");
  std::vector<double> v(dim, 0.0);
  for (const auto& tok : tokens) {
    const std::uint64_t h = splitmix64(fnv1a64(tok));
    v[h % dim] += (h >> 63) ? 1.0 : -1.0;
  }
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
  }
  return v;
}

class HashingProvider final : public EmbeddingProvider {
 public:
  explicit HashingProvider(std::size_t dim = 256) : dim_(dim) {
    if (dim_ < 8) throw ValidationError("hashing dim must be >= 8");
  }

  const std::string& name() const override {
    static const std::string n = "hashing";
    return n;
  }
  std::size_t dim() const override { return dim_; }

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) const override {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hashing_embed(t, dim_));
    return out;
  }

 private:
  std::size_t dim_;
};

// Exact lookup over a JSONL file of {"text": ..., "vec": [...]} records.
class FileProvider final : public EmbeddingProvider {
 public:
  explicit FileProvider(const std::string& path) : path_(path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open embedding file " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
      if (!j.contains("text") || !j.contains("vec"))
        throw ValidationError(path + ":" + std::to_string(lineno) + ": record needs \"text\" and \"vec\"");
      const std::string text = j["text"].get<std::string>();
      std::vector<double> vec = j["vec"].get<std::vector<double>>();
      if (dim_ == 0) dim_ = vec.size();
      if (vec.size() != dim_ || dim_ == 0)
        throw ValidationError(path + ":" + std::to_string(lineno) + ": inconsistent vector dim " +
                              std::to_string(vec.size()) + " (expected " + std::to_string(dim_) + ")");
      if (!table_.emplace(text, std::move(vec)).second)
        throw ValidationError(path + ":" + std::to_string(lineno) + ": duplicate text \"" + text + "\"");
    }
    if (table_.empty()) throw ValidationError("embedding file " + path + " is empty");
  }

  const std::string& name() const override {
    static const std::string n = "file";
    return n;
  }
  std::size_t dim() const override { return dim_; }

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) const override {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
      auto it = table_.find(t);
      if (it == table_.end()) throw ValidationError("no embedding for text \"" + t + "\" in " + path_);
      out.push_back(it->second);
    }
    return out;
  }

 private:
  std::string path_;
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> table_;
};

// Client for a remote embedding service: POST /embed {"texts": [...]} ->
// {"dim": d, "vectors": [[...], ...]}. One request per batch. The native
// dimension is established by a probe request at construction.
class HttpProvider final : public EmbeddingProvider {
 public:
  explicit HttpProvider(std::string endpoint, int timeout_ms = 5000)
      : endpoint_(std::move(endpoint)), timeout_ms_(timeout_ms) {
    if (timeout_ms_ <= 0) throw ValidationError("http timeout must be positive");
    if (endpoint_.rfind("http://", 0) != 0 && endpoint_.rfind("https://", 0) != 0)
      endpoint_ = "http://" + endpoint_;
    dim_ = request({"probe"}).front().size();
  }

  const std::string& name() const override {
    static const std::string n = "http";
    return n;
  }
  std::size_t dim() const override { return dim_; }

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) const override {
    auto out = request(texts);
    for (const auto& v : out)
      if (v.size() != dim_)
        throw HttpError(HttpError::Kind::dim_mismatch, "embedding service changed dim from " + std::to_string(dim_) +
                                                           " to " + std::to_string(v.size()));
    return out;
  }

 private:
  std::vector<std::vector<double>> request(const std::vector<std::string>& texts) const {
    nlohmann::json body;
    body["texts"] = texts;
    httplib::Result res;
    {
      std::lock_guard<std::mutex> lock(mu_);
      httplib::Client cli(endpoint_);
      cli.set_connection_timeout(0, timeout_ms_ * 1000);
      cli.set_read_timeout(0, timeout_ms_ * 1000);
      cli.set_write_timeout(0, timeout_ms_ * 1000);
      res = cli.Post("/embed", body.dump(), "application/json");
    }
    if (!res)
      throw HttpError(HttpError::Kind::timeout,
                      "embedding service " + endpoint_ + " unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw HttpError(HttpError::Kind::status,
                      "embedding service returned status " + std::to_string(res->status));
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw HttpError(HttpError::Kind::status, std::string("malformed service response: ") + e.what());
    }
    const std::size_t d = j.at("dim").get<std::size_t>();
    auto vectors = j.at("vectors").get<std::vector<std::vector<double>>>();
    if (vectors.size() != texts.size())
      throw HttpError(HttpError::Kind::count_mismatch, "asked for " + std::to_string(texts.size()) +
                                                           " embeddings, got " + std::to_string(vectors.size()));
    for (const auto& v : vectors)
      if (v.size() != d)
        throw HttpError(HttpError::Kind::dim_mismatch,
                        "vector of dim " + std::to_string(v.size()) + " in a dim-" + std::to_string(d) + " response");
    return vectors;
  }

  std::string endpoint_;
  int timeout_ms_;
  std::size_t dim_ = 0;
  mutable std::mutex mu_;
};

// n event vectors and n-1 context vectors, all projected to m dims.
struct EmbeddedChain {
  std::vector<Tensor> event_vecs;
  std::vector<Tensor> context_vecs;
};

// Provider lookup followed by the shared trainable projection. Gradients flow
// through the projection only; provider outputs are constants.
inline EmbeddedChain embed_chain(Trace& tr, const EmbeddingProvider& provider, const Tensor& w_proj,
                                 const Tensor& b_proj, const std::vector<std::string>& events,
                                 const std::vector<std::string>& contexts, const std::string& chain_id) {
  if (events.size() < 3 || events.size() > 5 || contexts.size() + 1 != events.size())
    throw ValidationError("chain " + chain_id + ": expected 3..5 events and one fewer contexts");
  std::vector<std::string> texts(events);
  texts.insert(texts.end(), contexts.begin(), contexts.end());
  std::vector<std::vector<double>> raw;
  try {
    raw = provider.embed(texts);
  } catch (const std::exception& e) {
    throw Error("chain " + chain_id + ": " + e.what());
  }
  const std::size_t d = provider.dim();
  EmbeddedChain out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (raw[i].size() != d)
      throw Error("chain " + chain_id + ": provider returned dim " + std::to_string(raw[i].size()) +
                  ", expected " + std::to_string(d));
    Tensor projected = affine(tr, Tensor::vector(raw[i]), w_proj, b_proj);
    if (i < events.size())
      out.event_vecs.push_back(std::move(projected));
    else
      out.context_vecs.push_back(std::move(projected));
  }
  return out;
}

inline EmbeddedChain embed_chain(Trace& tr, const EmbeddingProvider& provider, const Tensor& w_proj,
                                 const Tensor& b_proj, const RawChain& chain) {
  chain.validate();
  return embed_chain(tr, provider, w_proj, b_proj, chain.events, chain.contexts, chain.id);
}

}  // namespace reco
