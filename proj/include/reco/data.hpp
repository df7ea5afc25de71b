#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "reco/error.hpp"
#include "reco/rng.hpp"
#include "reco/text.hpp"

namespace reco {

enum class Problem { none, threshold, scene };

inline std::string to_string(Problem p) {
  switch (p) {
    case Problem::none:
      return "none";
    case Problem::threshold:
      return "threshold";
    case Problem::scene:
      return "scene";
  }
  return "none";
}

inline Problem problem_from_string(const std::string& s) {
  if (s == "threshold") return Problem::threshold;
  if (s == "scene") return Problem::scene;
  if (s == "none") return Problem::none;
  throw ValidationError("unknown problem type: " + s);
}

// An unlabeled chain of n events (3..5) with the n-1 contexts of its pairs.
struct RawChain {
  std::string id;
  std::vector<std::string> events;
  std::vector<std::string> contexts;

  void validate() const {
    if (events.size() < 3 || events.size() > 5)
      throw ValidationError("chain " + id + ": expected 3..5 events, got " + std::to_string(events.size()));
    if (contexts.size() + 1 != events.size())
      throw ValidationError("chain " + id + ": expected " + std::to_string(events.size() - 1) + " contexts, got " +
                            std::to_string(contexts.size()));
    for (const auto& e : events)
      if (e.empty()) throw ValidationError("chain " + id + ": empty event text");
    for (const auto& c : contexts)
      if (c.empty()) throw ValidationError("chain " + id + ": empty context text");
  }
};

// A labeled 5-event chain. break_edge is the first causal relationship (1..4)
// where the chain fails, or nullopt for a fully reliable chain.
struct AnnotatedChain {
  std::string id;
  std::vector<std::string> events;
  std::vector<std::string> contexts;
  std::optional<int> break_edge;
  Problem problem = Problem::none;

  void validate() const {
    if (events.size() != 5)
      throw ValidationError("chain " + id + ": expected exactly 5 events, got " + std::to_string(events.size()));
    if (contexts.size() != 4)
      throw ValidationError("chain " + id + ": expected exactly 4 contexts, got " + std::to_string(contexts.size()));
    for (const auto& e : events)
      if (e.empty()) throw ValidationError("chain " + id + ": empty event text");
    for (const auto& c : contexts)
      if (c.empty()) throw ValidationError("chain " + id + ": empty context text");
    if (break_edge) {
      if (*break_edge < 1 || *break_edge > 4)
        throw ValidationError("chain " + id + ": break_edge must be in 1..4, got " + std::to_string(*break_edge));
      if (problem == Problem::none)
        throw ValidationError("chain " + id + ": break_edge set but problem is none");
    } else if (problem != Problem::none) {
      throw ValidationError("chain " + id + ": problem set but break_edge is null");
    }
  }
};

struct InstanceLabel {
  bool reliable = true;
  Problem problem = Problem::none;

  void validate() const {
    if (reliable && problem != Problem::none) throw ValidationError("reliable instance cannot carry a problem label");
    if (!reliable && problem == Problem::none)
      throw ValidationError("unreliable instance must carry threshold or scene");
  }
};

// One training example: a length-L prefix of a labeled chain.
struct Instance {
  std::string id;
  std::vector<std::string> events;
  std::vector<std::string> contexts;
  InstanceLabel label;
  std::string source_chain;
  int length = 0;

  void validate() const {
    if (length < 3 || length > 5 || static_cast<std::size_t>(length) != events.size())
      throw ValidationError("instance " + id + ": length " + std::to_string(length) + " does not match " +
                            std::to_string(events.size()) + " events");
    if (contexts.size() + 1 != events.size())
      throw ValidationError("instance " + id + ": expected " + std::to_string(events.size() - 1) + " contexts");
    for (const auto& e : events)
      if (e.empty()) throw ValidationError("instance " + id + ": empty event text");
    for (const auto& c : contexts)
      if (c.empty()) throw ValidationError("instance " + id + ": empty context text");
    label.validate();
  }
};

struct CausalPair {
  std::string cause;
  std::string effect;
  std::string context;
};

// Splits a labeled chain into length-3..5 instances. A prefix of length L is
// emitted when it either contains no broken edge (positive, L <= break) or its
// last edge is exactly the break edge (the single negative, L == break + 1).
// Chains broken at edge 1 have no reliable antecedent and are rejected.
inline std::vector<Instance> split_chain(const AnnotatedChain& chain) {
  chain.validate();
  const int b = chain.break_edge.value_or(99);
  if (b == 1) throw ChainRejected("chain " + chain.id + ": broken at the first edge");
  std::vector<Instance> out;
  for (int len = 3; len <= 5; ++len) {
    if (len > std::min(b + 1, 5)) continue;
    Instance inst;
    inst.id = chain.id + "#L" + std::to_string(len);
    inst.events.assign(chain.events.begin(), chain.events.begin() + len);
    inst.contexts.assign(chain.contexts.begin(), chain.contexts.begin() + (len - 1));
    inst.label.reliable = len <= b;
    inst.label.problem = (len == b + 1) ? chain.problem : Problem::none;
    inst.source_chain = chain.id;
    inst.length = len;
    out.push_back(std::move(inst));
  }
  return out;
}

struct SplitCorpus {
  std::vector<Instance> instances;
  std::vector<std::string> rejected_ids;
};

inline SplitCorpus split_corpus(const std::vector<AnnotatedChain>& chains) {
  SplitCorpus out;
  for (const auto& c : chains) {
    try {
      auto inst = split_chain(c);
      out.instances.insert(out.instances.end(), inst.begin(), inst.end());
    } catch (const ChainRejected&) {
      out.rejected_ids.push_back(c.id);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL schemas. Chain and instance files are distinct, distinguished by the
// leading "kind" field; field order on write is fixed.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json chain_to_json(const AnnotatedChain& c) {
  nlohmann::ordered_json j;
  j["kind"] = "chain";
  j["id"] = c.id;
  j["events"] = c.events;
  j["contexts"] = c.contexts;
  if (c.break_edge)
    j["break_edge"] = *c.break_edge;
  else
    j["break_edge"] = nullptr;
  if (c.problem == Problem::none)
    j["problem"] = nullptr;
  else
    j["problem"] = to_string(c.problem);
  return j;
}

inline AnnotatedChain chain_from_json(const nlohmann::ordered_json& j) {
  AnnotatedChain c;
  if (j.value("kind", "chain") != "chain") throw ValidationError("record kind is not \"chain\"");
  c.id = j.at("id").get<std::string>();
  c.events = j.at("events").get<std::vector<std::string>>();
  c.contexts = j.at("contexts").get<std::vector<std::string>>();
  const auto& be = j.at("break_edge");
  if (!be.is_null()) c.break_edge = be.get<int>();
  const auto& pr = j.at("problem");
  if (!pr.is_null()) c.problem = problem_from_string(pr.get<std::string>());
  c.validate();
  return c;
}

inline nlohmann::ordered_json instance_to_json(const Instance& i) {
  nlohmann::ordered_json j;
  j["kind"] = "instance";
  j["id"] = i.id;
  j["source_chain"] = i.source_chain;
  j["length"] = i.length;
  j["events"] = i.events;
  j["contexts"] = i.contexts;
  j["reliable"] = i.label.reliable;
  if (i.label.problem == Problem::none)
    j["problem"] = nullptr;
  else
    j["problem"] = to_string(i.label.problem);
  return j;
}

inline Instance instance_from_json(const nlohmann::ordered_json& j) {
  Instance i;
  if (j.value("kind", "instance") != "instance") throw ValidationError("record kind is not \"instance\"");
  i.id = j.at("id").get<std::string>();
  i.source_chain = j.value("source_chain", "");
  i.events = j.at("events").get<std::vector<std::string>>();
  i.contexts = j.at("contexts").get<std::vector<std::string>>();
  i.length = j.value("length", static_cast<int>(i.events.size()));
  i.label.reliable = j.at("reliable").get<bool>();
  const auto& pr = j.at("problem");
  if (!pr.is_null()) i.label.problem = problem_from_string(pr.get<std::string>());
  i.validate();
  return i;
}

namespace detail {

template <class T, class FromJson>
std::vector<T> read_jsonl(const std::string& path, FromJson from) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      out.push_back(from(j));
    } catch (const std::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

template <class T, class ToJson>
void write_jsonl(const std::string& path, const std::vector<T>& items, ToJson to) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings everywhere
  if (!out) throw IoError("cannot write " + path);
  for (const auto& item : items) out << to(item).dump() << "\n";
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace detail

inline std::vector<AnnotatedChain> read_chains_jsonl(const std::string& path) {
  return detail::read_jsonl<AnnotatedChain>(path, chain_from_json);
}

inline void write_chains_jsonl(const std::string& path, const std::vector<AnnotatedChain>& chains) {
  for (const auto& c : chains) c.validate();
  detail::write_jsonl(path, chains, chain_to_json);
}

inline std::vector<Instance> read_instances_jsonl(const std::string& path) {
  return detail::read_jsonl<Instance>(path, instance_from_json);
}

inline void write_instances_jsonl(const std::string& path, const std::vector<Instance>& instances) {
  for (const auto& i : instances) i.validate();
  detail::write_jsonl(path, instances, instance_to_json);
}

// ---------------------------------------------------------------------------
// Pair joining.
// ---------------------------------------------------------------------------

inline double jaccard(std::string_view a, std::string_view b) {
  const auto ta = tokenize(a);
  const auto tb = tokenize(b);
  const std::set<std::string> sa(ta.begin(), ta.end());
  const std::set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

// Breadth-first joining of causal pairs into chains. A pair (e -> f) extends a
// chain ending in g when jaccard(g, e) >= sim_threshold; chains are emitted
// when they reach max_len events or cannot be extended, and the emitted set is
// filtered greedily in emission order so that any two kept chains share at
// most max_overlap distinct event texts.
inline std::vector<RawChain> join_pairs_into_chains(const std::vector<CausalPair>& pairs, double sim_threshold,
                                                    std::size_t max_len = 5, std::size_t max_overlap = 3) {
  if (!(sim_threshold > 0.0) || sim_threshold > 1.0)
    throw ValidationError("sim_threshold must be in (0, 1]");
  for (const auto& p : pairs)
    if (p.cause.empty() || p.effect.empty() || p.context.empty())
      throw ValidationError("causal pairs must have non-empty cause/effect/context");

  struct Partial {
    std::vector<std::size_t> pair_idx;
  };
  auto last_effect = [&](const Partial& c) -> const std::string& { return pairs[c.pair_idx.back()].effect; };
  auto uses = [](const Partial& c, std::size_t j) {
    return std::find(c.pair_idx.begin(), c.pair_idx.end(), j) != c.pair_idx.end();
  };

  std::deque<Partial> queue;
  for (std::size_t i = 0; i < pairs.size(); ++i) queue.push_back(Partial{{i}});

  std::vector<Partial> emitted;
  while (!queue.empty()) {
    Partial cur = std::move(queue.front());
    queue.pop_front();
    const std::size_t n_events = cur.pair_idx.size() + 1;
    if (n_events == max_len) {
      emitted.push_back(std::move(cur));
      continue;
    }
    bool extended = false;
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      if (uses(cur, j)) continue;
      if (jaccard(last_effect(cur), pairs[j].cause) < sim_threshold) continue;
      Partial next = cur;
      next.pair_idx.push_back(j);
      queue.push_back(std::move(next));
      extended = true;
    }
    if (!extended && n_events >= 3) emitted.push_back(std::move(cur));
  }

  std::vector<RawChain> out;
  std::vector<std::set<std::string>> kept_events;
  for (const Partial& c : emitted) {
    RawChain chain;
    chain.events.push_back(pairs[c.pair_idx.front()].cause);
    for (std::size_t j : c.pair_idx) {
      chain.events.push_back(pairs[j].effect);
      chain.contexts.push_back(pairs[j].context);
    }
    std::set<std::string> ev(chain.events.begin(), chain.events.end());
    bool ok = true;
    for (const auto& prev : kept_events) {
      std::size_t overlap = 0;
      for (const auto& e : ev) overlap += prev.count(e);
      if (overlap > max_overlap) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    chain.id = "join-" + std::to_string(out.size());
    chain.validate();
    kept_events.push_back(std::move(ev));
    out.push_back(std::move(chain));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus with ground-truth latents.
// ---------------------------------------------------------------------------

struct SynthSpec {
  std::size_t n_chains = 0;
  std::size_t n_scenes = 6;
  std::size_t n_concepts = 16;
  double p_scene_break = 0.25;
  double p_threshold_break = 0.25;

  void validate() const {
    if (n_scenes < 2 || n_concepts < 2) throw ValidationError("need at least 2 scenes and 2 concepts");
    if (p_scene_break < 0.0 || p_scene_break > 1.0 || p_threshold_break < 0.0 || p_threshold_break > 1.0)
      throw ValidationError("break probabilities must be in [0, 1]");
    if (p_scene_break + p_threshold_break > 1.0)
      throw ValidationError("p_scene_break + p_threshold_break must be <= 1");
  }
};

// Per-edge ground truth behind one synthetic chain (0-based arrays; edge e
// connects events e and e+1). produced[e] is the magnitude edge e emits,
// required[e] the magnitude it demands of event e, event_mag[i] the magnitude
// written into event i's text (event 0 always "high").
struct SynthLatents {
  std::array<int, 5> concept_id{};
  std::array<int, 4> edge_scene{};
  std::array<int, 4> produced{};  // 0 = low, 1 = high
  std::array<int, 4> required{};
};

struct SynthLabel {
  std::optional<int> break_edge;  // 1-based, matching AnnotatedChain
  Problem problem = Problem::none;
};

// Recomputes the label from latents alone: the first edge e >= 2 (1-based)
// whose scene differs from its predecessor breaks the chain with scene drift;
// otherwise the first edge whose required magnitude exceeds what the previous
// edge produced breaks it with threshold effect.
inline SynthLabel synthetic_oracle(const SynthLatents& lat) {
  for (int e = 1; e < 4; ++e) {
    if (lat.edge_scene[e] != lat.edge_scene[e - 1]) return {e + 1, Problem::scene};
    if (lat.produced[e - 1] < lat.required[e]) return {e + 1, Problem::threshold};
  }
  return {std::nullopt, Problem::none};
}

struct SynthChain {
  AnnotatedChain chain;
  SynthLatents latents;
};

inline std::vector<SynthChain> gen_synthetic_with_latents(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<SynthChain> out;
  out.reserve(spec.n_chains);
  const auto mag = [](int g) { return g ? std::string("high") : std::string("low"); };

  for (std::size_t k = 0; k < spec.n_chains; ++k) {
    Rng rng(derive_seed(seed, k));
    SynthLatents lat;

    const double u = rng.uniform();
    Problem injected = Problem::none;
    if (u < spec.p_scene_break)
      injected = Problem::scene;
    else if (u < spec.p_scene_break + spec.p_threshold_break)
      injected = Problem::threshold;
    // 1-based break edge in {2,3,4}; 0-based eb in {1,2,3}
    const int eb = (injected == Problem::none) ? -1 : 1 + static_cast<int>(rng.index(3));

    for (int i = 0; i < 5; ++i) lat.concept_id[i] = static_cast<int>(rng.index(spec.n_concepts));

    const int s = static_cast<int>(rng.index(spec.n_scenes));
    int s2 = s;
    if (injected == Problem::scene) s2 = (s + 1 + static_cast<int>(rng.index(spec.n_scenes - 1))) % static_cast<int>(spec.n_scenes);
    for (int e = 0; e < 4; ++e) lat.edge_scene[e] = (injected == Problem::scene && e >= eb) ? s2 : s;

    // Edge 0 never breaks, so its requirement is free noise. Requirements of
    // edges 1..3 are coins except the injected threshold edge, which demands
    // high while its predecessor produced low; every clean edge keeps
    // produced >= required.
    for (int e = 0; e < 4; ++e) lat.required[e] = static_cast<int>(rng.index(2));
    if (injected == Problem::threshold) lat.required[eb] = 1;
    for (int e = 0; e < 4; ++e) {
      if (injected == Problem::threshold && e == eb - 1) {
        lat.produced[e] = 0;
      } else if (e + 1 < 4 && lat.required[e + 1] == 1) {
        lat.produced[e] = 1;
      } else {
        lat.produced[e] = static_cast<int>(rng.index(2));
      }
    }

    AnnotatedChain chain;
    chain.id = "synth-" + std::to_string(k);
    for (int i = 0; i < 5; ++i) {
      const int edge = (i == 0) ? 0 : i - 1;  // event scene = scene of its producing edge
      const std::string m = (i == 0) ? "high" : mag(lat.produced[i - 1]);
      const std::string need = (i == 0) ? "low" : mag(lat.required[i - 1]);
      chain.events.push_back("concept_" + std::to_string(lat.concept_id[i]) + " scene_" +
                             std::to_string(lat.edge_scene[edge]) + " mag_" + m + " need_" + need);
    }
    for (int e = 0; e < 4; ++e)
      chain.contexts.push_back("ctx scene_" + std::to_string(lat.edge_scene[e]) + " mag_" + mag(lat.produced[e]));

    const SynthLabel label = synthetic_oracle(lat);
    if (injected == Problem::none) {
      if (label.break_edge) throw Error("synthetic generator: clean chain mislabeled by oracle");
    } else if (!label.break_edge || *label.break_edge != eb + 1 || label.problem != injected) {
      throw Error("synthetic generator: oracle disagrees with the injected break");
    }
    chain.break_edge = label.break_edge;
    chain.problem = label.problem;
    chain.validate();
    out.push_back({std::move(chain), lat});
  }
  return out;
}

inline std::vector<AnnotatedChain> gen_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  std::vector<AnnotatedChain> out;
  auto full = gen_synthetic_with_latents(spec, seed);
  out.reserve(full.size());
  for (auto& sc : full) out.push_back(std::move(sc.chain));
  return out;
}

}  // namespace reco
