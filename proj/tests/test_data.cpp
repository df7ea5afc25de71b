#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "reco/data.hpp"

using namespace reco;
namespace fs = std::filesystem;

namespace {

AnnotatedChain make_chain(std::optional<int> break_edge, Problem problem) {
  AnnotatedChain c;
  c.id = "c1";
  for (int i = 1; i <= 5; ++i) c.events.push_back("event " + std::to_string(i));
  for (int i = 1; i <= 4; ++i) c.contexts.push_back("context " + std::to_string(i));
  c.break_edge = break_edge;
  c.problem = problem;
  return c;
}

// Brute-force prefix classifier: a prefix of length L (edges 1..L-1) is a
// positive when no edge is broken, the negative when exactly its last edge is
// the break edge, and skipped when the break sits strictly inside.
std::vector<Instance> split_oracle(const AnnotatedChain& chain) {
  std::vector<Instance> out;
  const int b = chain.break_edge.value_or(99);
  for (int len = 3; len <= 5; ++len) {
    const int last_edge = len - 1;
    if (b <= last_edge && b < last_edge) continue;  // interior break
    Instance inst;
    inst.id = chain.id + "#L" + std::to_string(len);
    inst.events.assign(chain.events.begin(), chain.events.begin() + len);
    inst.contexts.assign(chain.contexts.begin(), chain.contexts.begin() + len - 1);
    if (b == last_edge)
      inst.label = {false, chain.problem};
    else
      inst.label = {true, Problem::none};
    inst.source_chain = chain.id;
    inst.length = len;
    out.push_back(inst);
  }
  return out;
}

bool same_instances(const std::vector<Instance>& a, const std::vector<Instance>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].events != b[i].events || a[i].contexts != b[i].contexts ||
        a[i].label.reliable != b[i].label.reliable || a[i].label.problem != b[i].label.problem ||
        a[i].length != b[i].length)
      return false;
  }
  return true;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path temp_file(const char* name) {
  return fs::temp_directory_path() / (std::string("reco_data_test_") + name);
}

}  // namespace

TEST_CASE("split_chain worked example: break at 3 with scene drift") {
  const auto instances = split_chain(make_chain(3, Problem::scene));
  REQUIRE(instances.size() == 2);
  CHECK(instances[0].length == 3);
  CHECK(instances[0].label.reliable);
  CHECK(instances[0].label.problem == Problem::none);
  CHECK(instances[1].length == 4);
  CHECK_FALSE(instances[1].label.reliable);
  CHECK(instances[1].label.problem == Problem::scene);
}

TEST_CASE("split_chain emits all prefixes of an unbroken chain") {
  const auto instances = split_chain(make_chain(std::nullopt, Problem::none));
  REQUIRE(instances.size() == 3);
  for (const auto& inst : instances) {
    CHECK(inst.label.reliable);
    CHECK(inst.label.problem == Problem::none);
  }
  CHECK(instances[0].length == 3);
  CHECK(instances[2].length == 5);
}

TEST_CASE("split_chain break at 2 yields a single negative length-3 instance") {
  const auto instances = split_chain(make_chain(2, Problem::threshold));
  REQUIRE(instances.size() == 1);
  CHECK(instances[0].length == 3);
  CHECK_FALSE(instances[0].label.reliable);
  CHECK(instances[0].label.problem == Problem::threshold);
}

TEST_CASE("split_chain rejects chains broken at the first edge") {
  CHECK_THROWS_AS(split_chain(make_chain(1, Problem::scene)), ChainRejected);
  SplitCorpus corpus = split_corpus({make_chain(1, Problem::scene), make_chain(std::nullopt, Problem::none)});
  CHECK(corpus.rejected_ids == std::vector<std::string>{"c1"});
  CHECK(corpus.instances.size() == 3);
}

TEST_CASE("split_chain equals the brute-force prefix classifier on every configuration") {
  for (const Problem problem : {Problem::threshold, Problem::scene}) {
    for (int b = 2; b <= 4; ++b) {
      const auto chain = make_chain(b, problem);
      CHECK(same_instances(split_chain(chain), split_oracle(chain)));
    }
  }
  const auto clean = make_chain(std::nullopt, Problem::none);
  CHECK(same_instances(split_chain(clean), split_oracle(clean)));
}

TEST_CASE("per-length instance counts are monotone non-increasing over a corpus") {
  const auto chains = gen_synthetic({200, 6, 16, 0.3, 0.3}, 99);
  const SplitCorpus corpus = split_corpus(chains);
  std::map<int, std::size_t> counts;
  for (const auto& inst : corpus.instances) counts[inst.length] += 1;
  CHECK(counts[3] >= counts[4]);
  CHECK(counts[4] >= counts[5]);
  CHECK(counts[3] == chains.size());
}

TEST_CASE("negative instances end exactly at the source break edge") {
  const auto chains = gen_synthetic({150, 6, 16, 0.4, 0.4}, 5);
  std::map<std::string, AnnotatedChain> by_id;
  for (const auto& c : chains) by_id[c.id] = c;
  const SplitCorpus corpus = split_corpus(chains);
  std::size_t negatives = 0;
  for (const auto& inst : corpus.instances) {
    const auto& chain = by_id.at(inst.source_chain);
    if (inst.label.reliable) {
      CHECK(inst.length <= chain.break_edge.value_or(99));
    } else {
      ++negatives;
      REQUIRE(chain.break_edge.has_value());
      CHECK(inst.length == *chain.break_edge + 1);
      CHECK(inst.label.problem == chain.problem);
    }
  }
  CHECK(negatives > 0);
}

TEST_CASE("chain JSONL round-trips and validates") {
  const auto path = temp_file("chains.jsonl").string();
  std::vector<AnnotatedChain> chains;
  for (int k = 0; k < 10; ++k) {
    auto c = make_chain(k % 3 == 0 ? std::optional<int>(2 + k % 3) : std::nullopt,
                        k % 3 == 0 ? Problem::threshold : Problem::none);
    c.id = "chain-" + std::to_string(k);
    chains.push_back(std::move(c));
  }
  write_chains_jsonl(path, chains);
  const auto back = read_chains_jsonl(path);
  REQUIRE(back.size() == chains.size());
  for (std::size_t i = 0; i < chains.size(); ++i) {
    CHECK(back[i].id == chains[i].id);
    CHECK(back[i].events == chains[i].events);
    CHECK(back[i].contexts == chains[i].contexts);
    CHECK(back[i].break_edge == chains[i].break_edge);
    CHECK(back[i].problem == chains[i].problem);
  }
  fs::remove(path);
}

TEST_CASE("chain JSONL validation failures carry line numbers") {
  const auto path = temp_file("bad.jsonl").string();
  SECTION("four events") {
    std::ofstream out(path);
    out << R"({"kind":"chain","id":"x","events":["a","b","c","d"],"contexts":["1","2","3"],"break_edge":null,"problem":null})"
        << "\n";
    out.close();
    CHECK_THROWS_WITH(read_chains_jsonl(path), Catch::Matchers::ContainsSubstring(":1:"));
  }
  SECTION("break_edge without problem") {
    std::ofstream out(path);
    out << R"({"kind":"chain","id":"x","events":["a","b","c","d","e"],"contexts":["1","2","3","4"],"break_edge":3,"problem":null})"
        << "\n";
    out.close();
    CHECK_THROWS_AS(read_chains_jsonl(path), ValidationError);
  }
  SECTION("malformed json names the line") {
    std::ofstream out(path);
    out << R"({"kind":"chain","id":"ok","events":["a","b","c","d","e"],"contexts":["1","2","3","4"],"break_edge":null,"problem":null})"
        << "\n{{{\n";
    out.close();
    CHECK_THROWS_WITH(read_chains_jsonl(path), Catch::Matchers::ContainsSubstring(":2:"));
  }
  fs::remove(path);
}

TEST_CASE("instance JSONL round-trips") {
  const auto path = temp_file("instances.jsonl").string();
  const SplitCorpus corpus = split_corpus(gen_synthetic({20, 4, 8, 0.4, 0.3}, 3));
  write_instances_jsonl(path, corpus.instances);
  const auto back = read_instances_jsonl(path);
  REQUIRE(back.size() == corpus.instances.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == corpus.instances[i].id);
    CHECK(back[i].events == corpus.instances[i].events);
    CHECK(back[i].label.reliable == corpus.instances[i].label.reliable);
    CHECK(back[i].label.problem == corpus.instances[i].label.problem);
  }
  fs::remove(path);
}

TEST_CASE("jaccard") {
  CHECK(jaccard("red card", "red card") == 1.0);
  CHECK(jaccard("alpha beta", "gamma delta") == 0.0);
  CHECK(jaccard("red card", "red flag") == Catch::Approx(1.0 / 3.0));
  CHECK(jaccard("Red, card!", "red card") == 1.0);  // case/punctuation-insensitive tokens
  CHECK(jaccard("", "") == 0.0);
}

TEST_CASE("join_pairs_into_chains joins exact matches") {
  const std::vector<CausalPair> pairs{
      {"a", "b", "ctx ab"},
      {"b", "c", "ctx bc"},
      {"c", "d", "ctx cd"},
  };
  const auto chains = join_pairs_into_chains(pairs, 1.0);
  REQUIRE(chains.size() == 1);
  CHECK(chains[0].events == std::vector<std::string>{"a", "b", "c", "d"});
  CHECK(chains[0].contexts == std::vector<std::string>{"ctx ab", "ctx bc", "ctx cd"});
}

TEST_CASE("join_pairs_into_chains yields nothing without links") {
  const std::vector<CausalPair> pairs{{"a", "b", "ctx"}, {"x", "c", "ctx"}};
  CHECK(join_pairs_into_chains(pairs, 1.0).empty());
  CHECK_THROWS_AS(join_pairs_into_chains(pairs, 0.0), ValidationError);
  CHECK_THROWS_AS(join_pairs_into_chains({{"", "b", "c"}}, 0.5), ValidationError);
}

namespace {

// Exhaustive enumeration of maximal pair sequences, ordered the way the
// breadth-first search emits them: by event count, then lexicographically by
// pair indices.
struct OracleEnum {
  const std::vector<CausalPair>& pairs;
  double thr;
  std::size_t max_len;
  std::vector<std::vector<std::size_t>> seqs;

  void extend(std::vector<std::size_t> cur) {
    if (cur.size() + 1 == max_len) {
      seqs.push_back(std::move(cur));
      return;
    }
    bool extended = false;
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      if (std::find(cur.begin(), cur.end(), j) != cur.end()) continue;
      if (jaccard(pairs[cur.back()].effect, pairs[j].cause) < thr) continue;
      auto next = cur;
      next.push_back(j);
      extend(std::move(next));
      extended = true;
    }
    if (!extended && cur.size() + 1 >= 3) seqs.push_back(std::move(cur));
  }

  std::vector<RawChain> run(std::size_t max_overlap) {
    for (std::size_t i = 0; i < pairs.size(); ++i) extend({i});
    std::stable_sort(seqs.begin(), seqs.end(), [](const auto& a, const auto& b) {
      if (a.size() != b.size()) return a.size() < b.size();
      return a < b;
    });
    std::vector<RawChain> chains;
    std::vector<std::set<std::string>> kept;
    for (const auto& seq : seqs) {
      RawChain c;
      c.id = "oracle";
      c.events.push_back(pairs[seq.front()].cause);
      for (std::size_t j : seq) {
        c.events.push_back(pairs[j].effect);
        c.contexts.push_back(pairs[j].context);
      }
      std::set<std::string> ev(c.events.begin(), c.events.end());
      bool ok = true;
      for (const auto& prev : kept) {
        std::size_t overlap = 0;
        for (const auto& e : ev) overlap += prev.count(e);
        if (overlap > max_overlap) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      kept.push_back(std::move(ev));
      chains.push_back(std::move(c));
    }
    return chains;
  }
};

}  // namespace

TEST_CASE("join_pairs_into_chains equals the exhaustive-search oracle on random pairs") {
  Rng rng(13);
  const std::vector<std::string> vocab{"alpha", "beta gamma", "gamma",      "delta", "epsilon zeta",
                                       "zeta",  "eta",        "theta iota", "iota",  "kappa"};
  std::vector<CausalPair> pairs;
  for (int k = 0; k < 20; ++k) {
    const auto& cause = vocab[rng.index(vocab.size())];
    const auto& effect = vocab[rng.index(vocab.size())];
    pairs.push_back({cause, effect, "ctx " + std::to_string(k)});
  }
  const auto got = join_pairs_into_chains(pairs, 0.5);
  OracleEnum oracle{pairs, 0.5, 5, {}};
  const auto want = oracle.run(3);
  REQUIRE(!got.empty());
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].events == want[i].events);
    CHECK(got[i].contexts == want[i].contexts);
  }
  // The overlap constraint actually binds on this corpus.
  OracleEnum unconstrained{pairs, 0.5, 5, {}};
  CHECK(unconstrained.run(100).size() > want.size());
}

TEST_CASE("gen_synthetic respects the break probabilities at the extremes") {
  SECTION("zero probabilities give a clean corpus") {
    for (const auto& c : gen_synthetic({50, 4, 8, 0.0, 0.0}, 1)) {
      CHECK_FALSE(c.break_edge.has_value());
      CHECK(c.problem == Problem::none);
    }
  }
  SECTION("p_scene = 1 breaks every chain with scene drift") {
    for (const auto& c : gen_synthetic({50, 4, 8, 1.0, 0.0}, 1)) {
      REQUIRE(c.break_edge.has_value());
      CHECK(*c.break_edge >= 2);
      CHECK(*c.break_edge <= 4);
      CHECK(c.problem == Problem::scene);
    }
  }
  SECTION("invalid specs are rejected") {
    CHECK_THROWS_AS(gen_synthetic({10, 4, 8, 1.2, 0.0}, 1), ValidationError);
    CHECK_THROWS_AS(gen_synthetic({10, 4, 8, 0.6, 0.6}, 1), ValidationError);
    CHECK_THROWS_AS(gen_synthetic({10, 1, 8, 0.1, 0.1}, 1), ValidationError);
  }
}

TEST_CASE("gen_synthetic is byte-identical across runs with one seed") {
  const auto a = temp_file("synth_a.jsonl").string();
  const auto b = temp_file("synth_b.jsonl").string();
  write_chains_jsonl(a, gen_synthetic({40, 6, 16, 0.3, 0.3}, 2024));
  write_chains_jsonl(b, gen_synthetic({40, 6, 16, 0.3, 0.3}, 2024));
  CHECK(slurp(a) == slurp(b));
  write_chains_jsonl(b, gen_synthetic({40, 6, 16, 0.3, 0.3}, 2025));
  CHECK(slurp(a) != slurp(b));
  fs::remove(a);
  fs::remove(b);
}

TEST_CASE("gen_synthetic labels agree with the latent oracle on every chain") {
  const auto full = gen_synthetic_with_latents({300, 6, 16, 0.35, 0.35}, 7);
  for (const auto& sc : full) {
    const SynthLabel want = synthetic_oracle(sc.latents);
    CHECK(sc.chain.break_edge == want.break_edge);
    CHECK(sc.chain.problem == want.problem);
  }
}
