#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "reco/reco.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

reco::TrainConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw reco::IoError("cannot open config " + path);
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw reco::ValidationError(path + ": " + e.what());
  }
  return reco::config_from_json(j);
}

struct GenArgs {
  std::string out;
  std::size_t chains = 0;
  std::size_t scenes = 6;
  std::size_t concepts = 16;
  double p_scene = 0.25;
  double p_threshold = 0.25;
  std::uint64_t seed = 1;
};

int run_gen_synth(const GenArgs& a) {
  reco::SynthSpec spec{a.chains, a.scenes, a.concepts, a.p_scene, a.p_threshold};
  spec.validate();
  const auto chains = reco::gen_synthetic(spec, a.seed);
  reco::write_chains_jsonl(a.out, chains);
  if (chains.empty()) std::cerr << "warning: generated an empty corpus (--chains 0)\n";
  std::size_t n_scene = 0, n_threshold = 0;
  for (const auto& c : chains) {
    if (c.problem == reco::Problem::scene) ++n_scene;
    if (c.problem == reco::Problem::threshold) ++n_threshold;
  }
  ordered_json summary;
  summary["out"] = a.out;
  summary["chains"] = chains.size();
  summary["scene_breaks"] = n_scene;
  summary["threshold_breaks"] = n_threshold;
  summary["clean"] = chains.size() - n_scene - n_threshold;
  summary["args"] = {{"scenes", a.scenes},
                     {"concepts", a.concepts},
                     {"p_scene", a.p_scene},
                     {"p_threshold", a.p_threshold},
                     {"seed", a.seed}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

struct SplitArgs {
  std::string in;
  std::string out_dir;
  double train = 0.8, dev = 0.1, test = 0.1;
  std::uint64_t seed = 1;
};

int run_split(const SplitArgs& a) {
  if (std::fabs(a.train + a.dev + a.test - 1.0) > 1e-9)
    throw reco::ValidationError("--train/--dev/--test must sum to 1");
  if (a.train < 0 || a.dev < 0 || a.test < 0) throw reco::ValidationError("split ratios must be non-negative");
  auto chains = reco::read_chains_jsonl(a.in);
  reco::Rng rng(a.seed);
  rng.shuffle(chains);
  const std::size_t n = chains.size();
  const auto n_train = static_cast<std::size_t>(std::llround(a.train * static_cast<double>(n)));
  const auto n_dev = static_cast<std::size_t>(std::llround(a.dev * static_cast<double>(n)));
  std::map<std::string, std::vector<reco::AnnotatedChain>> parts;
  for (std::size_t i = 0; i < n; ++i) {
    const char* part = i < n_train ? "train" : (i < n_train + n_dev ? "dev" : "test");
    parts[part].push_back(chains[i]);
  }

  fs::create_directories(a.out_dir);
  ordered_json stats;
  stats["in"] = a.in;
  stats["seed"] = a.seed;
  stats["ratios"] = {{"train", a.train}, {"dev", a.dev}, {"test", a.test}};
  std::vector<std::string> rejected;
  for (const char* part : {"train", "dev", "test"}) {
    const auto& part_chains = parts[part];
    const reco::SplitCorpus corpus = reco::split_corpus(part_chains);
    rejected.insert(rejected.end(), corpus.rejected_ids.begin(), corpus.rejected_ids.end());
    const std::string path = (fs::path(a.out_dir) / (std::string(part) + ".jsonl")).string();
    reco::write_instances_jsonl(path, corpus.instances);
    std::map<int, std::size_t> per_len{{3, 0}, {4, 0}, {5, 0}};
    for (const auto& inst : corpus.instances) per_len[inst.length] += 1;
    ordered_json row;
    row["chains"] = part_chains.size() - corpus.rejected_ids.size();
    row["instance_3"] = per_len[3];
    row["instance_4"] = per_len[4];
    row["instance_5"] = per_len[5];
    row["total"] = corpus.instances.size();
    row["file"] = path;
    stats["splits"][part] = row;
  }
  stats["rejected_chains"] = rejected;
  const std::string stats_path = (fs::path(a.out_dir) / "stats.json").string();
  std::ofstream stats_out(stats_path, std::ios::binary);
  if (!stats_out) throw reco::IoError("cannot write " + stats_path);
  stats_out << stats.dump(2) << "\n";
  std::cout << stats.dump(2) << "\n";
  return 0;
}

struct TrainArgs {
  std::string config_path;
  std::string train_path;
  std::string dev_path;
  std::string out;
  reco::TrainConfig cfg;
};

int run_train(const TrainArgs& a) {
  const auto provider = reco::make_provider(a.cfg.provider);
  const auto train_set = reco::read_instances_jsonl(a.train_path);
  const auto dev_set = reco::read_instances_jsonl(a.dev_path);
  const reco::TrainResult result = reco::train(a.cfg, *provider, train_set, dev_set);
  for (std::size_t e = 0; e < result.log.size(); ++e) {
    std::cout << "epoch " << (e + 1) << "/" << result.log.size() << " loss " << result.log[e].train_loss
              << " dev_acc " << result.log[e].dev_accuracy << "\n";
  }
  reco::save_checkpoint(a.out, result.best);
  std::cout << "best epoch " << (result.best_epoch + 1) << " dev_acc "
            << result.log[result.best_epoch].dev_accuracy << " -> " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string data;
  std::string report;
  int jobs = 1;
};

int run_eval(const EvalArgs& a) {
  const reco::Checkpoint cp = reco::load_checkpoint(a.model);
  const auto provider = reco::make_provider(cp.config.provider);
  const auto data = reco::read_instances_jsonl(a.data);
  const reco::MetricsReport metrics = reco::evaluate(cp.store, cp.config, *provider, data, a.jobs);
  ordered_json report;
  report["model"] = a.model;
  report["data"] = a.data;
  report["metrics"] = metrics.to_json();
  report["config"] = reco::config_to_json(cp.config);
  std::cout << report.dump(2) << "\n";
  if (!a.report.empty()) {
    std::ofstream out(a.report, std::ios::binary);
    if (!out) throw reco::IoError("cannot write " + a.report);
    out << report.dump(2) << "\n";
  }
  return 0;
}

struct PredictArgs {
  std::string model;
  std::string instance;
};

int run_predict(const PredictArgs& a) {
  const reco::Checkpoint cp = reco::load_checkpoint(a.model);
  std::ifstream in(a.instance);
  if (!in) throw reco::IoError("cannot open instance " + a.instance);
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw reco::ValidationError(a.instance + ": " + e.what());
  }
  reco::Instance inst;
  inst.id = j.value("id", "instance");
  inst.events = j.at("events").get<std::vector<std::string>>();
  inst.contexts = j.at("contexts").get<std::vector<std::string>>();
  inst.length = static_cast<int>(inst.events.size());
  inst.source_chain = j.value("source_chain", inst.id);
  inst.validate();

  const auto provider = reco::make_provider(cp.config.provider);
  reco::Trace tr(false);
  const reco::ModelTensors params = reco::lease_params(tr, cp.store);
  reco::ForwardOut out;
  if (cp.config.eval_epsilon_mode == reco::EvalEpsilonMode::sample) {
    reco::Rng rng(cp.config.seed);
    reco::GaussianNoise noise(rng);
    out = reco::forward_instance(tr, params, *provider, inst, cp.config, reco::Mode::predict, noise);
  } else {
    reco::ZeroNoise noise;
    out = reco::forward_instance(tr, params, *provider, inst, cp.config, reco::Mode::predict, noise);
  }
  ordered_json report = reco::diagnosis_to_json(reco::diagnose(out.pred));
  report["model_config"] = reco::config_to_json(cp.config);
  std::cout << report.dump(2) << "\n";
  return 0;
}

struct GradcheckArgs {
  std::size_t m = 8;
  std::size_t d = 16;
  std::uint64_t seed = 1;
  double h = 1e-4;
};

int run_gradcheck(const GradcheckArgs& a) {
  const reco::GradCheckReport rep = reco::run_model_gradcheck(a.m, a.d, a.seed, a.h);
  ordered_json j;
  j["m"] = a.m;
  j["d"] = a.d;
  j["seed"] = a.seed;
  j["h"] = a.h;
  j["parameters"] = rep.n_params;
  j["coordinates"] = rep.n_coords;
  j["max_rel_err"] = rep.max_rel_err;
  j["worst"] = rep.worst;
  j["elapsed_seconds"] = rep.elapsed_seconds;
  j["pass"] = rep.max_rel_err < 1e-4;
  std::cout << j.dump(2) << "\n";
  return rep.max_rel_err < 1e-4 ? 0 : 4;
}

struct AblateArgs {
  std::string variant;
  std::string test_path;
  std::string report;
  TrainArgs train_args;
};

int run_ablate(AblateArgs& a) {
  if (a.variant == "no-eacvae")
    a.train_args.cfg.no_eacvae = true;
  else if (a.variant == "no-logic")
    a.train_args.cfg.no_logic_supervision = true;
  else if (a.variant == "problem-ce")
    a.train_args.cfg.problem_ce_instead_of_logic = true;
  else
    throw reco::ValidationError("unknown ablation variant: " + a.variant);
  a.train_args.cfg.validate();

  const auto provider = reco::make_provider(a.train_args.cfg.provider);
  const auto train_set = reco::read_instances_jsonl(a.train_args.train_path);
  const auto dev_set = reco::read_instances_jsonl(a.train_args.dev_path);
  const reco::TrainResult result = reco::train(a.train_args.cfg, *provider, train_set, dev_set);
  if (!a.train_args.out.empty()) reco::save_checkpoint(a.train_args.out, result.best);

  const auto test_set = reco::read_instances_jsonl(a.test_path);
  const reco::MetricsReport metrics = reco::evaluate(result.best.store, result.best.config, *provider, test_set);
  ordered_json report;
  report["variant"] = a.variant;
  report["best_epoch"] = result.best_epoch + 1;
  report["metrics"] = metrics.to_json();
  report["config"] = reco::config_to_json(result.best.config);
  std::cout << report.dump(2) << "\n";
  if (!a.report.empty()) {
    std::ofstream out(a.report, std::ios::binary);
    if (!out) throw reco::IoError("cannot write " + a.report);
    out << report.dump(2) << "\n";
  }
  return 0;
}

void add_config_flags(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--config", a.config_path, "JSON config file; flags below override its values");
  cmd->add_option("--m", a.cfg.m, "embedding dimension m");
  cmd->add_option("--lr", a.cfg.lr, "Adam learning rate");
  cmd->add_option("--epochs", a.cfg.epochs, "training epochs");
  cmd->add_option("--batch-size", a.cfg.batch_size, "batch size");
  cmd->add_option("--lambda1", a.cfg.lambda1, "logic loss coefficient");
  cmd->add_option("--lambda2", a.cfg.lambda2, "KL loss coefficient");
  cmd->add_option("--seed", a.cfg.seed, "RNG seed");
  cmd->add_option("--provider", a.cfg.provider.kind, "embedding provider: hashing|file|http");
  cmd->add_option("--provider-dim", a.cfg.provider.dim, "hashing provider dimension");
  cmd->add_option("--provider-path", a.cfg.provider.path, "file provider path");
  cmd->add_option("--provider-endpoint", a.cfg.provider.endpoint, "http provider endpoint");
  cmd->add_option("--provider-timeout-ms", a.cfg.provider.timeout_ms, "http provider timeout");
  cmd->add_flag("--no-eacvae", a.cfg.no_eacvae, "use projected contexts directly as exogenous variables");
  cmd->add_flag("--no-logic", a.cfg.no_logic_supervision, "drop the logic loss term");
  cmd->add_flag("--problem-ce", a.cfg.problem_ce_instead_of_logic,
                "replace the logic loss with per-head cross entropies");
  const std::map<std::string, reco::KlDirection> kl_map{
      {"prior-to-posterior", reco::KlDirection::prior_to_posterior},
      {"posterior-to-prior", reco::KlDirection::posterior_to_prior}};
  cmd->add_option("--kl-direction", a.cfg.kl_direction, "KL direction")
      ->transform(CLI::CheckedTransformer(kl_map, CLI::ignore_case));
  const std::map<std::string, reco::EvalEpsilonMode> eps_map{{"zero", reco::EvalEpsilonMode::zero},
                                                             {"sample", reco::EvalEpsilonMode::sample}};
  cmd->add_option("--eval-epsilon-mode", a.cfg.eval_epsilon_mode, "epsilon at evaluation: zero|sample")
      ->transform(CLI::CheckedTransformer(eps_map, CLI::ignore_case));
  const std::map<std::string, reco::UInLastMode> u_map{{"aggregated", reco::UInLastMode::aggregated},
                                                       {"raw", reco::UInLastMode::raw}};
  cmd->add_option("--u-in-last-mode", a.cfg.u_in_last_mode, "reliability head exogenous input: aggregated|raw")
      ->transform(CLI::CheckedTransformer(u_map, CLI::ignore_case));
}

// Config file values first, then any flag the user explicitly passed on top.
void apply_config_file(CLI::App* cmd, TrainArgs& a) {
  if (a.config_path.empty()) return;
  reco::TrainConfig merged = load_config_file(a.config_path);
  auto passed = [&](const char* flag) { return cmd->count(flag) > 0; };
  if (passed("--m")) merged.m = a.cfg.m;
  if (passed("--lr")) merged.lr = a.cfg.lr;
  if (passed("--epochs")) merged.epochs = a.cfg.epochs;
  if (passed("--batch-size")) merged.batch_size = a.cfg.batch_size;
  if (passed("--lambda1")) merged.lambda1 = a.cfg.lambda1;
  if (passed("--lambda2")) merged.lambda2 = a.cfg.lambda2;
  if (passed("--seed")) merged.seed = a.cfg.seed;
  if (passed("--provider")) merged.provider.kind = a.cfg.provider.kind;
  if (passed("--provider-dim")) merged.provider.dim = a.cfg.provider.dim;
  if (passed("--provider-path")) merged.provider.path = a.cfg.provider.path;
  if (passed("--provider-endpoint")) merged.provider.endpoint = a.cfg.provider.endpoint;
  if (passed("--provider-timeout-ms")) merged.provider.timeout_ms = a.cfg.provider.timeout_ms;
  if (passed("--no-eacvae")) merged.no_eacvae = a.cfg.no_eacvae;
  if (passed("--no-logic")) merged.no_logic_supervision = a.cfg.no_logic_supervision;
  if (passed("--problem-ce")) merged.problem_ce_instead_of_logic = a.cfg.problem_ce_instead_of_logic;
  if (passed("--kl-direction")) merged.kl_direction = a.cfg.kl_direction;
  if (passed("--eval-epsilon-mode")) merged.eval_epsilon_mode = a.cfg.eval_epsilon_mode;
  if (passed("--u-in-last-mode")) merged.u_in_last_mode = a.cfg.u_in_last_mode;
  a.cfg = merged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reco: causal chain reliability toolkit"};
  app.set_version_flag("--version", "reco 1.0.0");
  app.require_subcommand(0, 1);

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-synth", "generate a synthetic labeled chain corpus");
  gen_cmd->add_option("--out", gen.out, "output chains JSONL")->required();
  gen_cmd->add_option("--chains", gen.chains, "number of chains")->required();
  gen_cmd->add_option("--scenes", gen.scenes, "number of scene ids");
  gen_cmd->add_option("--concepts", gen.concepts, "number of concept ids");
  gen_cmd->add_option("--p-scene", gen.p_scene, "probability of a scene-drift break");
  gen_cmd->add_option("--p-threshold", gen.p_threshold, "probability of a threshold-effect break");
  gen_cmd->add_option("--seed", gen.seed, "RNG seed");

  SplitArgs split;
  CLI::App* split_cmd = app.add_subcommand("split", "split labeled chains into train/dev/test instances");
  split_cmd->add_option("--in", split.in, "input chains JSONL")->required();
  split_cmd->add_option("--out-dir", split.out_dir, "output directory")->required();
  split_cmd->add_option("--train", split.train, "train ratio");
  split_cmd->add_option("--dev", split.dev, "dev ratio");
  split_cmd->add_option("--test", split.test, "test ratio");
  split_cmd->add_option("--seed", split.seed, "RNG seed");

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--train", train.train_path, "training instances JSONL")->required();
  train_cmd->add_option("--dev", train.dev_path, "dev instances JSONL")->required();
  train_cmd->add_option("--out", train.out, "output checkpoint path")->required();
  add_config_flags(train_cmd, train);

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--model", eval.model, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval.data, "instances JSONL")->required();
  eval_cmd->add_option("--report", eval.report, "also write the JSON report here");
  eval_cmd->add_option("--jobs", eval.jobs, "evaluation worker threads");

  PredictArgs predict;
  CLI::App* predict_cmd = app.add_subcommand("predict", "diagnose a single instance");
  predict_cmd->add_option("--model", predict.model, "checkpoint path")->required();
  predict_cmd->add_option("--instance", predict.instance, "instance JSON file")->required();

  GradcheckArgs gradcheck;
  CLI::App* gradcheck_cmd = app.add_subcommand("gradcheck", "verify model gradients against finite differences");
  gradcheck_cmd->add_option("--m", gradcheck.m, "embedding dimension");
  gradcheck_cmd->add_option("--d", gradcheck.d, "provider dimension");
  gradcheck_cmd->add_option("--seed", gradcheck.seed, "RNG seed");
  gradcheck_cmd->add_option("--step", gradcheck.h, "finite difference step");

  AblateArgs ablate;
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "train and evaluate an ablation variant");
  ablate_cmd->add_option("--variant", ablate.variant, "no-eacvae|no-logic|problem-ce")->required();
  ablate_cmd->add_option("--train", ablate.train_args.train_path, "training instances JSONL")->required();
  ablate_cmd->add_option("--dev", ablate.train_args.dev_path, "dev instances JSONL")->required();
  ablate_cmd->add_option("--test", ablate.test_path, "test instances JSONL")->required();
  ablate_cmd->add_option("--out", ablate.train_args.out, "optional checkpoint output");
  ablate_cmd->add_option("--report", ablate.report, "also write the JSON report here");
  add_config_flags(ablate_cmd, ablate.train_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen_cmd->parsed()) return run_gen_synth(gen);
    if (split_cmd->parsed()) return run_split(split);
    if (train_cmd->parsed()) {
      apply_config_file(train_cmd, train);
      train.cfg.validate();
      return run_train(train);
    }
    if (eval_cmd->parsed()) return run_eval(eval);
    if (predict_cmd->parsed()) return run_predict(predict);
    if (gradcheck_cmd->parsed()) return run_gradcheck(gradcheck);
    if (ablate_cmd->parsed()) {
      apply_config_file(ablate_cmd, ablate.train_args);
      return run_ablate(ablate);
    }
    std::cerr << app.help();
    return 2;
  } catch (const reco::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const reco::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
