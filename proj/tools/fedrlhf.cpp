// fedrlhf: command-line front end for the federated preference pipeline.

#include "fedrlhf/fed/checkpoint.hpp"
#include "fedrlhf/pipeline/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

using namespace fedrlhf;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = "out";
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Root seed (overrides the config)");
  app->add_option("--config", c.config, "Experiment config JSON");
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
}

// Experiment config from --config (or defaults), with --seed applied before
// seeds are resolved.
ExperimentConfig load_config(const Common& c, const std::string& fallback_algorithm = "fedbis") {
  Json j = c.config.empty() ? Json{{"algorithm", fallback_algorithm}, {"world", Json::object()}} : read_json(c.config);
  if (c.seed) j["seed"] = *c.seed;
  if (!j.contains("output_dir")) j["output_dir"] = c.out;
  return config_from_json(j);
}

SyntheticWorld load_world(const std::string& path, const Common& c) {
  if (!path.empty()) return world_from_json(read_json(path));
  auto config = load_config(c);
  if (!config.world) throw ConfigError("world: this command needs a synthetic world (--world or a config with 'world')");
  return generate_synthetic_world(*config.world);
}

std::uint64_t root_seed(const Common& c) {
  if (c.seed) return *c.seed;
  if (!c.config.empty()) return load_config(c).seed;
  return 0;
}

Policy load_reference(const std::string& path, const SyntheticWorld& world, std::uint64_t seed) {
  if (!path.empty()) return load_policy(path, world.vocab);
  return reference_policy(world, derive_seed(seed, "reference"));
}

void print_reports(const std::vector<EvalReport>& reports) {
  for (const auto& r : reports) std::cout << r.metric << " = " << r.value << " (n = " << r.n << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated preference learning: FedBis / FedBiscuit selectors, preference generation, DPO"};
  app.require_subcommand(1);

  // gen-world
  Common gw;
  std::vector<int> clusters;
  std::optional<int> pairs;
  std::optional<double> separation, noise;
  auto* gen_world = app.add_subcommand("gen-world", "Synthesize a clustered preference world");
  add_common(gen_world, gw);
  gen_world->add_option("--clusters", clusters, "Clients per latent cluster, e.g. 10,10,10")->delimiter(',');
  gen_world->add_option("--pairs", pairs, "Preference pairs per client");
  gen_world->add_option("--separation", separation, "0: shared reward, 1: independent cluster rewards");
  gen_world->add_option("--label-noise", noise, "Label flip probability");

  // partition
  Common pa;
  std::string pa_input, scheme = "worker";
  int pa_clients = 0;
  double alpha = 0.3;
  auto* partition = app.add_subcommand("partition", "Split ingested pairs into clients");
  add_common(partition, pa);
  partition->add_option("--input", pa_input, "Preference JSONL")->required();
  partition->add_option("--scheme", scheme, "worker | dirichlet")->capture_default_str();
  partition->add_option("--clients", pa_clients, "Client count (dirichlet)");
  partition->add_option("--alpha", alpha, "Dirichlet concentration")->capture_default_str();

  // train-selector
  Common ts;
  std::string ts_world;
  std::optional<std::string> algo;
  std::optional<int> u, tau, warm, rounds, threads;
  auto* train = app.add_subcommand("train-selector", "Train binary selector(s) with fedbis, fedbiscuit or centralized");
  add_common(train, ts);
  train->add_option("--world", ts_world, "World JSON (overrides the config's world)");
  train->add_option("--algo", algo, "fedbis | fedbiscuit | centralized");
  train->add_option("--u", u, "Number of selectors");
  train->add_option("--tau", tau, "Regroup period");
  train->add_option("--warmup", warm, "Warm-up rounds per selector");
  train->add_option("--rounds", rounds, "Total communication rounds");
  train->add_option("--threads", threads, "Worker threads");

  // gen-prefs
  Common gp;
  std::string gp_world, gp_reference;
  std::vector<std::string> gp_selectors;
  int gp_n = 4, gp_instructions = 200;
  auto* gen_prefs = app.add_subcommand("gen-prefs", "Label policy samples with the selector ensemble");
  add_common(gen_prefs, gp);
  gen_prefs->add_option("--world", gp_world, "World JSON");
  gen_prefs->add_option("--selector", gp_selectors, "Selector checkpoint (repeat for an ensemble)")->required();
  gen_prefs->add_option("--reference", gp_reference, "Reference policy checkpoint (default: seeded theta_0)");
  gen_prefs->add_option("--n", gp_n, "Completions per instruction")->capture_default_str();
  gen_prefs->add_option("--instructions", gp_instructions, "Number of instructions")->capture_default_str();

  // dpo
  Common dp;
  std::string dp_world, dp_prefs, dp_reference;
  std::optional<int> dp_steps;
  std::optional<double> dp_beta, dp_lr;
  auto* dpo = app.add_subcommand("dpo", "Fine-tune the reference policy on a generated dataset");
  add_common(dpo, dp);
  dpo->add_option("--world", dp_world, "World JSON");
  dpo->add_option("--prefs", dp_prefs, "Generated preference JSONL")->required();
  dpo->add_option("--reference", dp_reference, "Reference policy checkpoint (default: seeded theta_0)");
  dpo->add_option("--steps", dp_steps, "Optimizer steps");
  dpo->add_option("--beta", dp_beta, "DPO temperature");
  dpo->add_option("--lr", dp_lr, "Learning rate");

  // eval
  Common ev;
  std::string ev_world, ev_labeled, ev_policy, ev_reference;
  std::vector<std::string> ev_selectors;
  auto* eval = app.add_subcommand("eval", "Score selectors and/or a policy");
  add_common(eval, ev);
  eval->add_option("--selector", ev_selectors, "Selector checkpoint (repeat for an ensemble)");
  eval->add_option("--labeled", ev_labeled, "Labeled preference JSONL (default: held-out pairs from the world)");
  eval->add_option("--world", ev_world, "World JSON");
  eval->add_option("--policy", ev_policy, "Policy checkpoint");
  eval->add_option("--reference", ev_reference, "Reference policy checkpoint (default: seeded theta_0)");

  // report
  Common rp;
  std::string rp_run;
  auto* report = app.add_subcommand("report", "Summarize a run directory as CSV/JSON");
  add_common(report, rp);
  report->add_option("--run", rp_run, "Run directory containing metrics.json")->required();

  // run
  Common rn;
  std::optional<std::string> preset, rn_algo;
  std::optional<int> rn_threads;
  bool no_resume = false;
  auto* run = app.add_subcommand("run", "Full pipeline: world, selectors, generated preferences, DPO, eval");
  add_common(run, rn);
  run->add_option("--preset", preset, "summarization-like | qa-like");
  run->add_option("--algo", rn_algo, "Override the algorithm");
  run->add_option("--threads", rn_threads, "Worker threads");
  run->add_flag("--no-resume", no_resume, "Ignore existing stage checkpoints");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_world) {
      auto config = load_config(gw);
      if (!config.world) throw ConfigError("world: gen-world needs a synthetic world config");
      auto spec = *config.world;
      if (!clusters.empty()) {
        spec.clients_per_cluster = clusters;
        spec.num_clusters = static_cast<int>(clusters.size());
      }
      if (pairs) spec.pairs_per_client = *pairs;
      if (separation) spec.separation = *separation;
      if (noise) spec.label_noise = *noise;
      const auto world = generate_synthetic_world(spec);
      write_json(fs::path(gw.out) / "world.json", world_to_json(world));
      std::vector<RawPreferencePair> all;
      for (const auto& c : world.client_pairs) all.insert(all.end(), c.begin(), c.end());
      write_preferences(fs::path(gw.out) / "pairs.jsonl", all);
      std::cout << "wrote " << world.clients.size() << " clients, " << all.size() << " pairs to " << gw.out << "\n";
    } else if (*partition) {
      const auto input = read_preferences(pa_input);
      Partition p;
      if (scheme == "worker") {
        p = to_partition(partition_by_worker(input));
      } else if (scheme == "dirichlet") {
        if (pa_clients < 1) throw ConfigError("--clients: dirichlet needs at least one client");
        auto rng = make_stream(root_seed(pa), "partition");
        p = partition_dirichlet(input, pa_clients, alpha, rng);
      } else {
        throw ConfigError("--scheme: expected 'worker' or 'dirichlet'");
      }
      write_json(fs::path(pa.out) / "partition.json", partition_to_json(p, scheme));
      std::cout << "wrote " << p.size() << " clients to " << pa.out << "/partition.json\n";
    } else if (*train) {
      Json j = ts.config.empty() ? Json{{"algorithm", "fedbis"}, {"world", Json::object()}} : read_json(ts.config);
      if (ts.seed) j["seed"] = *ts.seed;
      if (algo) j["algorithm"] = *algo;
      if (!ts_world.empty()) {
        j.erase("data");
        j["world"] = read_json(ts_world).at("spec");
      }
      if (u) j["biscuit"]["num_selectors"] = *u;
      if (tau) j["biscuit"]["regroup_period"] = *tau;
      if (warm) j["biscuit"]["warmup_rounds"] = *warm;
      if (rounds) j["fl"]["rounds"] = *rounds;
      if (threads) j["threads"] = *threads;
      j["rlft"]["enabled"] = false;
      j["output_dir"] = ts.out;
      const auto config = config_from_json(j);
      const auto data = prepare_data(config);
      const auto inputs = make_eval_inputs(config, data);
      const auto result = train_selectors(config, data, inputs);
      const fs::path dir = ts.out;
      for (std::size_t s = 0; s < result.selectors.size(); ++s) {
        save_selector(dir / "checkpoints" / ("selector_" + std::to_string(s) + ".bin"), result.selectors[s],
                      result.logs.back().round);
      }
      write_text(dir / "rounds.csv", round_logs_csv(result.logs));
      write_round_logs(dir / "rounds.jsonl", result.logs);
      write_json(dir / "assignments.json", assignments_to_json(result.history));
      write_json(dir / "config.resolved.json", to_json(config));
      std::cout << "trained " << result.selectors.size() << " selector(s); held-out agreement "
                << agreement(result.selectors, inputs.heldout) << "\n";
    } else if (*gen_prefs) {
      const auto world = load_world(gp_world, gp);
      const auto seed = root_seed(gp);
      std::vector<Selector> selectors;
      for (const auto& p : gp_selectors) selectors.push_back(load_selector(p));
      const auto reference = load_reference(gp_reference, world, seed);
      const auto instructions = sample_prompts(world.spec, gp_instructions, derive_seed(seed, "rlft-instructions"));
      const auto dataset = build_generated_dataset(reference, selectors, instructions, gp_n, derive_seed(seed, "gen"));
      write_generated(fs::path(gp.out) / "gen_prefs.jsonl", dataset);
      std::cout << "wrote " << dataset.size() << " records to " << gp.out << "/gen_prefs.jsonl\n";
    } else if (*dpo) {
      const auto world = load_world(dp_world, dp);
      const auto seed = root_seed(dp);
      DPOConfig config = dp.config.empty() ? RlftSpec{}.dpo : load_config(dp).rlft.dpo;
      config.seed = derive_seed(seed, "dpo");
      if (dp_steps) config.steps = *dp_steps;
      if (dp_beta) config.beta = *dp_beta;
      if (dp_lr) config.optimizer.lr = *dp_lr;
      const auto reference = load_reference(dp_reference, world, seed);
      const auto policy = dpo_train(reference, read_generated(dp_prefs), config);
      save_policy(fs::path(dp.out) / "checkpoints" / "reference.bin", reference, 0);
      save_policy(fs::path(dp.out) / "checkpoints" / "policy.bin", policy, config.steps);
      std::cout << "wrote " << dp.out << "/checkpoints/policy.bin\n";
    } else if (*eval) {
      if (ev_selectors.empty() && ev_policy.empty()) throw ConfigError("eval: give --selector and/or --policy");
      const auto seed = root_seed(ev);
      std::optional<SyntheticWorld> world;
      if (!ev_world.empty() || ev_labeled.empty() || !ev_policy.empty()) world = load_world(ev_world, ev);
      std::vector<EvalReport> reports;
      const std::string digest = ev.config.empty() ? "" : config_digest(load_config(ev));
      if (!ev_selectors.empty()) {
        std::vector<Selector> selectors;
        for (const auto& p : ev_selectors) selectors.push_back(load_selector(p));
        std::vector<SymmetrizedExample> labeled;
        if (!ev_labeled.empty()) {
          const auto raw = read_preferences(ev_labeled);
          auto rng = make_stream(seed, "eval-symmetrize");
          labeled = symmetrize(raw, SymmetrizeMode::kBoth, rng);
        } else {
          labeled = sample_heldout(*world, 20, derive_seed(seed, "heldout"));
        }
        reports.push_back({"agreement", agreement(selectors, labeled), labeled.size(), digest, {}});
        reports.push_back({"swap_consistency", swap_consistency(selectors, labeled), labeled.size(), digest, {}});
      }
      if (!ev_policy.empty()) {
        const auto policy = load_policy(ev_policy, world->vocab);
        const auto reference = load_reference(ev_reference, *world, seed);
        const auto instructions = sample_prompts(world->spec, 200, derive_seed(seed, "eval-instructions"));
        const auto refs = greedy_completions(reference, instructions);
        reports.push_back({"win_rate", win_rate(policy, instructions, refs, world->oracle), instructions.size(), digest, {}});
        reports.push_back({"policy_rating", policy_rating(policy, instructions, world->oracle), instructions.size(), digest, {}});
      }
      Json out = Json::array();
      for (const auto& r : reports) out.push_back(to_json(r));
      write_json(fs::path(ev.out) / "eval.json", out);
      print_reports(reports);
    } else if (*report) {
      const auto metrics = read_json(fs::path(rp_run) / "metrics.json");
      std::vector<EvalReport> reports;
      std::string csv = "metric,value,n\n";
      for (const auto& j : metrics.at("reports")) {
        EvalReport r{j.at("metric").get<std::string>(), j.at("value").get<double>(), j.at("n").get<std::size_t>(),
                     j.at("config_digest").get<std::string>(), {}};
        if (j.contains("series")) {
          for (const auto& p : j["series"]) r.series.emplace_back(p[0].get<int>(), p[1].get<double>());
        } else {
          csv += r.metric + "," + Json(r.value).dump() + "," + std::to_string(r.n) + "\n";
          std::cout << r.metric << " = " << r.value << "\n";
        }
        reports.push_back(std::move(r));
      }
      write_text(fs::path(rp.out) / "summary.csv", csv);
      write_text(fs::path(rp.out) / "series.csv", series_csv(reports));
      std::cout << "wrote " << rp.out << "/summary.csv and " << rp.out << "/series.csv\n";
    } else if (*run) {
      Json j;
      if (!rn.config.empty()) {
        j = read_json(rn.config);
      } else if (preset) {
        j = {{"algorithm", "fedbiscuit"}};
      } else {
        throw ConfigError("run: give --config or --preset");
      }
      if (preset) j["preset"] = *preset;
      if (rn_algo) j["algorithm"] = *rn_algo;
      if (rn.seed) j["seed"] = *rn.seed;
      if (rn_threads) j["threads"] = *rn_threads;
      if (!j.contains("output_dir") || rn.out != "out") j["output_dir"] = rn.out;
      PipelineOptions options;
      options.resume = !no_resume;
      return run_pipeline(config_from_json(j), std::cout, options);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
