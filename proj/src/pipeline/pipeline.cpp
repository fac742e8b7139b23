#include "fedrlhf/pipeline/pipeline.hpp"

#include "fedrlhf/fed/checkpoint.hpp"

#include <ostream>

namespace fedrlhf {

namespace fs = std::filesystem;

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData out;
  if (config.world) {
    out.world = generate_synthetic_world(*config.world);
    out.clients = out.world->clients;
    out.prompt_dim = config.world->prompt_dim;
    out.completion_dim = config.world->completion_dim;
    return out;
  }
  const auto& src = *config.data;
  const auto pairs = read_preferences(src.path);
  if (src.partition == "worker") {
    out.partition = to_partition(partition_by_worker(pairs));
  } else {
    auto rng = make_stream(config.seed, "partition");
    out.partition = partition_dirichlet(pairs, src.clients, src.alpha, rng);
  }
  out.partition_scheme = src.partition;
  out.clients = build_client_datasets(materialize(pairs, out.partition), src.symmetrize, src.val_fraction,
                                      derive_seed(config.seed, "split"));
  out.prompt_dim = static_cast<int>(pairs.front().x.size());
  out.completion_dim = static_cast<int>(pairs.front().chosen.size());
  return out;
}

EvalInputs make_eval_inputs(const ExperimentConfig& config, const PreparedData& data) {
  EvalInputs in;
  if (!data.world) {
    for (const auto& c : data.clients) in.heldout.insert(in.heldout.end(), c.val.begin(), c.val.end());
    if (in.heldout.empty()) throw EmptyBatchError("no validation data to evaluate on");
    return in;
  }
  const auto& world = *data.world;
  in.heldout = sample_heldout(world, config.eval.heldout_pairs_per_client, derive_seed(config.seed, "heldout"));
  in.instructions = sample_prompts(world.spec, config.eval.instructions, derive_seed(config.seed, "eval-instructions"));
  in.reference = reference_policy(world, derive_seed(config.seed, "reference"), config.rlft.reference_scale);
  in.candidates = generate_candidates(*in.reference, in.instructions, config.eval.best_of_n,
                                      derive_seed(config.seed, "bon"));
  return in;
}

Selector initial_selector(const ExperimentConfig& config, const PreparedData& data) {
  auto rng = make_stream(config.seed, "selector-init");
  return init_selector(SelectorArch{data.prompt_dim, data.completion_dim, config.hidden}, rng);
}

namespace {

class SeriesProbe {
 public:
  SeriesProbe(const ExperimentConfig& config, const PreparedData& data, const EvalInputs& inputs)
      : config_(config), data_(data), inputs_(inputs) {
    agreement_.metric = "agreement";
    rating_.metric = "bon_rating";
  }

  void operator()(int round, std::span<const Selector> selectors) {
    const int every = config_.eval.series_every;
    if (every <= 0 || (round + 1) % every != 0) return;
    agreement_.series.emplace_back(round, agreement(selectors, inputs_.heldout));
    if (data_.world) {
      rating_.series.emplace_back(round, best_of_n_rating(selector_judge(selectors, data_.world->vocab),
                                                          data_.world->oracle, inputs_.instructions,
                                                          inputs_.candidates, config_.eval.tournament));
    }
  }

  std::vector<EvalReport> reports() const {
    std::vector<EvalReport> out;
    if (agreement_.series.empty()) return out;
    out.push_back(finish(agreement_, inputs_.heldout.size()));
    if (data_.world) out.push_back(finish(rating_, inputs_.instructions.size()));
    return out;
  }

 private:
  EvalReport finish(EvalReport r, std::size_t n) const {
    r.value = r.series.back().second;
    r.n = n;
    r.config_digest = config_digest(config_);
    return r;
  }

  const ExperimentConfig& config_;
  const PreparedData& data_;
  const EvalInputs& inputs_;
  EvalReport agreement_;
  EvalReport rating_;
};

}  // namespace

SelectorRun train_selectors(const ExperimentConfig& config, const PreparedData& data, const EvalInputs& inputs) {
  const Selector init = initial_selector(config, data);
  SeriesProbe probe(config, data, inputs);
  SelectorRun run;
  switch (config.algorithm) {
    case Algorithm::kFedBis: {
      auto res = run_fedbis(fl_config(config), data.clients, init,
                            [&](int r, const Selector& s) { probe(r, std::span(&s, 1)); });
      run.selectors = {std::move(res.selector)};
      run.logs = std::move(res.logs);
      break;
    }
    case Algorithm::kCentralized: {
      const std::vector<ClientDataset> pooled{pool_clients(data.clients)};
      auto res = run_fedbis(fl_config(config), pooled, init,
                            [&](int r, const Selector& s) { probe(r, std::span(&s, 1)); });
      run.selectors = {std::move(res.selector)};
      run.logs = std::move(res.logs);
      for (auto& l : run.logs) l.phase = "centralized";
      break;
    }
    case Algorithm::kFedBiscuit: {
      auto res = run_fedbiscuit(biscuit_config(config), data.clients, init,
                                [&](int r, std::span<const Selector> s) { probe(r, s); });
      run.selectors = std::move(res.selectors);
      run.logs = std::move(res.logs);
      run.history = std::move(res.history);
      break;
    }
  }
  run.series = probe.reports();
  return run;
}

std::vector<EvalReport> evaluate(const ExperimentConfig& config, const PreparedData& data, const EvalInputs& inputs,
                                 std::span<const Selector> selectors, const std::vector<int>* final_assignment,
                                 const Policy* policy) {
  const auto digest = config_digest(config);
  std::vector<EvalReport> out;
  auto add = [&](std::string metric, double value, std::size_t n) {
    out.push_back(EvalReport{std::move(metric), value, n, digest, {}});
  };
  add("heldout_agreement", agreement(selectors, inputs.heldout), inputs.heldout.size());
  for (std::size_t u = 0; selectors.size() > 1 && u < selectors.size(); ++u) {
    add("heldout_agreement_selector_" + std::to_string(u), agreement(selectors.subspan(u, 1), inputs.heldout),
        inputs.heldout.size());
  }
  add("swap_consistency", swap_consistency(selectors, inputs.heldout), inputs.heldout.size());
  if (!data.world) return out;

  const auto& world = *data.world;
  if (final_assignment) {
    add("cluster_purity", cluster_purity(*final_assignment, world.latent), world.latent.size());
  }
  const auto n = inputs.instructions.size();
  const auto mode = config.eval.tournament;
  add("bon_rating_selector",
      best_of_n_rating(selector_judge(selectors, world.vocab), world.oracle, inputs.instructions, inputs.candidates, mode),
      n);
  add("bon_rating_random",
      best_of_n_rating(random_judge(derive_seed(config.seed, "random-judge")), world.oracle, inputs.instructions,
                       inputs.candidates, mode),
      n);
  add("bon_rating_oracle",
      best_of_n_rating(oracle_judge(world.oracle), world.oracle, inputs.instructions, inputs.candidates, mode), n);
  add("reference_rating", policy_rating(*inputs.reference, inputs.instructions, world.oracle), n);
  if (policy) {
    add("policy_rating", policy_rating(*policy, inputs.instructions, world.oracle), n);
    const auto refs = greedy_completions(*inputs.reference, inputs.instructions);
    add("win_rate", win_rate(*policy, inputs.instructions, refs, world.oracle), n);
  }
  return out;
}

namespace {

struct StageMarker {
  fs::path dir;
  std::string digest;

  fs::path path(const std::string& stage) const { return dir / "stages" / (stage + ".json"); }

  // Payload of a finished stage, if its marker matches and its files exist.
  std::optional<Json> load(const std::string& stage) const {
    const auto p = path(stage);
    if (!fs::exists(p)) return std::nullopt;
    Json j;
    try {
      j = read_json(p);
    } catch (const std::exception&) {
      return std::nullopt;
    }
    if (j.value("config_digest", "") != digest) return std::nullopt;
    for (const auto& f : j.value("files", std::vector<std::string>{})) {
      if (!fs::exists(dir / f)) return std::nullopt;
    }
    return j.value("payload", Json::object());
  }

  void save(const std::string& stage, const std::vector<std::string>& files, Json payload = Json::object()) const {
    Json j;
    j["stage"] = stage;
    j["config_digest"] = digest;
    j["files"] = files;
    j["payload"] = std::move(payload);
    write_json(path(stage), j);
  }
};

Json reports_to_json(std::span<const EvalReport> reports) {
  Json a = Json::array();
  for (const auto& r : reports) a.push_back(to_json(r));
  return a;
}

std::vector<EvalReport> reports_from_json(const Json& a) {
  std::vector<EvalReport> out;
  for (const auto& j : a) {
    EvalReport r;
    r.metric = j.at("metric").get<std::string>();
    r.value = j.at("value").get<double>();
    r.n = j.at("n").get<std::size_t>();
    r.config_digest = j.at("config_digest").get<std::string>();
    if (j.contains("series")) {
      for (const auto& p : j["series"]) r.series.emplace_back(p[0].get<int>(), p[1].get<double>());
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string selector_file(std::size_t u) { return "checkpoints/selector_" + std::to_string(u) + ".bin"; }

}  // namespace

int run_pipeline(const ExperimentConfig& config, std::ostream& log, const PipelineOptions& options) {
  config.validate();
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  const auto digest = config_digest(config);
  write_json(dir / "config.resolved.json", to_json(config));
  const StageMarker marker{dir, digest};
  auto cached = [&](const std::string& stage) { return options.resume ? marker.load(stage) : std::nullopt; };

  // data: cheap and deterministic, so it is rebuilt on every run
  log << "[data] preparing clients\n";
  const auto data = prepare_data(config);
  if (data.world) {
    write_json(dir / "world.json", world_to_json(*data.world));
  } else {
    write_json(dir / "partition.json", partition_to_json(data.partition, data.partition_scheme));
  }
  marker.save("data", {data.world ? "world.json" : "partition.json"});
  if (config.algorithm == Algorithm::kFedBiscuit && static_cast<int>(data.clients.size()) < config.num_selectors) {
    throw ConfigError("biscuit.num_selectors: more selectors than clients");
  }
  const auto inputs = make_eval_inputs(config, data);

  // selectors
  std::vector<Selector> selectors;
  std::vector<EvalReport> series;
  std::optional<std::vector<int>> final_assignment;
  Json totals;
  bool fresh = false;
  if (auto payload = cached("selectors")) {
    log << "[selectors] resumed from checkpoints\n";
    for (std::size_t u = 0; u < payload->at("num_selectors").get<std::size_t>(); ++u) {
      selectors.push_back(load_selector(dir / selector_file(u)));
    }
    series = reports_from_json(payload->at("series"));
    if (payload->contains("final_assignment")) final_assignment = payload->at("final_assignment").get<std::vector<int>>();
    totals = payload->at("bytes");
  } else {
    fresh = true;
    log << "[selectors] training " << to_string(config.algorithm) << " for " << config.fl.rounds << " rounds\n";
    auto run = train_selectors(config, data, inputs);
    std::vector<std::string> files{"rounds.csv", "rounds.jsonl", "assignments.json"};
    for (std::size_t u = 0; u < run.selectors.size(); ++u) {
      save_selector(dir / selector_file(u), run.selectors[u], run.logs.empty() ? -1 : run.logs.back().round);
      files.push_back(selector_file(u));
    }
    write_text(dir / "rounds.csv", round_logs_csv(run.logs));
    write_round_logs(dir / "rounds.jsonl", run.logs);
    write_json(dir / "assignments.json", assignments_to_json(run.history));
    const auto& last = run.logs.back();
    totals = {{"broadcast", last.broadcast_bytes}, {"upload", last.upload_bytes}, {"grouping", last.grouping_bytes}};
    Json stage_payload{{"num_selectors", run.selectors.size()}, {"series", reports_to_json(run.series)}, {"bytes", totals}};
    if (!run.history.empty()) {
      final_assignment = run.history.back().assignment.selector_of;
      stage_payload["final_assignment"] = *final_assignment;
    }
    marker.save("selectors", files, stage_payload);
    selectors = std::move(run.selectors);
    series = std::move(run.series);
  }

  // generated preferences and DPO
  std::optional<Policy> policy;
  if (config.rlft.enabled) {
    GeneratedPreferenceDataset generated;
    std::optional<Json> gen_payload = fresh ? std::nullopt : cached("gen-prefs");
    if (gen_payload) {
      log << "[gen-prefs] resumed\n";
      generated = read_generated(dir / "gen_prefs.jsonl");
    } else {
      fresh = true;
      log << "[gen-prefs] labeling " << config.rlft.instructions << " instructions, n = " << config.rlft.n << "\n";
      const auto instructions = sample_prompts(data.world->spec, config.rlft.instructions,
                                               derive_seed(config.seed, "rlft-instructions"));
      generated = build_generated_dataset(*inputs.reference, selectors, instructions, config.rlft.n,
                                          derive_seed(config.seed, "gen"), config.threads);
      write_generated(dir / "gen_prefs.jsonl", generated);
      marker.save("gen-prefs", {"gen_prefs.jsonl"});
    }
    std::optional<Json> dpo_payload = fresh ? std::nullopt : cached("dpo");
    if (dpo_payload) {
      log << "[dpo] resumed\n";
      policy = load_policy(dir / "checkpoints/policy.bin", data.world->vocab);
    } else {
      log << "[dpo] " << config.rlft.dpo.steps << " steps\n";
      policy = dpo_train(*inputs.reference, generated, dpo_config(config));
      save_policy(dir / "checkpoints/reference.bin", *inputs.reference, 0);
      save_policy(dir / "checkpoints/policy.bin", *policy, config.rlft.dpo.steps);
      marker.save("dpo", {"checkpoints/reference.bin", "checkpoints/policy.bin"});
    }
  }

  // evaluation
  log << "[eval] computing metrics\n";
  auto reports = evaluate(config, data, inputs, selectors, final_assignment ? &*final_assignment : nullptr,
                          policy ? &*policy : nullptr);
  for (const char* kind : {"broadcast", "upload", "grouping"}) {
    reports.push_back(EvalReport{std::string(kind) + "_bytes", totals.at(kind).get<double>(),
                                 static_cast<std::size_t>(config.fl.rounds), digest, {}});
  }
  for (const auto& s : series) {
    reports.push_back(s);
    if (s.metric == "bon_rating" && s.series.size() >= 2) {
      std::vector<double> values;
      for (auto [r, v] : s.series) values.push_back(v);
      const auto curve = hacking_curve(values);
      reports.push_back(EvalReport{"hacking_best_round", static_cast<double>(s.series[static_cast<std::size_t>(curve.best_index)].first),
                                   values.size(), digest, {}});
      reports.push_back(EvalReport{"hacking_inflection", curve.inflection ? 1.0 : 0.0, values.size(), digest, {}});
    }
  }
  write_text(dir / "series.csv", series_csv(series));
  Json metrics;
  metrics["config_digest"] = digest;
  metrics["algorithm"] = to_string(config.algorithm);
  metrics["reports"] = reports_to_json(reports);
  write_json(dir / "metrics.json", metrics);
  marker.save("eval", {"metrics.json", "series.csv"});
  for (const auto& r : reports) {
    if (r.series.empty()) log << "  " << r.metric << " = " << r.value << "\n";
  }
  return 0;
}

}  // namespace fedrlhf
