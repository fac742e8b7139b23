#include "fedrlhf/pipeline/config.hpp"

namespace fedrlhf {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kFedBis: return "fedbis";
    case Algorithm::kFedBiscuit: return "fedbiscuit";
    case Algorithm::kCentralized: return "centralized";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "fedbis") return Algorithm::kFedBis;
  if (name == "fedbiscuit") return Algorithm::kFedBiscuit;
  if (name == "centralized") return Algorithm::kCentralized;
  throw ConfigError("algorithm: expected 'fedbis', 'fedbiscuit' or 'centralized', got '" + name + "'");
}

namespace {

std::string tournament_name(Tournament t) { return t == Tournament::kKnockout ? "knockout" : "round-robin"; }

Tournament tournament_from(const std::string& s, const std::string& field) {
  if (s == "knockout") return Tournament::kKnockout;
  if (s == "round-robin") return Tournament::kRoundRobin;
  throw ConfigError(field + ": expected 'knockout' or 'round-robin'");
}

template <typename F>
void wrap(const std::string& field, F&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

OptimizerSpec optimizer_from_json(const Json& j, const std::string& where, OptimizerSpec s) {
  StrictObject o(j, where);
  if (o.has("kind")) wrap(o.field("kind"), [&] { s.kind = optimizer_kind_from_string(o.get<std::string>("kind")); });
  o.read("lr", s.lr);
  o.read("beta1", s.beta1);
  o.read("beta2", s.beta2);
  o.read("eps", s.eps);
  o.read("weight_decay", s.weight_decay);
  o.read("rms_decay", s.rms_decay);
  o.finish();
  wrap(where, [&] { s.validate(); });
  return s;
}

DataSource data_from_json(const Json& j) {
  StrictObject o(j, "data");
  DataSource d;
  d.path = o.get<std::string>("path");
  o.read("partition", d.partition);
  if (d.partition != "worker" && d.partition != "dirichlet") {
    throw ConfigError("data.partition: expected 'worker' or 'dirichlet'");
  }
  o.read("clients", d.clients);
  o.read("alpha", d.alpha);
  o.read("val_fraction", d.val_fraction);
  if (o.has("symmetrize")) {
    const auto m = o.get<std::string>("symmetrize");
    if (m != "both" && m != "sampled") throw ConfigError("data.symmetrize: expected 'both' or 'sampled'");
    d.symmetrize = m == "both" ? SymmetrizeMode::kBoth : SymmetrizeMode::kSampled;
  }
  o.finish();
  if (d.partition == "dirichlet" && d.clients < 1) throw ConfigError("data.clients: dirichlet needs clients >= 1");
  if (!(d.alpha > 0.0)) throw ConfigError("data.alpha: must be > 0");
  return d;
}

}  // namespace

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  c.algorithm = Algorithm::kFedBiscuit;
  c.eval.series_every = 25;
  SyntheticWorldSpec w;
  if (name == "summarization-like") {
    w.clients_per_cluster = {18, 18, 17};
    w.pairs_per_client = 100;
    c.fl.clients_per_round = 5;
    c.fl.local_iters = 30;
    c.fl.rounds = 500;
    c.regroup_period = 50;
  } else if (name == "qa-like") {
    w.clients_per_cluster = {100, 100, 100};
    w.pairs_per_client = 40;
    c.fl.clients_per_round = 10;
    c.fl.local_iters = 10;
    c.fl.rounds = 200;
    c.regroup_period = 100;
  } else {
    throw ConfigError("preset: unknown preset '" + name + "' (expected 'summarization-like' or 'qa-like')");
  }
  w.num_clusters = static_cast<int>(w.clients_per_cluster.size());
  c.num_selectors = 3;
  c.warmup_rounds = 50;
  c.world = w;
  return c;
}

ExperimentConfig config_from_json(const Json& j) {
  StrictObject o(j, "");
  ExperimentConfig c;
  if (o.has("preset")) c = preset_config(o.get<std::string>("preset"));
  c.algorithm = algorithm_from_string(o.get<std::string>("algorithm"));
  o.read("seed", c.seed);
  o.read("threads", c.threads);
  o.read("output_dir", c.output_dir);

  if (o.has("world") && o.has("data")) throw ConfigError("world: 'world' and 'data' are mutually exclusive");
  bool world_seed_given = false;
  if (o.has("world")) {
    const Json& w = o.require("world");
    world_seed_given = w.is_object() && w.contains("seed");
    c.world = world_spec_from_json(w, "world", c.world.value_or(SyntheticWorldSpec{}));
    c.data.reset();
  } else if (o.has("data")) {
    c.data = data_from_json(o.require("data"));
    c.world.reset();
  }
  if (c.world && !world_seed_given) c.world->seed = c.seed;

  if (o.has("selector")) {
    StrictObject s(o.require("selector"), "selector");
    s.read("hidden", c.hidden);
    s.finish();
  }
  if (o.has("fl")) {
    StrictObject f(o.require("fl"), "fl");
    f.read("clients_per_round", c.fl.clients_per_round);
    f.read("local_iters", c.fl.local_iters);
    f.read("rounds", c.fl.rounds);
    f.read("batch_size", c.fl.batch_size);
    if (f.has("aggregation")) {
      wrap(f.field("aggregation"), [&] { c.fl.aggregation = aggregation_rule_from_string(f.get<std::string>("aggregation")); });
    }
    if (f.has("optimizer")) c.fl.optimizer = optimizer_from_json(f.require("optimizer"), "fl.optimizer", c.fl.optimizer);
    f.finish();
  }
  if (o.has("biscuit")) {
    StrictObject b(o.require("biscuit"), "biscuit");
    b.read("num_selectors", c.num_selectors);
    b.read("warmup_rounds", c.warmup_rounds);
    b.read("regroup_period", c.regroup_period);
    b.finish();
  }
  if (o.has("rlft")) {
    StrictObject r(o.require("rlft"), "rlft");
    r.read("enabled", c.rlft.enabled);
    r.read("instructions", c.rlft.instructions);
    r.read("n", c.rlft.n);
    r.read("reference_scale", c.rlft.reference_scale);
    if (r.has("dpo")) {
      StrictObject d(r.require("dpo"), "rlft.dpo");
      d.read("beta", c.rlft.dpo.beta);
      d.read("steps", c.rlft.dpo.steps);
      d.read("batch_size", c.rlft.dpo.batch_size);
      if (d.has("optimizer")) {
        c.rlft.dpo.optimizer = optimizer_from_json(d.require("optimizer"), "rlft.dpo.optimizer", c.rlft.dpo.optimizer);
      }
      d.finish();
    }
    r.finish();
  }
  if (o.has("eval")) {
    StrictObject e(o.require("eval"), "eval");
    e.read("heldout_pairs_per_client", c.eval.heldout_pairs_per_client);
    e.read("instructions", c.eval.instructions);
    e.read("best_of_n", c.eval.best_of_n);
    e.read("series_every", c.eval.series_every);
    if (e.has("tournament")) c.eval.tournament = tournament_from(e.get<std::string>("tournament"), e.field("tournament"));
    e.finish();
  }
  o.finish();
  c.validate();
  return c;
}

int ExperimentConfig::num_clients() const {
  if (world) return world->num_clients();
  if (data && data->partition == "dirichlet") return data->clients;
  return -1;  // known once the worker ids are read
}

void ExperimentConfig::validate() const {
  if (world.has_value() == data.has_value()) throw ConfigError("world: exactly one of 'world' and 'data' is required");
  if (threads < 1) throw ConfigError("threads: must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
  if (hidden.empty()) throw ConfigError("selector.hidden: need at least one hidden layer");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("selector.hidden: layer sizes must be >= 1");
  }
  const int m = num_clients();
  if (algorithm == Algorithm::kCentralized) {
    wrap("fl", [&] { fl_config(*this).validate(1); });
  } else if (m > 0) {
    wrap("fl", [&] { fl_config(*this).validate(m); });
  }
  if (algorithm == Algorithm::kFedBiscuit) {
    if (num_selectors < 1) throw ConfigError("biscuit.num_selectors: must be >= 1");
    if (warmup_rounds < 0) throw ConfigError("biscuit.warmup_rounds: must be >= 0");
    if (regroup_period < 1) throw ConfigError("biscuit.regroup_period: must be >= 1");
    if (fl.rounds <= num_selectors * warmup_rounds) {
      throw ConfigError("fl.rounds: the budget must exceed num_selectors * warmup_rounds (" +
                        std::to_string(num_selectors * warmup_rounds) + ")");
    }
    if (m > 0 && m < num_selectors) throw ConfigError("biscuit.num_selectors: more selectors than clients");
  }
  if (rlft.enabled) {
    if (!world) throw ConfigError("rlft.enabled: needs a synthetic world (set rlft.enabled to false for ingested data)");
    if (rlft.instructions < 1) throw ConfigError("rlft.instructions: must be >= 1");
    if (rlft.n < 2) throw ConfigError("rlft.n: must be >= 2");
    if (!(rlft.reference_scale >= 0.0)) throw ConfigError("rlft.reference_scale: must be >= 0");
    wrap("rlft.dpo", [&] { rlft.dpo.validate(); });
  }
  if (eval.heldout_pairs_per_client < 1) throw ConfigError("eval.heldout_pairs_per_client: must be >= 1");
  if (eval.instructions < 1) throw ConfigError("eval.instructions: must be >= 1");
  if (eval.best_of_n < 2) throw ConfigError("eval.best_of_n: must be >= 2");
  if (eval.series_every < 0) throw ConfigError("eval.series_every: must be >= 0");
}

Json to_json(const OptimizerSpec& s) {
  Json j;
  j["kind"] = to_string(s.kind);
  j["lr"] = s.lr;
  j["beta1"] = s.beta1;
  j["beta2"] = s.beta2;
  j["eps"] = s.eps;
  j["weight_decay"] = s.weight_decay;
  j["rms_decay"] = s.rms_decay;
  return j;
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["algorithm"] = to_string(c.algorithm);
  if (!c.preset.empty()) j["preset"] = c.preset;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["output_dir"] = c.output_dir;
  if (c.world) j["world"] = to_json(*c.world);
  if (c.data) {
    Json d;
    d["path"] = c.data->path;
    d["partition"] = c.data->partition;
    d["clients"] = c.data->clients;
    d["alpha"] = c.data->alpha;
    d["val_fraction"] = c.data->val_fraction;
    d["symmetrize"] = c.data->symmetrize == SymmetrizeMode::kBoth ? "both" : "sampled";
    j["data"] = d;
  }
  j["selector"] = {{"hidden", c.hidden}};
  j["fl"] = {{"clients_per_round", c.fl.clients_per_round},
             {"local_iters", c.fl.local_iters},
             {"rounds", c.fl.rounds},
             {"batch_size", c.fl.batch_size},
             {"aggregation", to_string(c.fl.aggregation)},
             {"optimizer", to_json(c.fl.optimizer)}};
  j["biscuit"] = {{"num_selectors", c.num_selectors},
                  {"warmup_rounds", c.warmup_rounds},
                  {"regroup_period", c.regroup_period}};
  j["rlft"] = {{"enabled", c.rlft.enabled},
               {"instructions", c.rlft.instructions},
               {"n", c.rlft.n},
               {"reference_scale", c.rlft.reference_scale},
               {"dpo",
                {{"beta", c.rlft.dpo.beta},
                 {"steps", c.rlft.dpo.steps},
                 {"batch_size", c.rlft.dpo.batch_size},
                 {"optimizer", to_json(c.rlft.dpo.optimizer)}}}};
  j["eval"] = {{"heldout_pairs_per_client", c.eval.heldout_pairs_per_client},
               {"instructions", c.eval.instructions},
               {"best_of_n", c.eval.best_of_n},
               {"series_every", c.eval.series_every},
               {"tournament", tournament_name(c.eval.tournament)}};
  return j;
}

std::string config_digest(const ExperimentConfig& config) {
  Json j = to_json(config);
  j.erase("threads");
  j.erase("output_dir");
  const auto text = j.dump();
  return to_hex(fnv1a(text.data(), text.size()));
}

FLConfig fl_config(const ExperimentConfig& c) {
  FLConfig fl = c.fl;
  fl.seed = derive_seed(c.seed, "fl");
  fl.threads = c.threads;
  if (c.algorithm == Algorithm::kCentralized) fl.clients_per_round = 1;
  return fl;
}

BiscuitConfig biscuit_config(const ExperimentConfig& c) {
  BiscuitConfig b;
  b.fl = fl_config(c);
  b.num_selectors = c.num_selectors;
  b.warmup_rounds = c.warmup_rounds;
  b.regroup_period = c.regroup_period;
  b.fl.rounds = c.fl.rounds - c.num_selectors * c.warmup_rounds;
  return b;
}

DPOConfig dpo_config(const ExperimentConfig& c) {
  DPOConfig d = c.rlft.dpo;
  d.seed = derive_seed(c.seed, "dpo");
  return d;
}

}  // namespace fedrlhf
