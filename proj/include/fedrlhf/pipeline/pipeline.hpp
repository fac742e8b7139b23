#pragma once

// End-to-end runner: data -> selectors -> generated preferences -> DPO -> eval.
//
// Output directory layout:
//   config.resolved.json     every field, defaults included
//   world.json               synthetic worlds only
//   partition.json           ingested data only
//   rounds.csv, rounds.jsonl one row per communication round
//   assignments.json         grouping history (fedbiscuit; [] otherwise)
//   gen_prefs.jsonl          generated preference dataset
//   series.csv               per-round evaluation series
//   metrics.json             list of EvalReport
//   checkpoints/             selector_<u>.bin, reference.bin, policy.bin
//   stages/<stage>.json      completion markers used for resuming

#include "fedrlhf/pipeline/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace fedrlhf {

struct PreparedData {
  std::optional<SyntheticWorld> world;
  std::vector<ClientDataset> clients;
  int prompt_dim = 0;
  int completion_dim = 0;
  Partition partition;  // ingested data only
  std::string partition_scheme;
};

PreparedData prepare_data(const ExperimentConfig& config);

struct EvalInputs {
  std::vector<SymmetrizedExample> heldout;
  std::vector<VectorXd> instructions;        // synthetic worlds only
  std::optional<Policy> reference;           // theta_0
  std::vector<std::vector<int>> candidates;  // best-of-n pools drawn from theta_0
};

EvalInputs make_eval_inputs(const ExperimentConfig& config, const PreparedData& data);

Selector initial_selector(const ExperimentConfig& config, const PreparedData& data);

struct SelectorRun {
  std::vector<Selector> selectors;
  std::vector<RoundLog> logs;
  std::vector<AssignmentRecord> history;
  std::vector<EvalReport> series;  // "agreement" and, for worlds, "bon_rating" by round
};

SelectorRun train_selectors(const ExperimentConfig& config, const PreparedData& data, const EvalInputs& inputs);

// Final metrics. `policy` is the DPO result when fine-tuning ran.
std::vector<EvalReport> evaluate(const ExperimentConfig& config, const PreparedData& data, const EvalInputs& inputs,
                                 std::span<const Selector> selectors, const std::vector<int>* final_assignment,
                                 const Policy* policy);

struct PipelineOptions {
  bool resume = true;  // reuse stages whose markers match the config digest
};

// Runs every stage, writing the layout above under config.output_dir.
// Returns 0 on success.
int run_pipeline(const ExperimentConfig& config, std::ostream& log, const PipelineOptions& options = {});

}  // namespace fedrlhf
