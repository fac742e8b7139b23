#pragma once

// Parameter checkpoints: one line of JSON header, then the parameters as raw
// little-endian doubles. Round trips are bit-exact.
//
//   {"format":"fedrlhf-params/1","kind":"selector","dim":N,"round":r,"arch":{...}}\n<N doubles>

#include "fedrlhf/core/policy.hpp"
#include "fedrlhf/core/selector.hpp"

#include <filesystem>
#include <memory>
#include <stdexcept>

namespace fedrlhf {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void save_selector(const std::filesystem::path& path, const Selector& selector, int round = -1);
Selector load_selector(const std::filesystem::path& path, int* round = nullptr);

// Policies store prompt_dim, vocab shape and temperature; the vocabulary itself
// comes from the world and must match the stored shape.
void save_policy(const std::filesystem::path& path, const Policy& policy, int round = -1);
Policy load_policy(const std::filesystem::path& path, std::shared_ptr<const MatrixXd> vocab, int* round = nullptr);

}  // namespace fedrlhf
