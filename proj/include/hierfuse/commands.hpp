// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>

#include "hierfuse/dataset.hpp"
#include "hierfuse/model.hpp"
#include "hierfuse/trainer.hpp"

namespace hierfuse::cli {

// Process exit codes, one per failure class.
enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,   // gradient check exceeded tolerance
  kMissingFile = 2,   // missing or unreadable path (named in the message)
  kBadConfig = 3,     // invalid configuration
  kBadData = 4,       // dataset parse or schema error
  kExecutionError = 5 // dimension/contract violation while running
};

/// Everything one experiment needs: architecture, training setup, data
/// source (files or a synthetic recipe), and output directory.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::optional<std::filesystem::path> train_path;
  std::optional<std::filesystem::path> test_path;
  std::optional<SynthSpec> synth;
  std::filesystem::path out_dir = "out";
  // gradcheck settings
  double gc_epsilon = 1e-5;
  double gc_tolerance = 1e-4;
  int gc_utterances = 4;
  int gc_probes = 3;
  uint64_t gc_seed = 1234;
};

RunConfig read_run_config(const std::filesystem::path& path);
SynthSpec read_synth_spec(const std::filesystem::path& path);
nlohmann::json metrics_to_json(const Metrics& m);

/// Train on the configured data, evaluate on the test split, and write
/// model.json, history.jsonl, and metrics.json under the output directory.
int cmd_run(const std::filesystem::path& config_path);

/// Compare reverse-mode gradients against central differences for the
/// configured model; exit 0 only if every tensor stays under tolerance.
int cmd_gradcheck(const std::filesystem::path& config_path);

/// Generate a synthetic dataset to <out_dir>/{train,test}.jsonl (+ manifests).
int cmd_synth(const std::filesystem::path& spec_path, const std::filesystem::path& out_dir);

/// Evaluate a saved model on a dataset; metrics JSON goes to stdout and
/// optionally to a file.
int cmd_eval(const std::filesystem::path& model_path, const std::filesystem::path& data_path,
             const std::optional<std::filesystem::path>& metrics_out);

}  // namespace hierfuse::cli
