// SPDX-License-Identifier: Apache-2.0
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hierfuse/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"hierfuse: hierarchical multimodal fusion models over utterance sequences"};
  app.require_subcommand(1);
  app.footer(
      "exit codes:\n"
      "  0    success\n"
      "  1    gradient check exceeded tolerance\n"
      "  2    missing or unreadable file (named in the message)\n"
      "  3    invalid configuration\n"
      "  4    dataset parse or schema error\n"
      "  5    dimension/contract violation while running\n"
      "  >=100  command-line usage errors\n"
      "\n"
      "HIERFUSE_THREADS caps the worker threads used for batch-parallel\n"
      "passes (default: machine parallelism).");

  std::string config_path, spec_path, out_dir, model_path, data_path, metrics_path;

  CLI::App* run = app.add_subcommand("run", "train and evaluate a model described by a config file");
  run->add_option("--config", config_path, "run config JSON")->required();

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "compare reverse-mode gradients against central differences");
  gradcheck->add_option("--config", config_path, "run config JSON (tiny dims recommended)")->required();

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset to disk");
  synth->add_option("--spec", spec_path, "synth spec JSON")->required();
  synth->add_option("--out", out_dir, "output directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a saved model on a dataset");
  eval->add_option("--model", model_path, "model JSON written by run")->required();
  eval->add_option("--data", data_path, "dataset JSONL (manifest sidecar required)")->required();
  eval->add_option("--out", metrics_path, "also write the metrics JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);  // usage errors carry CLI11's own exit codes
  }

  if (app.got_subcommand(run)) return hierfuse::cli::cmd_run(config_path);
  if (app.got_subcommand(gradcheck)) return hierfuse::cli::cmd_gradcheck(config_path);
  if (app.got_subcommand(synth)) return hierfuse::cli::cmd_synth(spec_path, out_dir);
  if (app.got_subcommand(eval)) {
    std::optional<std::filesystem::path> out;
    if (!metrics_path.empty()) out = metrics_path;
    return hierfuse::cli::cmd_eval(model_path, data_path, out);
  }
  return hierfuse::cli::kBadConfig;
}
