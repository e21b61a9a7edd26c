// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hierfuse/dataset.hpp"
#include "hierfuse/model.hpp"

namespace hierfuse {

/// Mean masked negative log-likelihood. Probabilities are clamped at
/// kLogProbFloor before the log. Errors if the mask admits no utterances.
double cross_entropy(const Matrix& probs, const std::vector<int>& labels,
                     const std::vector<uint8_t>& mask);

/// Adam moments mirroring one model's parameter set.
struct AdamState {
  AdamState(const ModelParams& params, double lr, double beta1, double beta2, double epsilon);

  std::vector<std::pair<std::string, Matrix>> first_moment;
  std::vector<std::pair<std::string, Matrix>> second_moment;
  long step_count = 0;
  double lr, beta1, beta2, epsilon;
};

/// One bias-corrected Adam update; increments the step counter once.
void adam_step(ModelParams& params, const GradientStore& grads, AdamState& state);

struct TrainConfig {
  int max_epochs = 200;
  int patience = 10;
  double val_fraction = 0.2;
  int batch_size = 16;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  uint64_t seed = 1;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_acc = 0;
};

struct TrainResult {
  ModelParams params;  // weights from the best validation epoch
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_loss = 0;
};

/// Splits the given videos into train/validation by whole videos, runs
/// shuffled mini-batches of videos through Adam, and early-stops once the
/// validation loss has not improved for `patience` epochs.
TrainResult train(const ModelConfig& cfg, const ModelParams& init, const Dataset& data,
                  const TrainConfig& tc);

struct Metrics {
  double accuracy = 0;
  std::vector<double> precision, recall, f1;  // per class
  double f1_weighted = 0;
  std::vector<std::vector<long>> confusion;  // [true][predicted]
  long n_utterances = 0;
};

Metrics evaluate(const ModelConfig& cfg, const ModelParams& params, const Dataset& data);
Metrics evaluate_batches(const ModelConfig& cfg, const ModelParams& params,
                         const std::vector<PaddedBatch>& batches);

// One epoch line per JSON object: {"epoch", "train_loss", "val_loss", "val_acc"}.
void write_history_jsonl(const std::filesystem::path& path, const std::vector<EpochStats>& history);

/// Unnormalized loss pieces for one video: gradients and value of the masked
/// NLL sum, plus the masked utterance count. Callers divide by the total
/// masked count of whatever aggregate they are forming.
struct VideoLoss {
  GradientStore grads;
  double nll_sum = 0;
  long masked = 0;
};
VideoLoss video_loss_grad(const ModelConfig& cfg, const ModelParams& params, const PaddedBatch& batch);

/// Mean masked loss over a set of padded videos (no gradients).
double dataset_loss(const ModelConfig& cfg, const ModelParams& params,
                    const std::vector<PaddedBatch>& batches);

// Reverse-mode gradients of the mean masked loss checked against central
// differences, tensor by tensor.
struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0;
};
struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0;
  std::string worst_name;

  bool passed(double tolerance) const { return worst < tolerance; }
};
GradCheckReport compare_grads(const GradientStore& analytic, const GradientStore& numeric);
GradCheckReport gradient_check(const ModelConfig& cfg, ModelParams& params, const PaddedBatch& batch,
                               double epsilon);

/// Gradient check over several probe batches. Each scalar keeps its smallest
/// relative error across the probes before the per-tensor max is taken: a
/// wrong derivative rule is wrong on every probe, while difference noise on a
/// near-zero entry moves with the probe and is discounted.
GradCheckReport gradient_check(const ModelConfig& cfg, ModelParams& params,
                               const std::vector<PaddedBatch>& probes, double epsilon);

/// Random normal features with uniform labels and an all-true mask; the
/// deterministic probe batch used by gradient checking.
PaddedBatch random_batch(const ModelConfig& cfg, int n_utterances, uint64_t seed);

/// Worker count for batch-parallel passes: HIERFUSE_THREADS when set,
/// otherwise hardware concurrency.
int worker_threads();

}  // namespace hierfuse
