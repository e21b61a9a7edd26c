// SPDX-License-Identifier: Apache-2.0
#include "hierfuse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include <json.hpp>

#include "hierfuse/errors.hpp"

namespace hierfuse {

double cross_entropy(const Matrix& probs, const std::vector<int>& labels,
                     const std::vector<uint8_t>& mask) {
  if (static_cast<int>(labels.size()) != probs.rows() || static_cast<int>(mask.size()) != probs.rows())
    throw ContractError("cross_entropy: labels/mask length vs " + std::to_string(probs.rows()) + " rows");
  double total = 0.0;
  long count = 0;
  for (int t = 0; t < probs.rows(); ++t) {
    if (!mask[t]) continue;
    if (labels[t] < 0 || labels[t] >= probs.cols())
      throw ContractError("cross_entropy: label " + std::to_string(labels[t]) + " outside [0, " +
                          std::to_string(probs.cols()) + ")");
    total += -std::log(std::max(probs(t, labels[t]), kLogProbFloor));
    ++count;
  }
  if (count == 0) throw ContractError("cross_entropy: mask admits no utterances");
  return total / static_cast<double>(count);
}

AdamState::AdamState(const ModelParams& params, double lr_, double beta1_, double beta2_, double epsilon_)
    : lr(lr_), beta1(beta1_), beta2(beta2_), epsilon(epsilon_) {
  visit_params(params, [&](const std::string& name, const Matrix& m) {
    first_moment.emplace_back(name, Matrix(m.rows(), m.cols()));
    second_moment.emplace_back(name, Matrix(m.rows(), m.cols()));
  });
}

void adam_step(ModelParams& params, const GradientStore& grads, AdamState& state) {
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step_count);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step_count);
  size_t slot = 0;
  visit_params(params, [&](const std::string& name, Matrix& w) {
    auto& [m_name, m] = state.first_moment[slot];
    auto& [v_name, v] = state.second_moment[slot];
    ++slot;
    if (m_name != name) throw ContractError("adam_step: state order diverged at '" + name + "'");
    const Matrix& g = grads.at(name);
    if (!g.same_shape(w))
      throw ContractError("adam_step: gradient for '" + name + "' is " + g.shape_str() + ", parameter is " +
                          w.shape_str());
    for (long i = 0; i < w.size(); ++i) {
      const double gi = g.data()[i];
      double& mi = m.data()[i];
      double& vi = v.data()[i];
      mi = state.beta1 * mi + (1.0 - state.beta1) * gi;
      vi = state.beta2 * vi + (1.0 - state.beta2) * gi * gi;
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      w.data()[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  });
}

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("train config: max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("train config: patience must be >= 1");
  if (!(val_fraction > 0) || !(val_fraction < 1))
    throw ConfigError("train config: val_fraction must lie in (0, 1)");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (!(lr >= 0)) throw ConfigError("train config: lr must be >= 0");
}

VideoLoss video_loss_grad(const ModelConfig& cfg, const ModelParams& params, const PaddedBatch& batch) {
  Tape tape;
  ModelGraph graph = forward_graph(tape, cfg, params, batch.features);
  Var nll = tape.masked_nll(graph.probs, batch.labels, batch.mask);
  VideoLoss out;
  out.nll_sum = nll.value()(0, 0);
  out.masked = batch.masked_count();
  out.grads = tape.backward(nll);
  return out;
}

double dataset_loss(const ModelConfig& cfg, const ModelParams& params,
                    const std::vector<PaddedBatch>& batches) {
  double total = 0.0;
  long count = 0;
  for (const PaddedBatch& b : batches) {
    Tape tape;
    ModelGraph graph = forward_graph(tape, cfg, params, b.features);
    Var nll = tape.masked_nll(graph.probs, b.labels, b.mask);
    total += nll.value()(0, 0);
    count += b.masked_count();
  }
  if (count == 0) throw ContractError("dataset_loss: no masked-in utterances");
  return total / static_cast<double>(count);
}

int worker_threads() {
  if (const char* env = std::getenv("HIERFUSE_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

// Per-video losses for a batch slice, reduced in video-index order so the sum
// is identical whatever the worker count.
std::vector<VideoLoss> batch_losses(const ModelConfig& cfg, const ModelParams& params,
                                    const std::vector<const PaddedBatch*>& videos) {
  std::vector<VideoLoss> losses(videos.size());
  const int threads = std::min<int>(worker_threads(), static_cast<int>(videos.size()));
  if (threads <= 1) {
    for (size_t i = 0; i < videos.size(); ++i) losses[i] = video_loss_grad(cfg, params, *videos[i]);
    return losses;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w]() {
      for (size_t i = w; i < videos.size(); i += threads)
        losses[i] = video_loss_grad(cfg, params, *videos[i]);
    });
  }
  for (std::thread& t : pool) t.join();
  return losses;
}

double masked_accuracy(const ModelConfig& cfg, const ModelParams& params,
                       const std::vector<PaddedBatch>& batches) {
  long correct = 0, total = 0;
  for (const PaddedBatch& b : batches) {
    ForwardOutput out = forward(cfg, params, b.features, b.mask);
    const std::vector<int> pred = predict(out.probs);
    for (size_t t = 0; t < b.mask.size(); ++t) {
      if (!b.mask[t]) continue;
      ++total;
      if (pred[t] == b.labels[t]) ++correct;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

TrainResult train(const ModelConfig& cfg, const ModelParams& init, const Dataset& data,
                  const TrainConfig& tc) {
  tc.validate();
  if (data.videos.empty()) throw ContractError("train: dataset is empty");

  const int n_target = data.max_utterances();
  std::vector<PaddedBatch> all;
  all.reserve(data.videos.size());
  for (const VideoSample& v : data.videos) all.push_back(pad_video(v, n_target));

  // Whole-video train/validation split, deterministic in the seed. A single
  // video serves as both sides rather than leaving one empty.
  std::mt19937_64 rng(tc.seed);
  std::vector<size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  size_t n_val = static_cast<size_t>(std::lround(tc.val_fraction * static_cast<double>(all.size())));
  n_val = std::max<size_t>(n_val, 1);
  if (all.size() >= 2) n_val = std::min(n_val, all.size() - 1);

  std::vector<PaddedBatch> val_set, train_set;
  for (size_t i = 0; i < order.size(); ++i)
    (i < n_val && all.size() >= 2 ? val_set : train_set).push_back(all[order[i]]);
  if (all.size() == 1) val_set = train_set;

  ModelParams params = init;
  AdamState adam(params, tc.lr, tc.beta1, tc.beta2, tc.epsilon);

  TrainResult result;
  result.params = params;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;

  std::vector<size_t> train_order(train_set.size());
  std::iota(train_order.begin(), train_order.end(), 0);

  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    std::shuffle(train_order.begin(), train_order.end(), rng);
    double epoch_nll = 0.0;
    long epoch_masked = 0;

    for (size_t start = 0; start < train_order.size(); start += tc.batch_size) {
      const size_t end = std::min(train_order.size(), start + tc.batch_size);
      std::vector<const PaddedBatch*> videos;
      for (size_t i = start; i < end; ++i) videos.push_back(&train_set[train_order[i]]);

      std::vector<VideoLoss> losses = batch_losses(cfg, params, videos);
      GradientStore batch_grads;
      double batch_nll = 0.0;
      long batch_masked = 0;
      for (VideoLoss& vl : losses) {
        batch_grads.accumulate(vl.grads);
        batch_nll += vl.nll_sum;
        batch_masked += vl.masked;
      }
      epoch_nll += batch_nll;
      epoch_masked += batch_masked;
      if (batch_masked == 0) continue;  // nothing real in this batch
      batch_grads.scale_all(1.0 / static_cast<double>(batch_masked));
      adam_step(params, batch_grads, adam);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_masked == 0 ? 0.0 : epoch_nll / static_cast<double>(epoch_masked);
    stats.val_loss = dataset_loss(cfg, params, val_set);
    stats.val_acc = masked_accuracy(cfg, params, val_set);
    result.history.push_back(stats);

    if (stats.val_loss < result.best_val_loss) {
      result.best_val_loss = stats.val_loss;
      result.best_epoch = epoch;
      result.params = params;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= tc.patience) break;
    }
  }
  return result;
}

Metrics evaluate(const ModelConfig& cfg, const ModelParams& params, const Dataset& data) {
  if (data.videos.empty()) throw ContractError("evaluate: dataset is empty");
  return evaluate_batches(cfg, params, to_batches(data));
}

Metrics evaluate_batches(const ModelConfig& cfg, const ModelParams& params,
                         const std::vector<PaddedBatch>& batches) {
  Metrics m;
  m.confusion.assign(cfg.classes, std::vector<long>(cfg.classes, 0));
  for (const PaddedBatch& b : batches) {
    ForwardOutput out = forward(cfg, params, b.features, b.mask);
    const std::vector<int> pred = predict(out.probs);
    for (size_t t = 0; t < b.mask.size(); ++t) {
      if (!b.mask[t]) continue;
      m.confusion[b.labels[t]][pred[t]] += 1;
      ++m.n_utterances;
    }
  }

  long correct = 0;
  for (int c = 0; c < cfg.classes; ++c) correct += m.confusion[c][c];
  m.accuracy = m.n_utterances == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(m.n_utterances);

  m.precision.assign(cfg.classes, 0.0);
  m.recall.assign(cfg.classes, 0.0);
  m.f1.assign(cfg.classes, 0.0);
  double weighted = 0.0;
  for (int c = 0; c < cfg.classes; ++c) {
    long support = 0, predicted = 0;
    for (int k = 0; k < cfg.classes; ++k) {
      support += m.confusion[c][k];
      predicted += m.confusion[k][c];
    }
    const long hit = m.confusion[c][c];
    m.precision[c] = predicted == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(predicted);
    m.recall[c] = support == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(support);
    const double pr = m.precision[c] + m.recall[c];
    m.f1[c] = pr == 0.0 ? 0.0 : 2.0 * m.precision[c] * m.recall[c] / pr;
    weighted += static_cast<double>(support) * m.f1[c];
  }
  m.f1_weighted = m.n_utterances == 0 ? 0.0 : weighted / static_cast<double>(m.n_utterances);
  return m;
}

void write_history_jsonl(const std::filesystem::path& path, const std::vector<EpochStats>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write history file " + path.string());
  for (const EpochStats& e : history) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    j["val_acc"] = e.val_acc;
    out << j.dump() << "\n";
  }
}

GradCheckReport compare_grads(const GradientStore& analytic, const GradientStore& numeric) {
  GradCheckReport report;
  for (const auto& [name, grad] : analytic) {
    GradCheckEntry entry;
    entry.name = name;
    entry.max_rel_err = max_rel_err(grad, numeric.at(name));
    if (entry.max_rel_err > report.worst) {
      report.worst = entry.max_rel_err;
      report.worst_name = name;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

GradCheckReport gradient_check(const ModelConfig& cfg, ModelParams& params, const PaddedBatch& batch,
                               double epsilon) {
  return gradient_check(cfg, params, std::vector<PaddedBatch>{batch}, epsilon);
}

GradCheckReport gradient_check(const ModelConfig& cfg, ModelParams& params,
                               const std::vector<PaddedBatch>& probes, double epsilon) {
  if (probes.empty()) throw ContractError("gradient_check: no probe batches");

  std::vector<GradientStore> analytic, numeric;
  for (const PaddedBatch& batch : probes) {
    const long masked = batch.masked_count();
    if (masked == 0) throw ContractError("gradient_check: probe has no masked-in utterances");
    VideoLoss video = video_loss_grad(cfg, params, batch);
    video.grads.scale_all(1.0 / static_cast<double>(masked));
    analytic.push_back(std::move(video.grads));

    const std::vector<ParamRef> refs = param_refs(params);
    numeric.push_back(finite_diff_grad(
        refs,
        [&]() {
          ForwardOutput out = forward(cfg, params, batch.features, batch.mask);
          return cross_entropy(out.probs, batch.labels, batch.mask);
        },
        epsilon));
  }

  GradCheckReport report;
  for (const auto& [name, first] : analytic.front()) {
    GradCheckEntry entry;
    entry.name = name;
    for (long i = 0; i < first.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (size_t p = 0; p < probes.size(); ++p) {
        const double a = analytic[p].at(name).data()[i];
        const double b = numeric[p].at(name).data()[i];
        const double rel = std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
        best = std::min(best, rel);
      }
      entry.max_rel_err = std::max(entry.max_rel_err, best);
    }
    if (entry.max_rel_err > report.worst) {
      report.worst = entry.max_rel_err;
      report.worst_name = name;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

PaddedBatch random_batch(const ModelConfig& cfg, int n_utterances, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> label_dist(0, cfg.classes - 1);
  PaddedBatch batch;
  for (Modality m : kAllModalities) {
    if (!cfg.has(m)) continue;
    Matrix f(n_utterances, cfg.input_dim(m));
    for (double& v : f.data()) v = gauss(rng);
    batch.features.emplace(m, std::move(f));
  }
  batch.labels.resize(n_utterances);
  for (int& l : batch.labels) l = label_dist(rng);
  batch.mask.assign(n_utterances, 1);
  return batch;
}

}  // namespace hierfuse
