// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hierfuse/matrix.hpp"
#include "hierfuse/model.hpp"

namespace hierfuse {

struct Utterance {
  int label = 0;
  std::map<Modality, std::vector<double>> features;
};

struct VideoSample {
  std::string video_id;
  std::string speaker_id;
  std::vector<Utterance> utterances;
};

struct Dataset {
  std::vector<VideoSample> videos;
  std::map<Modality, int> dims;
  int classes = 2;

  int max_utterances() const;
};

/// One video ready for the engine: per-modality N x dim matrices, labels, and
/// a mask whose true prefix marks real utterances. Padded rows are all-zero.
struct PaddedBatch {
  std::map<Modality, Matrix> features;
  std::vector<int> labels;
  std::vector<uint8_t> mask;

  long masked_count() const;
};

/// Synthetic corpus recipe: per-(modality, class) unit prototypes scaled by
/// `strength` plus Gaussian noise; `conflict_fraction` of utterances have one
/// modality's prototype swapped for a different class's.
struct SynthSpec {
  int n_train = 200;
  int n_test = 60;
  int utterances_per_video = 10;
  std::map<Modality, int> dims = {{Modality::Text, 50}, {Modality::Audio, 64}, {Modality::Video, 30}};
  int classes = 2;
  std::map<Modality, double> strength = {
      {Modality::Text, 2.0}, {Modality::Audio, 2.0}, {Modality::Video, 2.0}};
  double noise_std = 1.0;
  double conflict_fraction = 0.0;
  uint64_t seed = 7;

  void validate() const;
};

// Dataset files are JSON Lines (one video per line) with a sidecar manifest
// next to them; the manifest's class count and widths are authoritative.
std::filesystem::path manifest_path_for(const std::filesystem::path& data_path);

Dataset load_dataset(const std::filesystem::path& jsonl_path);
void save_dataset(const std::filesystem::path& jsonl_path, const Dataset& dataset);

/// Zero-pads a video to n rows per modality. The video must be nonempty and
/// no longer than n.
PaddedBatch pad_video(const VideoSample& video, int n);

/// Pads every video to the dataset's longest sequence.
std::vector<PaddedBatch> to_batches(const Dataset& dataset);

/// Partitions videos so no speaker crosses the split; the test side receives
/// at least test_fraction of the videos where whole speakers allow it.
std::pair<Dataset, Dataset> split_speaker_disjoint(const Dataset& dataset, double test_fraction,
                                                   uint64_t seed);

std::pair<Dataset, Dataset> synth_generate(const SynthSpec& spec);

}  // namespace hierfuse
