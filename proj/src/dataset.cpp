// SPDX-License-Identifier: Apache-2.0
#include "hierfuse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "hierfuse/errors.hpp"

namespace hierfuse {

int Dataset::max_utterances() const {
  int n = 0;
  for (const VideoSample& v : videos) n = std::max(n, static_cast<int>(v.utterances.size()));
  return n;
}

long PaddedBatch::masked_count() const {
  long count = 0;
  for (uint8_t m : mask) count += m ? 1 : 0;
  return count;
}

void SynthSpec::validate() const {
  if (n_train < 1 || n_test < 0) throw ConfigError("synth spec: need n_train >= 1 and n_test >= 0");
  if (utterances_per_video < 1) throw ConfigError("synth spec: utterances_per_video must be >= 1");
  if (classes < 2) throw ConfigError("synth spec: classes must be >= 2");
  if (dims.empty()) throw ConfigError("synth spec: no modalities");
  for (const auto& [m, d] : dims)
    if (d < 1) throw ConfigError("synth spec: dim for " + to_key(m) + " must be >= 1");
  for (const auto& [m, s] : strength)
    if (s < 0) throw ConfigError("synth spec: strength for " + to_key(m) + " must be >= 0");
  if (!(noise_std > 0)) throw ConfigError("synth spec: noise_std must be > 0");
  if (conflict_fraction < 0 || conflict_fraction > 1)
    throw ConfigError("synth spec: conflict_fraction must be in [0, 1]");
}

std::filesystem::path manifest_path_for(const std::filesystem::path& data_path) {
  std::filesystem::path p = data_path;
  p.replace_extension();
  p += ".manifest.json";
  return p;
}

namespace {

std::vector<Modality> sorted_modalities(const std::map<Modality, int>& dims) {
  std::vector<Modality> out;
  for (const auto& [m, d] : dims) out.push_back(m);
  return out;  // std::map already iterates in canonical enum order
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& jsonl_path) {
  std::ifstream data(jsonl_path);
  if (!data) throw IoError("cannot open dataset file " + jsonl_path.string());
  const std::filesystem::path mpath = manifest_path_for(jsonl_path);
  std::ifstream manifest(mpath);
  if (!manifest) throw IoError("cannot open dataset manifest " + mpath.string());

  Dataset out;
  long declared_videos = 0;
  try {
    nlohmann::json m;
    manifest >> m;
    out.classes = m.at("C").get<int>();
    for (const auto& [key, width] : m.at("dims").items())
      out.dims[modality_from_key(key)] = width.get<int>();
    declared_videos = m.at("n_videos").get<long>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest " + mpath.string() + ": " + e.what());
  }
  if (out.classes < 1) throw SchemaError("manifest " + mpath.string() + ": C must be >= 1");
  if (out.dims.empty()) throw SchemaError("manifest " + mpath.string() + ": dims is empty");

  std::string line;
  long line_no = 0;
  while (std::getline(data, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(jsonl_path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    VideoSample video;
    try {
      video.video_id = j.at("video_id").get<std::string>();
      video.speaker_id = j.at("speaker_id").get<std::string>();
      for (const nlohmann::json& ju : j.at("utterances")) {
        Utterance u;
        u.label = ju.at("label").get<int>();
        for (const auto& [key, values] : ju.at("features").items())
          u.features[modality_from_key(key)] = values.get<std::vector<double>>();
        video.utterances.push_back(std::move(u));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(jsonl_path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }

    if (video.utterances.empty())
      throw SchemaError("video '" + video.video_id + "' has no utterances");
    for (const Utterance& u : video.utterances) {
      if (u.label < 0 || u.label >= out.classes)
        throw SchemaError("video '" + video.video_id + "': label " + std::to_string(u.label) +
                          " outside [0, " + std::to_string(out.classes) + ")");
      if (u.features.size() != out.dims.size())
        throw SchemaError("video '" + video.video_id + "': modality set differs from manifest");
      for (const auto& [m, vec] : u.features) {
        auto it = out.dims.find(m);
        if (it == out.dims.end())
          throw SchemaError("video '" + video.video_id + "': modality " + to_key(m) + " not in manifest");
        if (static_cast<int>(vec.size()) != it->second)
          throw SchemaError("video '" + video.video_id + "': modality " + to_key(m) + " width " +
                            std::to_string(vec.size()) + " vs manifest " + std::to_string(it->second));
      }
    }
    out.videos.push_back(std::move(video));
  }

  if (out.videos.empty()) throw SchemaError("dataset " + jsonl_path.string() + " has no videos");
  if (declared_videos != static_cast<long>(out.videos.size()))
    throw SchemaError("dataset " + jsonl_path.string() + ": manifest declares " +
                      std::to_string(declared_videos) + " videos, file has " +
                      std::to_string(out.videos.size()));
  return out;
}

void save_dataset(const std::filesystem::path& jsonl_path, const Dataset& dataset) {
  std::ofstream data(jsonl_path);
  if (!data) throw IoError("cannot write dataset file " + jsonl_path.string());
  for (const VideoSample& video : dataset.videos) {
    nlohmann::json j;
    j["video_id"] = video.video_id;
    j["speaker_id"] = video.speaker_id;
    nlohmann::json utterances = nlohmann::json::array();
    for (const Utterance& u : video.utterances) {
      nlohmann::json ju;
      ju["label"] = u.label;
      nlohmann::json feats;
      for (const auto& [m, vec] : u.features) feats[to_key(m)] = vec;
      ju["features"] = feats;
      utterances.push_back(std::move(ju));
    }
    j["utterances"] = std::move(utterances);
    data << j.dump() << "\n";
  }

  const std::filesystem::path mpath = manifest_path_for(jsonl_path);
  std::ofstream manifest(mpath);
  if (!manifest) throw IoError("cannot write dataset manifest " + mpath.string());
  nlohmann::json m;
  m["C"] = dataset.classes;
  nlohmann::json dims;
  for (const auto& [mod, d] : dataset.dims) dims[to_key(mod)] = d;
  m["dims"] = dims;
  m["n_videos"] = dataset.videos.size();
  manifest << m.dump() << "\n";
}

PaddedBatch pad_video(const VideoSample& video, int n) {
  const int real = static_cast<int>(video.utterances.size());
  if (real == 0) throw ContractError("pad_video: video '" + video.video_id + "' has no utterances");
  if (real > n)
    throw ContractError("pad_video: video '" + video.video_id + "' has " + std::to_string(real) +
                        " utterances, more than " + std::to_string(n));

  PaddedBatch batch;
  batch.labels.assign(n, 0);
  batch.mask.assign(n, 0);
  for (const auto& [m, vec] : video.utterances.front().features)
    batch.features.emplace(m, Matrix(n, static_cast<int>(vec.size())));

  for (int t = 0; t < real; ++t) {
    const Utterance& u = video.utterances[t];
    batch.labels[t] = u.label;
    batch.mask[t] = 1;
    for (const auto& [m, vec] : u.features) {
      Matrix& dst = batch.features.at(m);
      if (static_cast<int>(vec.size()) != dst.cols())
        throw ContractError("pad_video: video '" + video.video_id + "' has inconsistent widths for " +
                            to_key(m));
      for (int j = 0; j < dst.cols(); ++j) dst(t, j) = vec[j];
    }
  }
  return batch;
}

std::vector<PaddedBatch> to_batches(const Dataset& dataset) {
  const int n = dataset.max_utterances();
  std::vector<PaddedBatch> batches;
  batches.reserve(dataset.videos.size());
  for (const VideoSample& v : dataset.videos) batches.push_back(pad_video(v, n));
  return batches;
}

std::pair<Dataset, Dataset> split_speaker_disjoint(const Dataset& dataset, double test_fraction,
                                                   uint64_t seed) {
  if (!(test_fraction > 0) || !(test_fraction < 1))
    throw ContractError("split_speaker_disjoint: test_fraction must lie in (0, 1)");

  std::map<std::string, std::vector<size_t>> by_speaker;
  for (size_t i = 0; i < dataset.videos.size(); ++i)
    by_speaker[dataset.videos[i].speaker_id].push_back(i);
  if (by_speaker.size() < 2)
    throw ContractError("split_speaker_disjoint: need at least 2 distinct speakers, have " +
                        std::to_string(by_speaker.size()));

  std::vector<std::string> speakers;
  for (const auto& [s, idx] : by_speaker) speakers.push_back(s);
  std::mt19937_64 rng(seed);
  std::shuffle(speakers.begin(), speakers.end(), rng);

  const long target = static_cast<long>(std::ceil(test_fraction * dataset.videos.size()));
  std::set<std::string> test_speakers;
  long test_videos = 0;
  for (const std::string& s : speakers) {
    if (test_videos >= target) break;
    if (test_speakers.size() + 1 == speakers.size()) break;  // keep the train side nonempty
    test_speakers.insert(s);
    test_videos += static_cast<long>(by_speaker[s].size());
  }

  Dataset train, test;
  train.dims = test.dims = dataset.dims;
  train.classes = test.classes = dataset.classes;
  for (const VideoSample& v : dataset.videos)
    (test_speakers.count(v.speaker_id) ? test : train).videos.push_back(v);
  return {std::move(train), std::move(test)};
}

namespace {

std::vector<double> random_unit_vector(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(dim);
  double norm_sq = 0.0;
  for (double& x : v) {
    x = gauss(rng);
    norm_sq += x * x;
  }
  const double norm = std::sqrt(norm_sq);
  for (double& x : v) x /= norm;
  return v;
}

Dataset synth_set(const SynthSpec& spec, int n_videos, const std::string& id_prefix,
                  const std::string& speaker_prefix, int n_speakers,
                  const std::map<Modality, std::vector<std::vector<double>>>& prototypes,
                  std::mt19937_64& rng) {
  std::uniform_int_distribution<int> label_dist(0, spec.classes - 1);
  std::uniform_int_distribution<int> other_class(0, spec.classes - 2);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution conflict(spec.conflict_fraction);
  const auto mods = sorted_modalities(spec.dims);
  std::uniform_int_distribution<int> mod_dist(0, static_cast<int>(mods.size()) - 1);

  Dataset out;
  out.dims = spec.dims;
  out.classes = spec.classes;
  for (int i = 0; i < n_videos; ++i) {
    VideoSample video;
    video.video_id = id_prefix + std::to_string(i);
    video.speaker_id = speaker_prefix + std::to_string(i % n_speakers);
    for (int t = 0; t < spec.utterances_per_video; ++t) {
      Utterance u;
      u.label = label_dist(rng);
      // At most one modality per utterance carries conflicting evidence.
      int conflicted = -1, conflict_label = -1;
      if (spec.conflict_fraction > 0 && conflict(rng)) {
        conflicted = mod_dist(rng);
        conflict_label = other_class(rng);
        if (conflict_label >= u.label) ++conflict_label;
      }
      for (size_t mi = 0; mi < mods.size(); ++mi) {
        const Modality m = mods[mi];
        const int cls = static_cast<int>(mi) == conflicted ? conflict_label : u.label;
        const std::vector<double>& proto = prototypes.at(m)[cls];
        const double s = spec.strength.count(m) ? spec.strength.at(m) : 0.0;
        std::vector<double> feat(proto.size());
        for (size_t j = 0; j < feat.size(); ++j) feat[j] = s * proto[j] + spec.noise_std * gauss(rng);
        u.features[m] = std::move(feat);
      }
      video.utterances.push_back(std::move(u));
    }
    out.videos.push_back(std::move(video));
  }
  return out;
}

}  // namespace

std::pair<Dataset, Dataset> synth_generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);

  std::map<Modality, std::vector<std::vector<double>>> prototypes;
  for (const auto& [m, dim] : spec.dims) {
    auto& per_class = prototypes[m];
    for (int c = 0; c < spec.classes; ++c) per_class.push_back(random_unit_vector(dim, rng));
  }

  Dataset train = synth_set(spec, spec.n_train, "train_", "spk", 10, prototypes, rng);
  Dataset test = synth_set(spec, spec.n_test, "test_", "holdout_spk", 5, prototypes, rng);
  return {std::move(train), std::move(test)};
}

}  // namespace hierfuse
