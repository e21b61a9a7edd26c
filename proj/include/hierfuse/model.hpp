// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hierfuse/layers.hpp"

namespace hierfuse {

enum class Variant { Early, HFusion, CHFusion };

// Canonical modality order; concatenation and parameter enumeration follow it.
enum class Modality { Text, Audio, Video };
inline constexpr Modality kAllModalities[] = {Modality::Text, Modality::Audio, Modality::Video};

// Bimodal streams in their fixed evaluation order. Members are listed
// first/second as they enter the pair fusion.
enum class PairKind { VideoAudio, AudioText, VideoText };
inline constexpr PairKind kAllPairs[] = {PairKind::VideoAudio, PairKind::AudioText, PairKind::VideoText};

std::string to_key(Modality m);                       // "T" / "A" / "V"
std::string to_key(PairKind p);                       // "VA" / "AT" / "VT"
std::string to_string(Variant v);                     // "early" / "hfusion" / "chfusion"
Modality modality_from_key(const std::string& key);   // throws ConfigError
Variant variant_from_string(const std::string& s);    // throws ConfigError
std::pair<Modality, Modality> pair_members(PairKind p);

/// Architecture hyperparameters. Context dims size the per-stream recurrent
/// cells; shared_dim is the equalized feature width the pair fusions operate
/// in; pair_dim / tri_dim size the bimodal and trimodal context cells.
struct ModelConfig {
  Variant variant = Variant::CHFusion;
  std::vector<Modality> modalities = {Modality::Text, Modality::Audio, Modality::Video};
  std::map<Modality, int> input_dims = {
      {Modality::Text, 50}, {Modality::Audio, 64}, {Modality::Video, 30}};
  std::map<Modality, int> ctx_dims = {
      {Modality::Text, 300}, {Modality::Audio, 300}, {Modality::Video, 300}};
  int shared_dim = 400;
  int pair_dim = 500;
  int tri_dim = 550;
  int classes = 2;
  int max_utterances = 10;
  uint64_t seed = 42;

  int input_dim(Modality m) const { return input_dims.at(m); }
  int ctx_dim(Modality m) const { return ctx_dims.at(m); }
  bool has(Modality m) const;
  std::vector<PairKind> pairs() const;  // pairs the modality subset induces
  int head_input_dim() const;           // width of the feature the classifier consumes
  void validate() const;                // throws ConfigError
};

/// The trainable set for one configured model; only the fields the variant
/// and modality subset require are populated.
struct ModelParams {
  std::map<Modality, GruParams> uni_ctx;
  std::map<Modality, DenseParams> equalize;
  std::map<PairKind, PairFusionParams> pair_fuse;
  std::map<PairKind, GruParams> pair_ctx;
  std::optional<TripleFusionParams> tri_fuse;
  std::optional<GruParams> tri_ctx;
  DenseParams head;
};

/// Allocates and initializes exactly the parameters the config requires;
/// deterministic for a given config seed.
ModelParams build_model(const ModelConfig& cfg);

/// Adds uniform noise in [-scale, scale] to every tensor, biases included.
/// Moves a freshly built model off its structured init (zero biases, zero
/// states) onto a generic point in parameter space.
void perturb_params(ModelParams& params, double scale, uint64_t seed);

// Visits every parameter tensor in canonical order as (name, matrix).
void visit_params(ModelParams& p, const std::function<void(const std::string&, Matrix&)>& fn);
void visit_params(const ModelParams& p, const std::function<void(const std::string&, const Matrix&)>& fn);
std::vector<ParamRef> param_refs(ModelParams& p);

/// Closed-form count of trainable scalars for a config; equals what
/// build_model allocates.
long param_count(const ModelConfig& cfg);
long allocated_scalar_count(const ModelParams& p);

struct ForwardOutput {
  Matrix probs;  // N x classes, rows sum to 1
  Matrix fused;  // N x head_input_dim, the feature the classifier consumed
};

struct ModelGraph {
  Var probs;
  Var fused;
};

/// Builds the full differentiable pipeline for one video on the given tape.
/// `features` holds one N x input_dim matrix per configured modality.
ModelGraph forward_graph(Tape& tape, const ModelConfig& cfg, const ModelParams& params,
                         const std::map<Modality, Matrix>& features);

/// Value-level forward pass. The mask only has to be length-consistent; padded
/// rows flow through and are ignored downstream by loss and metrics.
ForwardOutput forward(const ModelConfig& cfg, const ModelParams& params,
                      const std::map<Modality, Matrix>& features, const std::vector<uint8_t>& mask);

/// Rowwise argmax with ties broken toward the lowest class index.
std::vector<int> predict(const Matrix& probs);

// Single-document JSON serialization: {"config": ..., "params": {name: {rows,
// cols, data}}}. Loading validates every tensor shape against the config.
void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params);
std::pair<ModelConfig, ModelParams> load_model(const std::filesystem::path& path);

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

}  // namespace hierfuse
