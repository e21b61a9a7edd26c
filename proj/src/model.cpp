// SPDX-License-Identifier: Apache-2.0
#include "hierfuse/model.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "hierfuse/errors.hpp"

namespace hierfuse {

std::string to_key(Modality m) {
  switch (m) {
    case Modality::Text: return "T";
    case Modality::Audio: return "A";
    case Modality::Video: return "V";
  }
  throw ContractError("to_key: bad modality");
}

std::string to_key(PairKind p) {
  switch (p) {
    case PairKind::VideoAudio: return "VA";
    case PairKind::AudioText: return "AT";
    case PairKind::VideoText: return "VT";
  }
  throw ContractError("to_key: bad pair");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Early: return "early";
    case Variant::HFusion: return "hfusion";
    case Variant::CHFusion: return "chfusion";
  }
  throw ContractError("to_string: bad variant");
}

Modality modality_from_key(const std::string& key) {
  if (key == "T") return Modality::Text;
  if (key == "A") return Modality::Audio;
  if (key == "V") return Modality::Video;
  throw ConfigError("unknown modality '" + key + "' (expected T, A, or V)");
}

Variant variant_from_string(const std::string& s) {
  if (s == "early") return Variant::Early;
  if (s == "hfusion") return Variant::HFusion;
  if (s == "chfusion") return Variant::CHFusion;
  throw ConfigError("unknown variant '" + s + "' (expected early, hfusion, or chfusion)");
}

std::pair<Modality, Modality> pair_members(PairKind p) {
  switch (p) {
    case PairKind::VideoAudio: return {Modality::Video, Modality::Audio};
    case PairKind::AudioText: return {Modality::Audio, Modality::Text};
    case PairKind::VideoText: return {Modality::Video, Modality::Text};
  }
  throw ContractError("pair_members: bad pair");
}

bool ModelConfig::has(Modality m) const {
  return std::find(modalities.begin(), modalities.end(), m) != modalities.end();
}

std::vector<PairKind> ModelConfig::pairs() const {
  std::vector<PairKind> out;
  for (PairKind pk : kAllPairs) {
    auto [a, b] = pair_members(pk);
    if (has(a) && has(b)) out.push_back(pk);
  }
  return out;
}

int ModelConfig::head_input_dim() const {
  if (variant == Variant::Early) {
    int total = 0;
    for (Modality m : kAllModalities)
      if (has(m)) total += input_dim(m);
    return total;
  }
  if (modalities.size() == 1) {
    const Modality m = modalities.front();
    return variant == Variant::CHFusion ? ctx_dim(m) : input_dim(m);
  }
  if (modalities.size() == 2) return variant == Variant::CHFusion ? pair_dim : shared_dim;
  return variant == Variant::CHFusion ? tri_dim : shared_dim;
}

void ModelConfig::validate() const {
  if (modalities.empty()) throw ConfigError("model config: modality set is empty");
  std::set<Modality> seen;
  for (Modality m : modalities) {
    if (!seen.insert(m).second) throw ConfigError("model config: modality " + to_key(m) + " listed twice");
    if (!input_dims.count(m) || input_dim(m) < 1)
      throw ConfigError("model config: input dim for " + to_key(m) + " must be >= 1");
    if (variant == Variant::CHFusion && (!ctx_dims.count(m) || ctx_dim(m) < 1))
      throw ConfigError("model config: context dim for " + to_key(m) + " must be >= 1");
  }
  if (shared_dim < 1 || pair_dim < 1 || tri_dim < 1)
    throw ConfigError("model config: fusion dims must be >= 1");
  if (classes < 1) throw ConfigError("model config: classes must be >= 1");
  if (max_utterances < 1) throw ConfigError("model config: max_utterances must be >= 1");
}

namespace {

// Modality subset in canonical order.
std::vector<Modality> ordered(const ModelConfig& cfg) {
  std::vector<Modality> out;
  for (Modality m : kAllModalities)
    if (cfg.has(m)) out.push_back(m);
  return out;
}

long gru_scalar_count(long in, long out) { return 3 * in * out + 4 * out * out + out; }
long dense_scalar_count(long in, long out) { return in * out + out; }

}  // namespace

ModelParams build_model(const ModelConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  ModelParams p;
  const auto mods = ordered(cfg);
  const bool multi = mods.size() >= 2;
  const bool trimodal = mods.size() == 3;

  if (cfg.variant == Variant::CHFusion)
    for (Modality m : mods) p.uni_ctx.emplace(m, make_gru(cfg.input_dim(m), cfg.ctx_dim(m), rng));

  if (cfg.variant != Variant::Early && multi) {
    for (Modality m : mods) {
      const int in = cfg.variant == Variant::CHFusion ? cfg.ctx_dim(m) : cfg.input_dim(m);
      p.equalize.emplace(m, make_dense(in, cfg.shared_dim, Activation::Tanh, rng));
    }
    for (PairKind pk : cfg.pairs()) p.pair_fuse.emplace(pk, make_pair_fusion(cfg.shared_dim, rng));
    if (cfg.variant == Variant::CHFusion)
      for (PairKind pk : cfg.pairs()) p.pair_ctx.emplace(pk, make_gru(cfg.shared_dim, cfg.pair_dim, rng));
    if (trimodal) {
      const int width = cfg.variant == Variant::CHFusion ? cfg.pair_dim : cfg.shared_dim;
      p.tri_fuse = make_triple_fusion(width, rng);
      if (cfg.variant == Variant::CHFusion) p.tri_ctx = make_gru(cfg.pair_dim, cfg.tri_dim, rng);
    }
  }

  p.head = make_dense(cfg.head_input_dim(), cfg.classes, Activation::None, rng);
  return p;
}

void perturb_params(ModelParams& params, double scale, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-scale, scale);
  visit_params(params, [&](const std::string&, Matrix& m) {
    for (double& v : m.data()) v += jitter(rng);
  });
}

namespace {

template <typename Params, typename Fn>
void visit_impl(Params& p, const Fn& fn) {
  auto gru = [&](auto& g, const std::string& prefix) {
    fn(prefix + ".in_update", g.in_update);
    fn(prefix + ".in_reset", g.in_reset);
    fn(prefix + ".in_cand", g.in_cand);
    fn(prefix + ".rec_update", g.rec_update);
    fn(prefix + ".rec_reset", g.rec_reset);
    fn(prefix + ".rec_cand", g.rec_cand);
    fn(prefix + ".out_proj", g.out_proj);
    fn(prefix + ".out_bias", g.out_bias);
  };
  for (auto& [m, g] : p.uni_ctx) gru(g, "ctx_" + to_key(m));
  for (auto& [m, d] : p.equalize) {
    fn("map_" + to_key(m) + ".weight", d.weight);
    fn("map_" + to_key(m) + ".bias", d.bias);
  }
  for (auto& [pk, f] : p.pair_fuse) {
    const std::string prefix = "fuse_" + to_key(pk);
    fn(prefix + ".w_first", f.w_first);
    fn(prefix + ".w_second", f.w_second);
    fn(prefix + ".bias", f.bias);
  }
  for (auto& [pk, g] : p.pair_ctx) gru(g, "ctx_" + to_key(pk));
  if (p.tri_fuse) {
    fn("fuse_tri.w_first", p.tri_fuse->w_first);
    fn("fuse_tri.w_second", p.tri_fuse->w_second);
    fn("fuse_tri.w_third", p.tri_fuse->w_third);
    fn("fuse_tri.bias", p.tri_fuse->bias);
  }
  if (p.tri_ctx) gru(*p.tri_ctx, "ctx_tri");
  fn("head.weight", p.head.weight);
  fn("head.bias", p.head.bias);
}

}  // namespace

void visit_params(ModelParams& p, const std::function<void(const std::string&, Matrix&)>& fn) {
  visit_impl(p, fn);
}

void visit_params(const ModelParams& p, const std::function<void(const std::string&, const Matrix&)>& fn) {
  visit_impl(p, fn);
}

std::vector<ParamRef> param_refs(ModelParams& p) {
  std::vector<ParamRef> refs;
  visit_params(p, [&](const std::string& name, Matrix& m) { refs.push_back({name, &m}); });
  return refs;
}

long param_count(const ModelConfig& cfg) {
  cfg.validate();
  const auto mods = ordered(cfg);
  const bool multi = mods.size() >= 2;
  const bool trimodal = mods.size() == 3;
  long total = 0;

  if (cfg.variant == Variant::CHFusion)
    for (Modality m : mods) total += gru_scalar_count(cfg.input_dim(m), cfg.ctx_dim(m));

  if (cfg.variant != Variant::Early && multi) {
    for (Modality m : mods) {
      const int in = cfg.variant == Variant::CHFusion ? cfg.ctx_dim(m) : cfg.input_dim(m);
      total += dense_scalar_count(in, cfg.shared_dim);
    }
    total += static_cast<long>(cfg.pairs().size()) * 3 * cfg.shared_dim;
    if (cfg.variant == Variant::CHFusion)
      total += static_cast<long>(cfg.pairs().size()) * gru_scalar_count(cfg.shared_dim, cfg.pair_dim);
    if (trimodal) {
      total += 4L * (cfg.variant == Variant::CHFusion ? cfg.pair_dim : cfg.shared_dim);
      if (cfg.variant == Variant::CHFusion) total += gru_scalar_count(cfg.pair_dim, cfg.tri_dim);
    }
  }

  total += dense_scalar_count(cfg.head_input_dim(), cfg.classes);
  return total;
}

long allocated_scalar_count(const ModelParams& p) {
  long total = 0;
  visit_params(p, [&](const std::string&, const Matrix& m) { total += m.size(); });
  return total;
}

ModelGraph forward_graph(Tape& tape, const ModelConfig& cfg, const ModelParams& params,
                         const std::map<Modality, Matrix>& features) {
  const auto mods = ordered(cfg);
  int n = -1;
  for (Modality m : mods) {
    auto it = features.find(m);
    if (it == features.end()) throw ContractError("forward: missing features for modality " + to_key(m));
    if (it->second.cols() != cfg.input_dim(m))
      throw DimensionError("forward: modality " + to_key(m) + " features " + it->second.shape_str() +
                           " vs expected width " + std::to_string(cfg.input_dim(m)));
    if (n < 0) n = it->second.rows();
    if (it->second.rows() != n)
      throw DimensionError("forward: modality " + to_key(m) + " has " +
                           std::to_string(it->second.rows()) + " rows, expected " + std::to_string(n));
  }
  if (n < 1) throw ContractError("forward: empty utterance sequence");
  if (n > cfg.max_utterances)
    throw ContractError("forward: " + std::to_string(n) + " utterances exceed max_utterances " +
                        std::to_string(cfg.max_utterances));

  Var fused;
  if (cfg.variant == Variant::Early) {
    std::vector<Var> parts;
    for (Modality m : mods) parts.push_back(tape.input(features.at(m)));
    fused = parts.size() == 1 ? parts.front() : tape.concat_cols(parts);
  } else {
    std::map<Modality, Var> streams;
    for (Modality m : mods) {
      Var f = tape.input(features.at(m));
      if (cfg.variant == Variant::CHFusion)
        f = gru_forward(tape, f, bind_gru(tape, params.uni_ctx.at(m), "ctx_" + to_key(m)));
      streams.emplace(m, f);
    }
    if (mods.size() == 1) {
      fused = streams.at(mods.front());
    } else {
      std::map<Modality, Var> equalized;
      for (Modality m : mods)
        equalized.emplace(
            m, dense_forward(tape, streams.at(m), bind_dense(tape, params.equalize.at(m), "map_" + to_key(m))));

      std::map<PairKind, Var> pair_feats;
      for (PairKind pk : cfg.pairs()) {
        auto [first, second] = pair_members(pk);
        Var f = bimodal_fuse(tape, equalized.at(first), equalized.at(second),
                             bind_pair_fusion(tape, params.pair_fuse.at(pk), "fuse_" + to_key(pk)));
        if (cfg.variant == Variant::CHFusion)
          f = gru_forward(tape, f, bind_gru(tape, params.pair_ctx.at(pk), "ctx_" + to_key(pk)));
        pair_feats.emplace(pk, f);
      }

      if (mods.size() == 2) {
        fused = pair_feats.begin()->second;
      } else {
        Var tri = trimodal_fuse(tape, pair_feats.at(PairKind::VideoAudio), pair_feats.at(PairKind::AudioText),
                                pair_feats.at(PairKind::VideoText),
                                bind_triple_fusion(tape, *params.tri_fuse, "fuse_tri"));
        if (cfg.variant == Variant::CHFusion)
          tri = gru_forward(tape, tri, bind_gru(tape, *params.tri_ctx, "ctx_tri"));
        fused = tri;
      }
    }
  }

  Var logits = dense_forward(tape, fused, bind_dense(tape, params.head, "head"));
  return {tape.softmax_row(logits), fused};
}

ForwardOutput forward(const ModelConfig& cfg, const ModelParams& params,
                      const std::map<Modality, Matrix>& features, const std::vector<uint8_t>& mask) {
  Tape tape;
  ModelGraph g = forward_graph(tape, cfg, params, features);
  if (static_cast<int>(mask.size()) != g.probs.value().rows())
    throw ContractError("forward: mask length " + std::to_string(mask.size()) + " vs " +
                        std::to_string(g.probs.value().rows()) + " utterances");
  return {g.probs.value(), g.fused.value()};
}

std::vector<int> predict(const Matrix& probs) {
  std::vector<int> labels(probs.rows());
  for (int i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < probs.cols(); ++j)
      if (probs(i, j) > probs(i, best)) best = j;
    labels[i] = best;
  }
  return labels;
}

nlohmann::json config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["variant"] = to_string(cfg.variant);
  std::string mods;
  for (Modality m : kAllModalities)
    if (cfg.has(m)) mods += to_key(m);
  j["modalities"] = mods;
  nlohmann::json in_dims, ctx_dims;
  for (Modality m : kAllModalities) {
    if (!cfg.has(m)) continue;
    in_dims[to_key(m)] = cfg.input_dim(m);
    if (cfg.ctx_dims.count(m)) ctx_dims[to_key(m)] = cfg.ctx_dim(m);
  }
  j["input_dims"] = in_dims;
  j["ctx_dims"] = ctx_dims;
  j["shared_dim"] = cfg.shared_dim;
  j["pair_dim"] = cfg.pair_dim;
  j["tri_dim"] = cfg.tri_dim;
  j["classes"] = cfg.classes;
  j["max_utterances"] = cfg.max_utterances;
  j["seed"] = cfg.seed;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    cfg.variant = variant_from_string(j.at("variant").get<std::string>());
    const std::string mods = j.at("modalities").get<std::string>();
    if (mods.empty()) throw ConfigError("model config: modalities string is empty");
    cfg.modalities.clear();
    for (char c : mods) cfg.modalities.push_back(modality_from_key(std::string(1, c)));

    auto read_dims = [&](const char* key, std::map<Modality, int>& out) {
      if (!j.contains(key)) return;
      for (const auto& [k, v] : j.at(key).items()) out[modality_from_key(k)] = v.get<int>();
    };
    read_dims("input_dims", cfg.input_dims);
    read_dims("ctx_dims", cfg.ctx_dims);

    if (j.contains("shared_dim")) cfg.shared_dim = j.at("shared_dim").get<int>();
    if (j.contains("pair_dim")) cfg.pair_dim = j.at("pair_dim").get<int>();
    if (j.contains("tri_dim")) cfg.tri_dim = j.at("tri_dim").get<int>();
    if (j.contains("classes")) cfg.classes = j.at("classes").get<int>();
    if (j.contains("max_utterances")) cfg.max_utterances = j.at("max_utterances").get<int>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params) {
  nlohmann::json j;
  j["config"] = config_to_json(cfg);
  nlohmann::json tensors;
  visit_params(params, [&](const std::string& name, const Matrix& m) {
    tensors[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
  });
  j["params"] = tensors;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model file " + path.string());
  out << j.dump() << "\n";
}

std::pair<ModelConfig, ModelParams> load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("model file " + path.string() + ": " + e.what());
  }
  if (!j.contains("config") || !j.contains("params"))
    throw SchemaError("model file " + path.string() + ": missing config or params");

  ModelConfig cfg = config_from_json(j.at("config"));
  ModelParams params = build_model(cfg);  // shapes come from the config

  const nlohmann::json& tensors = j.at("params");
  size_t used = 0;
  visit_params(params, [&](const std::string& name, Matrix& m) {
    if (!tensors.contains(name))
      throw SchemaError("model file: missing tensor '" + name + "' required by the config");
    const nlohmann::json& t = tensors.at(name);
    const int rows = t.at("rows").get<int>();
    const int cols = t.at("cols").get<int>();
    if (rows != m.rows() || cols != m.cols())
      throw SchemaError("model file: tensor '" + name + "' is " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", config requires " + m.shape_str());
    const auto data = t.at("data").get<std::vector<double>>();
    if (static_cast<long>(data.size()) != m.size())
      throw SchemaError("model file: tensor '" + name + "' data length mismatch");
    m = Matrix(rows, cols, data);
    ++used;
  });
  if (used != tensors.size())
    throw SchemaError("model file: contains tensors the config does not declare");
  return {cfg, params};
}

}  // namespace hierfuse
