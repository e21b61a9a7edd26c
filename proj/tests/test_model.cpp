// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <doctest.h>

#include "hierfuse/errors.hpp"
#include "hierfuse/model.hpp"

using namespace hierfuse;

namespace {

ModelConfig tiny_chfusion() {
  ModelConfig cfg;
  cfg.variant = Variant::CHFusion;
  cfg.modalities = {Modality::Text, Modality::Audio, Modality::Video};
  cfg.input_dims = {{Modality::Text, 3}, {Modality::Audio, 4}, {Modality::Video, 5}};
  cfg.ctx_dims = {{Modality::Text, 4}, {Modality::Audio, 4}, {Modality::Video, 4}};
  cfg.shared_dim = 6;
  cfg.pair_dim = 7;
  cfg.tri_dim = 8;
  cfg.classes = 2;
  cfg.max_utterances = 5;
  cfg.seed = 99;
  return cfg;
}

std::map<Modality, Matrix> random_features(const ModelConfig& cfg, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::map<Modality, Matrix> out;
  for (Modality m : cfg.modalities) {
    Matrix f(n, cfg.input_dim(m));
    for (double& v : f.data()) v = dist(rng);
    out.emplace(m, std::move(f));
  }
  return out;
}

void zero_params(ModelParams& p) {
  visit_params(p, [](const std::string&, Matrix& m) { m = Matrix(m.rows(), m.cols()); });
}

}  // namespace

TEST_CASE("build_model is deterministic in the seed") {
  const ModelConfig cfg = tiny_chfusion();
  ModelParams a = build_model(cfg);
  ModelParams b = build_model(cfg);
  visit_params(a, [&](const std::string& name, const Matrix& m) {
    bool found = false;
    visit_params(b, [&](const std::string& other, const Matrix& om) {
      if (other == name) {
        found = true;
        CHECK(max_abs_diff(m, om) == 0.0);
      }
    });
    CHECK(found);
  });
}

TEST_CASE("a single-modality chfusion degenerates to one recurrent cell plus the head") {
  ModelConfig cfg;
  cfg.variant = Variant::CHFusion;
  cfg.modalities = {Modality::Text};
  cfg.input_dims = {{Modality::Text, 5}};
  cfg.ctx_dims = {{Modality::Text, 4}};
  cfg.classes = 2;
  ModelParams p = build_model(cfg);

  CHECK(p.uni_ctx.size() == 1);
  CHECK(p.equalize.empty());
  CHECK(p.pair_fuse.empty());
  CHECK(p.pair_ctx.empty());
  CHECK_FALSE(p.tri_fuse.has_value());
  CHECK_FALSE(p.tri_ctx.has_value());
  CHECK(p.head.in_dim() == 4);
  CHECK(cfg.head_input_dim() == 4);
}

TEST_CASE("hfusion allocates no recurrent cells anywhere") {
  ModelConfig cfg = tiny_chfusion();
  cfg.variant = Variant::HFusion;
  ModelParams p = build_model(cfg);
  CHECK(p.uni_ctx.empty());
  CHECK(p.pair_ctx.empty());
  CHECK_FALSE(p.tri_ctx.has_value());
  CHECK(p.pair_fuse.size() == 3);
  CHECK(p.tri_fuse.has_value());
  CHECK(p.tri_fuse->dim() == cfg.shared_dim);
  CHECK(p.head.in_dim() == cfg.shared_dim);
  // Equalization consumes raw features when the context stage is absent.
  CHECK(p.equalize.at(Modality::Audio).in_dim() == 4);
}

TEST_CASE("parameter counting closed forms") {
  // Recurrent cell: 3*in*out input maps + 4*out*out square maps + out bias.
  ModelConfig uni;
  uni.variant = Variant::CHFusion;
  uni.modalities = {Modality::Text};
  uni.input_dims = {{Modality::Text, 2}};
  uni.ctx_dims = {{Modality::Text, 3}};
  uni.classes = 2;
  ModelParams p = build_model(uni);
  long gru_scalars = 0;
  visit_params(p, [&](const std::string& name, const Matrix& m) {
    if (name.rfind("ctx_T.", 0) == 0) gru_scalars += m.size();
  });
  CHECK(gru_scalars == 57);
  CHECK(p.head.weight.size() + p.head.bias.size() == 3 * 2 + 2);

  // Full tiny pipeline, frozen from an allocation walk.
  const ModelConfig cfg = tiny_chfusion();
  CHECK(param_count(cfg) == 1957);
  CHECK(allocated_scalar_count(build_model(cfg)) == 1957);
}

TEST_CASE("param_count equals allocation for random configs across variants and subsets") {
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<int> dim(1, 6);
  const std::vector<std::vector<Modality>> subsets = {
      {Modality::Text},
      {Modality::Audio},
      {Modality::Video},
      {Modality::Text, Modality::Audio},
      {Modality::Text, Modality::Video},
      {Modality::Audio, Modality::Video},
      {Modality::Text, Modality::Audio, Modality::Video},
  };
  const Variant variants[] = {Variant::Early, Variant::HFusion, Variant::CHFusion};
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig cfg;
    cfg.variant = variants[trial % 3];
    cfg.modalities = subsets[static_cast<size_t>(rng() % subsets.size())];
    for (Modality m : cfg.modalities) {
      cfg.input_dims[m] = dim(rng);
      cfg.ctx_dims[m] = dim(rng);
    }
    cfg.shared_dim = dim(rng);
    cfg.pair_dim = dim(rng);
    cfg.tri_dim = dim(rng);
    cfg.classes = 2 + static_cast<int>(rng() % 3);
    cfg.seed = rng();
    CHECK(param_count(cfg) == allocated_scalar_count(build_model(cfg)));
  }
}

TEST_CASE("forward width chain per variant") {
  std::mt19937_64 rng(42);
  const ModelConfig cfg = tiny_chfusion();
  const auto features = random_features(cfg, 3, rng);
  const std::vector<uint8_t> mask(3, 1);

  SUBCASE("chfusion trimodal classifies the tri-context feature") {
    ForwardOutput out = forward(cfg, build_model(cfg), features, mask);
    CHECK(out.fused.cols() == cfg.tri_dim);
    CHECK(out.probs.rows() == 3);
    CHECK(out.probs.cols() == 2);
    for (int i = 0; i < out.probs.rows(); ++i)
      CHECK(std::abs(out.probs(i, 0) + out.probs(i, 1) - 1.0) < 1e-12);
  }
  SUBCASE("hfusion trimodal stays at the shared width") {
    ModelConfig h = cfg;
    h.variant = Variant::HFusion;
    ForwardOutput out = forward(h, build_model(h), features, mask);
    CHECK(out.fused.cols() == h.shared_dim);
  }
  SUBCASE("chfusion bimodal classifies the pair-context feature") {
    ModelConfig bi = cfg;
    bi.modalities = {Modality::Text, Modality::Audio};
    auto feats = random_features(bi, 3, rng);
    ForwardOutput out = forward(bi, build_model(bi), feats, mask);
    CHECK(out.fused.cols() == bi.pair_dim);
  }
  SUBCASE("early fusion concatenates raw widths") {
    ModelConfig e = cfg;
    e.variant = Variant::Early;
    ForwardOutput out = forward(e, build_model(e), features, mask);
    CHECK(out.fused.cols() == 3 + 4 + 5);
  }
}

TEST_CASE("early-fusion width covers the full-scale feature dims") {
  ModelConfig e;
  e.variant = Variant::Early;
  e.modalities = {Modality::Text, Modality::Audio, Modality::Video};
  e.input_dims = {{Modality::Text, 500}, {Modality::Audio, 6392}, {Modality::Video, 300}};
  CHECK(e.head_input_dim() == 7192);
}

TEST_CASE("all-zero parameters give uniform probabilities") {
  std::mt19937_64 rng(43);
  for (Variant v : {Variant::Early, Variant::HFusion, Variant::CHFusion}) {
    ModelConfig cfg = tiny_chfusion();
    cfg.variant = v;
    cfg.classes = 4;
    ModelParams params = build_model(cfg);
    zero_params(params);
    ForwardOutput out = forward(cfg, params, random_features(cfg, 3, rng), std::vector<uint8_t>(3, 1));
    for (int i = 0; i < out.probs.rows(); ++i)
      for (int j = 0; j < out.probs.cols(); ++j)
        CHECK(out.probs(i, j) == doctest::Approx(0.25).epsilon(1e-14));
  }
}

TEST_CASE("predict breaks ties toward the lowest class and is monotone-invariant") {
  CHECK(predict(Matrix::of({{0.5, 0.5}})) == std::vector<int>{0});
  CHECK(predict(Matrix::of({{0.2, 0.8}})) == std::vector<int>{1});

  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> dist(0.05, 1.0);
  Matrix probs(5, 3);
  for (double& v : probs.data()) v = dist(rng);
  Matrix squashed = probs;
  for (double& v : squashed.data()) v = std::sqrt(v);  // strictly monotone transform
  CHECK(predict(probs) == predict(squashed));
}

TEST_CASE("pair fusions are independent: computing them in any order matches") {
  std::mt19937_64 rng(45);
  ModelConfig cfg = tiny_chfusion();
  cfg.variant = Variant::HFusion;
  ModelParams params = build_model(cfg);
  const auto features = random_features(cfg, 3, rng);

  const Matrix g_t = dense_forward(features.at(Modality::Text), params.equalize.at(Modality::Text));
  const Matrix g_a = dense_forward(features.at(Modality::Audio), params.equalize.at(Modality::Audio));
  const Matrix g_v = dense_forward(features.at(Modality::Video), params.equalize.at(Modality::Video));

  auto tri_from_order = [&](const std::vector<PairKind>& order) {
    std::map<PairKind, Matrix> fused;
    for (PairKind pk : order) {
      switch (pk) {
        case PairKind::VideoAudio:
          fused.emplace(pk, bimodal_fuse(g_v, g_a, params.pair_fuse.at(pk)));
          break;
        case PairKind::AudioText:
          fused.emplace(pk, bimodal_fuse(g_a, g_t, params.pair_fuse.at(pk)));
          break;
        case PairKind::VideoText:
          fused.emplace(pk, bimodal_fuse(g_v, g_t, params.pair_fuse.at(pk)));
          break;
      }
    }
    return trimodal_fuse(fused.at(PairKind::VideoAudio), fused.at(PairKind::AudioText),
                         fused.at(PairKind::VideoText), *params.tri_fuse);
  };

  const Matrix forward_order = tri_from_order({PairKind::VideoAudio, PairKind::AudioText, PairKind::VideoText});
  const Matrix reverse_order = tri_from_order({PairKind::VideoText, PairKind::AudioText, PairKind::VideoAudio});
  CHECK(max_abs_diff(forward_order, reverse_order) == 0.0);

  // ... and the assembled pipeline agrees with the hand-built one.
  ForwardOutput out = forward(cfg, params, features, std::vector<uint8_t>(3, 1));
  CHECK(max_abs_diff(out.fused, forward_order) == 0.0);
}

TEST_CASE("causality survives the whole chfusion pipeline") {
  std::mt19937_64 rng(46);
  const ModelConfig cfg = tiny_chfusion();
  ModelParams params = build_model(cfg);
  auto features = random_features(cfg, 4, rng);
  const std::vector<uint8_t> mask(4, 1);
  const ForwardOutput base = forward(cfg, params, features, mask);

  const int t = 2;
  for (Modality m : cfg.modalities)
    for (int j = 0; j < features.at(m).cols(); ++j) features.at(m)(t, j) += 3.0;
  const ForwardOutput moved = forward(cfg, params, features, mask);

  for (int i = 0; i < t; ++i)
    for (int j = 0; j < base.probs.cols(); ++j) CHECK(base.probs(i, j) == moved.probs(i, j));
  CHECK(max_abs_diff(row(base.probs, t), row(moved.probs, t)) > 0.0);
}

TEST_CASE("forward validates widths, counts, and the sequence cap") {
  std::mt19937_64 rng(47);
  const ModelConfig cfg = tiny_chfusion();
  ModelParams params = build_model(cfg);
  auto features = random_features(cfg, 3, rng);

  auto bad = features;
  bad.at(Modality::Text) = Matrix(3, 9);
  CHECK_THROWS_AS(forward(cfg, params, bad, std::vector<uint8_t>(3, 1)), DimensionError);

  auto missing = features;
  missing.erase(Modality::Video);
  CHECK_THROWS_AS(forward(cfg, params, missing, std::vector<uint8_t>(3, 1)), ContractError);

  auto too_long = random_features(cfg, cfg.max_utterances + 1, rng);
  CHECK_THROWS_AS(forward(cfg, params, too_long, std::vector<uint8_t>(cfg.max_utterances + 1, 1)),
                  ContractError);
}

TEST_CASE("model serialization round-trips and validates shapes") {
  const ModelConfig cfg = tiny_chfusion();
  ModelParams params = build_model(cfg);
  const auto path = std::filesystem::temp_directory_path() / "hierfuse_model_test.json";
  save_model(path, cfg, params);

  auto [loaded_cfg, loaded_params] = load_model(path);
  CHECK(config_to_json(loaded_cfg) == config_to_json(cfg));
  visit_params(params, [&](const std::string& name, const Matrix& m) {
    visit_params(loaded_params, [&](const std::string& other, const Matrix& om) {
      if (other == name) CHECK(max_abs_diff(m, om) == 0.0);
    });
  });

  // A shape that contradicts the config must be rejected.
  {
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    j["params"]["head.bias"]["cols"] = 7;
    const auto bad_path = std::filesystem::temp_directory_path() / "hierfuse_model_bad.json";
    std::ofstream out(bad_path);
    out << j.dump();
    out.close();
    CHECK_THROWS_AS(load_model(bad_path), SchemaError);
    std::filesystem::remove(bad_path);
  }
  // Extra undeclared tensors must be rejected.
  {
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    j["params"]["mystery.weight"] = {{"rows", 1}, {"cols", 1}, {"data", {0.0}}};
    const auto bad_path = std::filesystem::temp_directory_path() / "hierfuse_model_extra.json";
    std::ofstream out(bad_path);
    out << j.dump();
    out.close();
    CHECK_THROWS_AS(load_model(bad_path), SchemaError);
    std::filesystem::remove(bad_path);
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_model(path), IoError);
}

TEST_CASE("config validation rejects bad inputs") {
  ModelConfig empty;
  empty.modalities.clear();
  CHECK_THROWS_AS(empty.validate(), ConfigError);

  ModelConfig dup = tiny_chfusion();
  dup.modalities = {Modality::Text, Modality::Text};
  CHECK_THROWS_AS(dup.validate(), ConfigError);

  ModelConfig bad_dim = tiny_chfusion();
  bad_dim.input_dims[Modality::Audio] = 0;
  CHECK_THROWS_AS(bad_dim.validate(), ConfigError);

  CHECK_THROWS_AS(variant_from_string("late"), ConfigError);
  CHECK_THROWS_AS(modality_from_key("X"), ConfigError);
}
