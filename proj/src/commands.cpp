// SPDX-License-Identifier: Apache-2.0
#include "hierfuse/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>

#include "hierfuse/errors.hpp"

namespace hierfuse::cli {

namespace {

nlohmann::json read_json_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw IoError(std::string("cannot open ") + what + " " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(what) + " " + path.string() + ": " + e.what());
  }
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig tc;
  try {
    if (j.contains("max_epochs")) tc.max_epochs = j.at("max_epochs").get<int>();
    if (j.contains("patience")) tc.patience = j.at("patience").get<int>();
    if (j.contains("val_fraction")) tc.val_fraction = j.at("val_fraction").get<double>();
    if (j.contains("batch_size")) tc.batch_size = j.at("batch_size").get<int>();
    if (j.contains("lr")) tc.lr = j.at("lr").get<double>();
    if (j.contains("beta1")) tc.beta1 = j.at("beta1").get<double>();
    if (j.contains("beta2")) tc.beta2 = j.at("beta2").get<double>();
    if (j.contains("epsilon")) tc.epsilon = j.at("epsilon").get<double>();
    if (j.contains("seed")) tc.seed = j.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  tc.validate();
  return tc;
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec spec;
  try {
    if (j.contains("n_train")) spec.n_train = j.at("n_train").get<int>();
    if (j.contains("n_test")) spec.n_test = j.at("n_test").get<int>();
    if (j.contains("utterances_per_video"))
      spec.utterances_per_video = j.at("utterances_per_video").get<int>();
    if (j.contains("classes")) spec.classes = j.at("classes").get<int>();
    if (j.contains("dims")) {
      spec.dims.clear();
      for (const auto& [k, v] : j.at("dims").items()) spec.dims[modality_from_key(k)] = v.get<int>();
    }
    if (j.contains("strength")) {
      spec.strength.clear();
      if (j.at("strength").is_number()) {
        for (const auto& [m, d] : spec.dims) spec.strength[m] = j.at("strength").get<double>();
      } else {
        for (const auto& [k, v] : j.at("strength").items())
          spec.strength[modality_from_key(k)] = v.get<double>();
      }
    }
    if (j.contains("noise_std")) spec.noise_std = j.at("noise_std").get<double>();
    if (j.contains("conflict_fraction")) spec.conflict_fraction = j.at("conflict_fraction").get<double>();
    if (j.contains("seed")) spec.seed = j.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

int map_exception(const std::function<int()>& body) {
  try {
    return body();
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMissingFile;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadData;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExecutionError;
  }
}

// Dataset manifests are authoritative for widths and class count; the model
// section may restate them but must agree.
void reconcile_with_data(ModelConfig& cfg, const nlohmann::json& model_json, const Dataset& train,
                         const Dataset& test) {
  for (Modality m : cfg.modalities) {
    auto it = train.dims.find(m);
    if (it == train.dims.end())
      throw ConfigError("model uses modality " + to_key(m) + " but the dataset does not provide it");
    if (model_json.contains("input_dims") && model_json.at("input_dims").contains(to_key(m))) {
      const int declared = model_json.at("input_dims").at(to_key(m)).get<int>();
      if (declared != it->second)
        throw ConfigError("config input dim for " + to_key(m) + " is " + std::to_string(declared) +
                          ", dataset manifest says " + std::to_string(it->second));
    }
    cfg.input_dims[m] = it->second;
  }
  if (model_json.contains("classes") && model_json.at("classes").get<int>() != train.classes)
    throw ConfigError("config declares " + std::to_string(model_json.at("classes").get<int>()) +
                      " classes, dataset manifest says " + std::to_string(train.classes));
  cfg.classes = train.classes;
  cfg.max_utterances =
      std::max({cfg.max_utterances, train.max_utterances(), test.max_utterances()});
  cfg.validate();
}

bool is_plain_baseline(const ModelConfig& cfg) {
  return cfg.modalities.size() == 1 && cfg.variant != Variant::CHFusion;
}

}  // namespace

RunConfig read_run_config(const std::filesystem::path& path) {
  const nlohmann::json j = read_json_file(path, "run config");
  RunConfig rc;
  try {
    if (!j.contains("model")) throw ConfigError("run config: missing \"model\" section");
    rc.model = config_from_json(j.at("model"));
    if (j.contains("train")) rc.train = train_config_from_json(j.at("train"));
    if (j.contains("data")) {
      const nlohmann::json& d = j.at("data");
      if (d.contains("synth")) {
        rc.synth = synth_spec_from_json(d.at("synth"));
      } else {
        if (d.contains("train")) rc.train_path = d.at("train").get<std::string>();
        if (d.contains("test")) rc.test_path = d.at("test").get<std::string>();
      }
    }
    if (j.contains("out") && j.at("out").contains("dir"))
      rc.out_dir = j.at("out").at("dir").get<std::string>();
    if (j.contains("gradcheck")) {
      const nlohmann::json& g = j.at("gradcheck");
      if (g.contains("epsilon")) rc.gc_epsilon = g.at("epsilon").get<double>();
      if (g.contains("tolerance")) rc.gc_tolerance = g.at("tolerance").get<double>();
      if (g.contains("utterances")) rc.gc_utterances = g.at("utterances").get<int>();
      if (g.contains("probes")) rc.gc_probes = g.at("probes").get<int>();
      if (g.contains("seed")) rc.gc_seed = g.at("seed").get<uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("run config " + path.string() + ": " + e.what());
  }
  return rc;
}

SynthSpec read_synth_spec(const std::filesystem::path& path) {
  return synth_spec_from_json(read_json_file(path, "synth spec"));
}

nlohmann::json metrics_to_json(const Metrics& m) {
  nlohmann::json j;
  j["accuracy"] = m.accuracy;
  j["f1_weighted"] = m.f1_weighted;
  j["f1_per_class"] = m.f1;
  j["precision_per_class"] = m.precision;
  j["recall_per_class"] = m.recall;
  j["confusion"] = m.confusion;
  j["n_utterances"] = m.n_utterances;
  return j;
}

int cmd_run(const std::filesystem::path& config_path) {
  return map_exception([&]() {
    const nlohmann::json raw = read_json_file(config_path, "run config");
    RunConfig rc = read_run_config(config_path);

    Dataset train_data, test_data;
    if (rc.synth) {
      std::tie(train_data, test_data) = synth_generate(*rc.synth);
      std::cout << "synthesized " << train_data.videos.size() << " train / " << test_data.videos.size()
                << " test videos\n";
    } else {
      if (!rc.train_path || !rc.test_path)
        throw ConfigError("run config: \"data\" needs either \"synth\" or both \"train\" and \"test\"");
      train_data = load_dataset(*rc.train_path);
      test_data = load_dataset(*rc.test_path);
    }
    reconcile_with_data(rc.model, raw.at("model"), train_data, test_data);

    ModelParams params = build_model(rc.model);
    std::cout << "variant " << to_string(rc.model.variant) << ", " << param_count(rc.model)
              << " trainable scalars\n";
    if (is_plain_baseline(rc.model))
      std::cout << "note: a single " << to_string(rc.model.variant)
                << " modality reduces to a plain dense+softmax baseline\n";

    TrainResult result = train(rc.model, params, train_data, rc.train);
    std::cout << "trained " << result.history.size() << " epochs, best validation loss "
              << result.best_val_loss << " at epoch " << result.best_epoch << "\n";

    std::filesystem::create_directories(rc.out_dir);
    save_model(rc.out_dir / "model.json", rc.model, result.params);
    write_history_jsonl(rc.out_dir / "history.jsonl", result.history);

    const Metrics metrics = evaluate(rc.model, result.params, test_data);
    std::ofstream mout(rc.out_dir / "metrics.json");
    if (!mout) throw IoError("cannot write metrics file " + (rc.out_dir / "metrics.json").string());
    mout << metrics_to_json(metrics).dump(2) << "\n";

    std::cout << "test accuracy " << metrics.accuracy << ", weighted F1 " << metrics.f1_weighted << " ("
              << metrics.n_utterances << " utterances)\n";
    std::cout << "wrote " << (rc.out_dir / "model.json").string() << ", "
              << (rc.out_dir / "history.jsonl").string() << ", "
              << (rc.out_dir / "metrics.json").string() << "\n";
    return kOk;
  });
}

int cmd_gradcheck(const std::filesystem::path& config_path) {
  return map_exception([&]() {
    RunConfig rc = read_run_config(config_path);
    if (rc.gc_probes < 1) throw ConfigError("gradcheck: probes must be >= 1");
    ModelParams params = build_model(rc.model);
    // Check at a generic point; the structured init has zero biases and a
    // zero initial state, which underfeeds the recurrent weight gradients.
    perturb_params(params, 0.3, rc.gc_seed);
    const int n = std::min(rc.gc_utterances, rc.model.max_utterances);
    std::vector<PaddedBatch> probes;
    for (int p = 0; p < rc.gc_probes; ++p) probes.push_back(random_batch(rc.model, n, rc.gc_seed + 1 + p));

    const GradCheckReport report = gradient_check(rc.model, params, probes, rc.gc_epsilon);
    for (const GradCheckEntry& e : report.entries)
      std::cout << "  " << e.name << "  max rel err " << e.max_rel_err << "\n";
    std::cout << "worst " << report.worst << " (" << report.worst_name << "), tolerance "
              << rc.gc_tolerance << "\n";
    if (!report.passed(rc.gc_tolerance)) {
      std::cerr << "gradient check FAILED: " << report.worst_name << " max rel err " << report.worst
                << " >= " << rc.gc_tolerance << "\n";
      return kCheckFailed;
    }
    std::cout << "gradient check passed\n";
    return kOk;
  });
}

int cmd_synth(const std::filesystem::path& spec_path, const std::filesystem::path& out_dir) {
  return map_exception([&]() {
    const SynthSpec spec = read_synth_spec(spec_path);
    auto [train_data, test_data] = synth_generate(spec);
    std::filesystem::create_directories(out_dir);
    save_dataset(out_dir / "train.jsonl", train_data);
    std::cout << "wrote " << (out_dir / "train.jsonl").string() << " (" << train_data.videos.size()
              << " videos)\n";
    if (!test_data.videos.empty()) {
      save_dataset(out_dir / "test.jsonl", test_data);
      std::cout << "wrote " << (out_dir / "test.jsonl").string() << " (" << test_data.videos.size()
                << " videos)\n";
    }
    return kOk;
  });
}

int cmd_eval(const std::filesystem::path& model_path, const std::filesystem::path& data_path,
             const std::optional<std::filesystem::path>& metrics_out) {
  return map_exception([&]() {
    auto [cfg, params] = load_model(model_path);
    const Dataset data = load_dataset(data_path);
    cfg.max_utterances = std::max(cfg.max_utterances, data.max_utterances());
    const Metrics metrics = evaluate(cfg, params, data);
    const nlohmann::json j = metrics_to_json(metrics);
    std::cout << j.dump(2) << "\n";
    if (metrics_out) {
      std::ofstream out(*metrics_out);
      if (!out) throw IoError("cannot write metrics file " + metrics_out->string());
      out << j.dump(2) << "\n";
    }
    return kOk;
  });
}

}  // namespace hierfuse::cli
