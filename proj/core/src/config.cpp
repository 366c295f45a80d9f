#include "semirobust/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "semirobust/rng.hpp"

namespace semirobust {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::invalid_argument("config " + path + ": " + what);
}

void check_object(const json& obj, const std::string& path) {
  if (!obj.is_object()) fail(path, "expected an object");
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) fail(path.empty() ? item.key() : path + "." + item.key(), "unknown key");
  }
}

template <typename T>
void read_field(const json& obj, const char* key, const std::string& path, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(path.empty() ? key : path + "." + std::string(key), e.what());
  }
}

void read_field(const json& obj, const char* key, const std::string& path,
                std::optional<double>& out) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  try {
    out = obj.at(key).get<double>();
  } catch (const json::exception& e) {
    fail(path.empty() ? key : path + "." + std::string(key), e.what());
  }
}

AttackBlock parse_attack(const json& obj, const std::string& path) {
  check_object(obj, path);
  check_keys(obj, path,
             {"epsilon", "step_size", "iterations", "random_start", "input_lo", "input_hi"});
  AttackBlock block;
  read_field(obj, "epsilon", path, block.epsilon);
  read_field(obj, "step_size", path, block.step_size);
  read_field(obj, "iterations", path, block.iterations);
  read_field(obj, "random_start", path, block.random_start);
  read_field(obj, "input_lo", path, block.input_lo);
  read_field(obj, "input_hi", path, block.input_hi);
  if (block.input_lo.has_value() != block.input_hi.has_value()) {
    fail(path, "input_lo and input_hi must be set together");
  }
  return block;
}

json attack_json(const AttackBlock& block) {
  json obj = {
      {"epsilon", block.epsilon},
      {"step_size", block.step_size},
      {"iterations", block.iterations},
      {"random_start", block.random_start},
  };
  obj["input_lo"] = block.input_lo.has_value() ? json(*block.input_lo) : json(nullptr);
  obj["input_hi"] = block.input_hi.has_value() ? json(*block.input_hi) : json(nullptr);
  return obj;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  check_object(doc, "(root)");
  check_keys(doc, "", {"seed", "output_dir", "split", "dataset", "network", "training",
                       "train_attack", "eval_attacks", "algorithm", "mi"});

  ExperimentConfig cfg;
  read_field(doc, "seed", "", cfg.seed);
  read_field(doc, "output_dir", "", cfg.output_dir);
  read_field(doc, "split", "", cfg.split);

  if (doc.contains("dataset")) {
    const json& obj = doc.at("dataset");
    check_object(obj, "dataset");
    check_keys(obj, "dataset",
               {"kind", "train_samples", "test_samples", "noise", "file", "format", "limit"});
    read_field(obj, "kind", "dataset", cfg.dataset.kind);
    read_field(obj, "train_samples", "dataset", cfg.dataset.train_samples);
    read_field(obj, "test_samples", "dataset", cfg.dataset.test_samples);
    read_field(obj, "noise", "dataset", cfg.dataset.noise);
    read_field(obj, "file", "dataset", cfg.dataset.file);
    read_field(obj, "format", "dataset", cfg.dataset.format);
    read_field(obj, "limit", "dataset", cfg.dataset.limit);
  }

  if (doc.contains("network")) {
    const json& obj = doc.at("network");
    check_object(obj, "network");
    check_keys(obj, "network", {"dims", "activations", "checkpoint"});
    read_field(obj, "dims", "network", cfg.network.dims);
    read_field(obj, "activations", "network", cfg.network.activations);
    read_field(obj, "checkpoint", "network", cfg.network.checkpoint);
  }

  if (doc.contains("training")) {
    const json& obj = doc.at("training");
    check_object(obj, "training");
    check_keys(obj, "training",
               {"epochs", "learning_rate", "lr_decay_epochs", "lr_decay_factor", "weight_decay",
                "batch_size", "optimizer", "momentum"});
    read_field(obj, "epochs", "training", cfg.training.epochs);
    read_field(obj, "learning_rate", "training", cfg.training.learning_rate);
    read_field(obj, "lr_decay_epochs", "training", cfg.training.lr_decay_epochs);
    read_field(obj, "lr_decay_factor", "training", cfg.training.lr_decay_factor);
    read_field(obj, "weight_decay", "training", cfg.training.weight_decay);
    read_field(obj, "batch_size", "training", cfg.training.batch_size);
    read_field(obj, "optimizer", "training", cfg.training.optimizer);
    read_field(obj, "momentum", "training", cfg.training.momentum);
  }

  if (doc.contains("train_attack")) {
    cfg.train_attack = parse_attack(doc.at("train_attack"), "train_attack");
  }

  if (doc.contains("eval_attacks")) {
    const json& list = doc.at("eval_attacks");
    if (!list.is_array() || list.empty()) fail("eval_attacks", "expected a non-empty array");
    cfg.eval_attacks.clear();
    for (std::size_t i = 0; i < list.size(); ++i) {
      cfg.eval_attacks.push_back(
          parse_attack(list.at(i), "eval_attacks[" + std::to_string(i) + "]"));
    }
  }

  if (doc.contains("algorithm")) {
    const json& obj = doc.at("algorithm");
    check_object(obj, "algorithm");
    check_keys(obj, "algorithm",
               {"mode", "trials", "max_epochs", "tolerance", "finetune_learning_rate",
                "lambda_ridge", "lambda_batch", "lambda_draws", "power_iterations",
                "hvp_epsilon", "bound_perturbations", "bound_delta_norm"});
    read_field(obj, "mode", "algorithm", cfg.algorithm.mode);
    read_field(obj, "trials", "algorithm", cfg.algorithm.trials);
    read_field(obj, "max_epochs", "algorithm", cfg.algorithm.max_epochs);
    read_field(obj, "tolerance", "algorithm", cfg.algorithm.tolerance);
    read_field(obj, "finetune_learning_rate", "algorithm", cfg.algorithm.finetune_learning_rate);
    read_field(obj, "lambda_ridge", "algorithm", cfg.algorithm.lambda_ridge);
    read_field(obj, "lambda_batch", "algorithm", cfg.algorithm.lambda_batch);
    read_field(obj, "lambda_draws", "algorithm", cfg.algorithm.lambda_draws);
    read_field(obj, "power_iterations", "algorithm", cfg.algorithm.power_iterations);
    read_field(obj, "hvp_epsilon", "algorithm", cfg.algorithm.hvp_epsilon);
    read_field(obj, "bound_perturbations", "algorithm", cfg.algorithm.bound_perturbations);
    read_field(obj, "bound_delta_norm", "algorithm", cfg.algorithm.bound_delta_norm);
  }

  if (doc.contains("mi")) {
    const json& obj = doc.at("mi");
    check_object(obj, "mi");
    check_keys(obj, "mi",
               {"projection_dim", "bias_correction", "min_class_samples", "bandwidth_scales"});
    read_field(obj, "projection_dim", "mi", cfg.mi.projection_dim);
    read_field(obj, "bias_correction", "mi", cfg.mi.bias_correction);
    read_field(obj, "min_class_samples", "mi", cfg.mi.min_class_samples);
    read_field(obj, "bandwidth_scales", "mi", cfg.mi.bandwidth_scales);
  }

  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  json eval_attacks = json::array();
  for (const AttackBlock& block : cfg.eval_attacks) eval_attacks.push_back(attack_json(block));
  const json doc = {
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir},
      {"split", cfg.split},
      {"dataset",
       {
           {"kind", cfg.dataset.kind},
           {"train_samples", cfg.dataset.train_samples},
           {"test_samples", cfg.dataset.test_samples},
           {"noise", cfg.dataset.noise},
           {"file", cfg.dataset.file},
           {"format", cfg.dataset.format},
           {"limit", cfg.dataset.limit},
       }},
      {"network",
       {
           {"dims", cfg.network.dims},
           {"activations", cfg.network.activations},
           {"checkpoint", cfg.network.checkpoint},
       }},
      {"training",
       {
           {"epochs", cfg.training.epochs},
           {"learning_rate", cfg.training.learning_rate},
           {"lr_decay_epochs", cfg.training.lr_decay_epochs},
           {"lr_decay_factor", cfg.training.lr_decay_factor},
           {"weight_decay", cfg.training.weight_decay},
           {"batch_size", cfg.training.batch_size},
           {"optimizer", cfg.training.optimizer},
           {"momentum", cfg.training.momentum},
       }},
      {"train_attack", attack_json(cfg.train_attack)},
      {"eval_attacks", eval_attacks},
      {"algorithm",
       {
           {"mode", cfg.algorithm.mode},
           {"trials", cfg.algorithm.trials},
           {"max_epochs", cfg.algorithm.max_epochs},
           {"tolerance", cfg.algorithm.tolerance},
           {"finetune_learning_rate", cfg.algorithm.finetune_learning_rate},
           {"lambda_ridge", cfg.algorithm.lambda_ridge},
           {"lambda_batch", cfg.algorithm.lambda_batch},
           {"lambda_draws", cfg.algorithm.lambda_draws},
           {"power_iterations", cfg.algorithm.power_iterations},
           {"hvp_epsilon", cfg.algorithm.hvp_epsilon},
           {"bound_perturbations", cfg.algorithm.bound_perturbations},
           {"bound_delta_norm", cfg.algorithm.bound_delta_norm},
       }},
      {"mi",
       {
           {"projection_dim", cfg.mi.projection_dim},
           {"bias_correction", cfg.mi.bias_correction},
           {"min_class_samples", cfg.mi.min_class_samples},
           {"bandwidth_scales", cfg.mi.bandwidth_scales},
       }},
  };
  return doc.dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::uint64_t h = fnv1a64(serialize_config(cfg));
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(h));
  return buffer;
}

TrainConfig to_train_config(const TrainingBlock& block) {
  TrainConfig cfg;
  cfg.epochs = block.epochs;
  cfg.learning_rate = block.learning_rate;
  cfg.lr_decay_epochs = block.lr_decay_epochs;
  cfg.lr_decay_factor = block.lr_decay_factor;
  cfg.weight_decay = block.weight_decay;
  cfg.batch_size = block.batch_size;
  cfg.optimizer = optimizer_from_name(block.optimizer);
  cfg.momentum = block.momentum;
  return cfg;
}

AttackConfig to_attack_config(const AttackBlock& block) {
  AttackConfig cfg;
  cfg.epsilon = block.epsilon;
  cfg.step_size = block.step_size;
  cfg.iterations = block.iterations;
  cfg.random_start = block.random_start;
  if (block.input_lo.has_value() && block.input_hi.has_value()) {
    cfg.clamp_inputs = true;
    cfg.clamp_min = *block.input_lo;
    cfg.clamp_max = *block.input_hi;
  }
  return cfg;
}

EdgeConfig to_edge_config(const MiBlock& block) {
  EdgeConfig cfg;
  cfg.projection_dim = block.projection_dim;
  cfg.bias_correction = block.bias_correction;
  cfg.min_class_samples = block.min_class_samples;
  return cfg;
}

}  // namespace semirobust
