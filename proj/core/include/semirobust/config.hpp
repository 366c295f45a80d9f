#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "semirobust/attacks.hpp"
#include "semirobust/dataset.hpp"
#include "semirobust/mi.hpp"
#include "semirobust/training.hpp"

namespace semirobust {

// Experiment configuration, read from a JSON file. Every field has a
// default, so an empty object {} is a valid config; unknown keys anywhere
// are rejected with their full path.

struct DatasetBlock {
  std::string kind = "moons";  // generator name, or "file" to load from disk
  std::size_t train_samples = 4000;
  std::size_t test_samples = 2000;
  double noise = 0.1;     // generator shape knob
  std::string file;       // when kind == "file"
  std::string format = "idx";  // idx | csv
  std::size_t limit = 0;       // 0 = all samples
};

struct NetworkBlock {
  std::vector<std::size_t> dims = {2, 16, 16, 16, 16, 8, 2};
  std::vector<std::string> activations = {"relu", "relu", "relu", "relu", "relu", "identity"};
  std::string checkpoint;  // load weights instead of training
};

struct TrainingBlock {
  std::size_t epochs = 60;
  double learning_rate = 0.05;
  std::vector<std::size_t> lr_decay_epochs = {20, 40};
  double lr_decay_factor = 0.1;
  double weight_decay = 5e-4;
  std::size_t batch_size = 128;
  std::string optimizer = "sgd_momentum";
  double momentum = 0.9;
};

struct AttackBlock {
  double epsilon = 0.3;
  double step_size = 0.075;
  std::size_t iterations = 10;
  bool random_start = true;
  std::optional<double> input_lo;  // both set = clamp perturbed inputs
  std::optional<double> input_hi;
};

struct AlgorithmBlock {
  std::string mode = "rho-learn";  // rho-learn | lambda-solve | diagnostics | bounds |
                                   // train | attack-eval
  std::size_t trials = 5;
  std::size_t max_epochs = 10;
  double tolerance = 1.0;
  double finetune_learning_rate = 0.005;
  double lambda_ridge = 1e-6;
  std::size_t lambda_batch = 256;
  std::size_t lambda_draws = 20;
  std::size_t power_iterations = 200;
  double hvp_epsilon = 1e-4;
  std::size_t bound_perturbations = 100;
  double bound_delta_norm = 1e-2;
};

struct MiBlock {
  std::size_t projection_dim = 8;
  bool bias_correction = true;
  std::size_t min_class_samples = 50;
  std::vector<double> bandwidth_scales = {1.0, 2.0, 4.0, 8.0};
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs";
  std::size_t split = 3;  // head size a
  DatasetBlock dataset;
  NetworkBlock network;
  TrainingBlock training;
  AttackBlock train_attack;
  std::vector<AttackBlock> eval_attacks = {AttackBlock{}};
  AlgorithmBlock algorithm;
  MiBlock mi;
};

// parse/serialize round-trip is idempotent; parse errors carry the key path
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

// 16-hex-digit content hash of the canonical serialized form
std::string config_hash(const ExperimentConfig& cfg);

// adapters into the library configs (seeds are filled in by the runner)
TrainConfig to_train_config(const TrainingBlock& block);
AttackConfig to_attack_config(const AttackBlock& block);
EdgeConfig to_edge_config(const MiBlock& block);

}  // namespace semirobust
