#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semirobust/attacks.hpp"
#include "semirobust/dataset.hpp"
#include "semirobust/network.hpp"

namespace semirobust {

enum class Optimizer { sgd, sgd_momentum };

std::string optimizer_name(Optimizer opt);
Optimizer optimizer_from_name(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 60;
  double learning_rate = 0.01;
  std::vector<std::size_t> lr_decay_epochs = {20, 40};  // 1-based; epochs after each decay
  double lr_decay_factor = 0.1;
  double weight_decay = 5e-4;
  std::size_t batch_size = 128;
  Optimizer optimizer = Optimizer::sgd;
  double momentum = 0.9;  // used by sgd_momentum only
  std::uint64_t seed = 0;
  // per-epoch JSON lines when non-empty; full runs start the file afresh,
  // finetune epochs append so one file accumulates a trial
  std::string log_path;

  void validate() const;
};

struct AccuracyRecord {
  double clean_acc = 0.0;                        // percent
  std::map<std::string, double> adversarial;     // attack tag -> percent
  std::string provenance;                        // Acc / Acc* / Acc_sr / Acc_tilde / Acc_rand
  std::string dataset_id;
  std::size_t epoch = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double clean_acc = 0.0;
  std::optional<double> adv_acc;
  double lr = 0.0;
};

struct TrainOutcome {
  AccuracyRecord record;
  std::vector<EpochLog> log;
};

double clean_accuracy(const Network& net, const Dataset& data);
double adversarial_accuracy(const Network& net, const Dataset& data, const AttackConfig& attack);

// accuracy snapshot; regenerates adversarial examples from attack.seed and
// never touches the weights
AccuracyRecord evaluate(const Network& net, const Dataset& data,
                        const AttackConfig* attack = nullptr,
                        const std::string& provenance = "Acc", std::size_t epoch = 0);

// minibatch SGD on clean data; throws on non-finite loss
TrainOutcome train_standard(Network& net, const Dataset& train, const Dataset* eval_split,
                            const TrainConfig& cfg);

// every minibatch is replaced by PGD examples regenerated at the current
// weights; the returned record holds accuracy under eval_attack (the training
// attack when eval_attack is null). epsilon 0 reproduces train_standard
// bit-exactly for the same seed.
TrainOutcome train_adversarial(Network& net, const Dataset& train, const Dataset* eval_split,
                               const AttackConfig& train_attack, const TrainConfig& cfg,
                               const AttackConfig* eval_attack = nullptr);

// One adversarial epoch on the tail of a head-frozen network (one call = one
// epoch); frozen layers stay bit-identical. epoch_index seeds the shuffle and
// labels the log entry. Throws when no layer is frozen.
TrainOutcome finetune_tail(Network& net, const Dataset& train, const Dataset* eval_split,
                           const AttackConfig& train_attack, const TrainConfig& cfg,
                           std::size_t epoch_index, const AttackConfig* eval_attack = nullptr);

}  // namespace semirobust
