#include "semirobust/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "semirobust/rng.hpp"
#include "semirobust/tape.hpp"

namespace semirobust {

std::string optimizer_name(Optimizer opt) {
  switch (opt) {
    case Optimizer::sgd:
      return "sgd";
    case Optimizer::sgd_momentum:
      return "sgd_momentum";
  }
  throw std::invalid_argument("unknown optimizer enum value");
}

Optimizer optimizer_from_name(const std::string& name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "sgd_momentum") return Optimizer::sgd_momentum;
  throw std::invalid_argument("unknown optimizer name: " + name);
}

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be > 0");
  if (lr_decay_factor <= 0.0 || lr_decay_factor > 1.0) {
    throw std::invalid_argument("lr_decay_factor must be in (0, 1]");
  }
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must be in [0, 1)");
}

namespace {

std::size_t argmax_row(const Tensor& scores, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.cols(); ++c) {
    if (scores.at(row, c) > scores.at(row, best)) best = c;
  }
  return best;
}

double accuracy_percent(const Network& net, const Tensor& inputs, const std::vector<int>& labels) {
  const Tensor scores = net.forward(inputs);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    if (argmax_row(scores, r) == static_cast<std::size_t>(labels[r])) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
}

void check_dataset(const Network& net, const Dataset& data, const char* ctx) {
  if (data.size() == 0) throw std::invalid_argument(std::string(ctx) + ": empty dataset");
  if (data.features.rank() != 2 || data.features.rows() != data.size()) {
    throw std::invalid_argument(std::string(ctx) + ": features/labels mismatch");
  }
  if (data.dim() != net.input_dim()) {
    throw std::invalid_argument(std::string(ctx) + ": feature dim " + std::to_string(data.dim()) +
                                " vs network input dim " + std::to_string(net.input_dim()));
  }
  if (data.num_classes != net.output_dim()) {
    throw std::invalid_argument(std::string(ctx) + ": " + std::to_string(data.num_classes) +
                                " classes vs network output dim " +
                                std::to_string(net.output_dim()));
  }
  for (int y : data.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= data.num_classes) {
      throw std::invalid_argument(std::string(ctx) + ": label outside class range");
    }
  }
}

std::string dataset_id(const Dataset& data) {
  if (data.split.empty()) return data.generator;
  return data.generator + "/" + data.split;
}

struct SgdState {
  std::vector<Tensor> vel_w;
  std::vector<Tensor> vel_b;

  explicit SgdState(const Network& net) {
    for (std::size_t j = 1; j <= net.depth(); ++j) {
      vel_w.push_back(Tensor::zeros_like(net.layer(j).weights));
      vel_b.push_back(Tensor::zeros_like(net.layer(j).bias));
    }
  }
};

double decayed_lr(const TrainConfig& cfg, std::size_t epoch) {
  double lr = cfg.learning_rate;
  for (std::size_t d : cfg.lr_decay_epochs) {
    if (epoch > d) lr *= cfg.lr_decay_factor;
  }
  return lr;
}

// one pass over the data; returns the sample-weighted mean training loss
double run_epoch(Network& net, const Dataset& train, const TrainConfig& cfg, double lr,
                 RandomStream& shuffler, std::vector<std::size_t>& order,
                 const AttackConfig* attack, std::uint64_t attack_seed, std::size_t epoch,
                 SgdState& state) {
  shuffler.shuffle(order);
  const std::size_t n = train.size();
  const std::size_t dim = train.dim();
  const std::size_t batch = std::min(cfg.batch_size, n);
  double loss_sum = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t begin = 0; begin < n; begin += batch, ++batch_index) {
    const std::size_t count = std::min(batch, n - begin);
    Tensor xb({count, dim});
    std::vector<int> yb(count);
    for (std::size_t r = 0; r < count; ++r) {
      const std::size_t src = order[begin + r];
      for (std::size_t c = 0; c < dim; ++c) xb.at(r, c) = train.features.at(src, c);
      yb[r] = train.labels[src];
    }
    if (attack != nullptr) {
      AttackConfig batch_attack = *attack;
      batch_attack.seed = derive_seed(attack_seed, "attack-batch", epoch * 1000000 + batch_index);
      xb = pgd(net, LossSpec{}, xb, yb, batch_attack).perturbed;
    }

    Tape tape;
    Network::Traced traced = net.trace(tape, xb, false, true);
    Tape::NodeRef loss = tape.mean_all(tape.softmax_cross_entropy(traced.output(), yb));
    const double loss_value = tape.value(loss)[0];
    if (!std::isfinite(loss_value)) {
      throw std::runtime_error("training diverged: non-finite loss at epoch " +
                               std::to_string(epoch) + ", batch " + std::to_string(batch_index));
    }
    loss_sum += loss_value * static_cast<double>(count);
    tape.backward(loss);

    for (std::size_t j = 1; j <= net.depth(); ++j) {
      DenseLayer& layer = net.layer(j);
      if (layer.frozen) continue;
      const Tensor& gw = tape.grad(traced.weights[j - 1]);
      const Tensor& gb = tape.grad(traced.biases[j - 1]);
      Tensor& vw = state.vel_w[j - 1];
      Tensor& vb = state.vel_b[j - 1];
      for (std::size_t i = 0; i < layer.weights.size(); ++i) {
        const double g = gw[i] + cfg.weight_decay * layer.weights[i];
        vw[i] = cfg.optimizer == Optimizer::sgd_momentum ? cfg.momentum * vw[i] + g : g;
        layer.weights[i] -= lr * vw[i];
      }
      for (std::size_t i = 0; i < layer.bias.size(); ++i) {
        vb[i] = cfg.optimizer == Optimizer::sgd_momentum ? cfg.momentum * vb[i] + gb[i] : gb[i];
        layer.bias[i] -= lr * vb[i];
      }
    }
  }
  return loss_sum / static_cast<double>(n);
}

void append_log(const std::string& path, const EpochLog& entry) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open training log " + path);
  nlohmann::json line;
  line["epoch"] = entry.epoch;
  line["split"] = entry.split;
  line["loss"] = entry.loss;
  line["clean_acc"] = entry.clean_acc;
  if (entry.adv_acc.has_value()) {
    line["adv_acc"] = *entry.adv_acc;
  } else {
    line["adv_acc"] = nullptr;
  }
  line["lr"] = entry.lr;
  out << line.dump() << '\n';
}

TrainOutcome train_loop(Network& net, const Dataset& train, const Dataset* eval_split,
                        const AttackConfig* train_attack, const TrainConfig& cfg,
                        const AttackConfig* eval_attack, const std::string& provenance,
                        std::size_t first_epoch, std::size_t num_epochs,
                        std::uint64_t shuffle_seed, bool truncate_log) {
  cfg.validate();
  check_dataset(net, train, "train");
  if (eval_split != nullptr) check_dataset(net, *eval_split, "eval");
  if (train_attack != nullptr && train_attack->epsilon < 0.0) {
    throw std::invalid_argument("train attack epsilon must be >= 0");
  }
  // a full run owns its log file; a stale one from an earlier run would grow
  if (truncate_log && !cfg.log_path.empty()) std::filesystem::remove(cfg.log_path);

  RandomStream shuffler(shuffle_seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  SgdState state(net);

  TrainOutcome outcome;
  std::size_t last_epoch = first_epoch == 0 ? 0 : first_epoch - 1;
  for (std::size_t e = 0; e < num_epochs; ++e) {
    const std::size_t epoch = first_epoch + e;
    last_epoch = epoch;
    const double lr = decayed_lr(cfg, epoch);
    double loss = 0.0;
    try {
      loss = run_epoch(net, train, cfg, lr, shuffler, order, train_attack, cfg.seed, epoch, state);
    } catch (const std::runtime_error& err) {
      // exploding weights can hit a tensor finiteness check before the loss
      // check does; both are the same condition from the caller's view
      const std::string what = err.what();
      if (what.find("non-finite") != std::string::npos &&
          what.find("diverged") == std::string::npos) {
        throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ": " +
                                 what);
      }
      throw;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = loss;
    entry.lr = lr;
    const Dataset& eval_data = eval_split != nullptr ? *eval_split : train;
    entry.split = eval_data.split.empty() ? "train" : eval_data.split;
    entry.clean_acc = accuracy_percent(net, eval_data.features, eval_data.labels);
    const AttackConfig* acfg = eval_attack != nullptr ? eval_attack : train_attack;
    if (acfg != nullptr) {
      entry.adv_acc = adversarial_accuracy(net, eval_data, *acfg);
    }
    append_log(cfg.log_path, entry);
    outcome.log.push_back(std::move(entry));
  }

  const Dataset& record_data = eval_split != nullptr ? *eval_split : train;
  const AttackConfig* record_attack = eval_attack != nullptr ? eval_attack : train_attack;
  outcome.record = evaluate(net, record_data, record_attack, provenance, last_epoch);
  return outcome;
}

}  // namespace

double clean_accuracy(const Network& net, const Dataset& data) {
  check_dataset(net, data, "clean_accuracy");
  return accuracy_percent(net, data.features, data.labels);
}

double adversarial_accuracy(const Network& net, const Dataset& data, const AttackConfig& attack) {
  check_dataset(net, data, "adversarial_accuracy");
  AttackResult result = pgd(net, LossSpec{}, data.features, data.labels, attack);
  return accuracy_percent(net, result.perturbed, data.labels);
}

AccuracyRecord evaluate(const Network& net, const Dataset& data, const AttackConfig* attack,
                        const std::string& provenance, std::size_t epoch) {
  AccuracyRecord record;
  record.clean_acc = clean_accuracy(net, data);
  if (attack != nullptr) {
    record.adversarial["pgd"] = adversarial_accuracy(net, data, *attack);
  }
  record.provenance = provenance;
  record.dataset_id = dataset_id(data);
  record.epoch = epoch;
  return record;
}

TrainOutcome train_standard(Network& net, const Dataset& train, const Dataset* eval_split,
                            const TrainConfig& cfg) {
  return train_loop(net, train, eval_split, nullptr, cfg, nullptr, "Acc", 1, cfg.epochs,
                    derive_seed(cfg.seed, "shuffle"), /*truncate_log=*/true);
}

TrainOutcome train_adversarial(Network& net, const Dataset& train, const Dataset* eval_split,
                               const AttackConfig& train_attack, const TrainConfig& cfg,
                               const AttackConfig* eval_attack) {
  return train_loop(net, train, eval_split, &train_attack, cfg, eval_attack, "Acc*", 1,
                    cfg.epochs, derive_seed(cfg.seed, "shuffle"), /*truncate_log=*/true);
}

TrainOutcome finetune_tail(Network& net, const Dataset& train, const Dataset* eval_split,
                           const AttackConfig& train_attack, const TrainConfig& cfg,
                           std::size_t epoch_index, const AttackConfig* eval_attack) {
  bool any_frozen = false;
  for (std::size_t j = 1; j <= net.depth(); ++j) any_frozen = any_frozen || net.layer(j).frozen;
  if (!any_frozen) {
    throw std::invalid_argument("finetune_tail: no frozen head on the network");
  }
  return train_loop(net, train, eval_split, &train_attack, cfg, eval_attack, "Acc_tilde",
                    epoch_index, 1, derive_seed(cfg.seed, "shuffle", epoch_index),
                    /*truncate_log=*/false);
}

}  // namespace semirobust
