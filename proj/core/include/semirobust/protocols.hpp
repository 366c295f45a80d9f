#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "semirobust/attacks.hpp"
#include "semirobust/dataset.hpp"
#include "semirobust/metrics.hpp"
#include "semirobust/mi.hpp"
#include "semirobust/network.hpp"
#include "semirobust/training.hpp"

namespace semirobust {

// finetune recipe used by the rho-learning trials: plain one-epoch-at-a-time
// SGD at a small constant rate
TrainConfig default_finetune_config();

struct RhoLearningConfig {
  std::size_t trials = 10;      // T: composed-net finetune restarts
  std::size_t max_epochs = 10;  // E: finetune epochs per trial
  double tolerance = 1.0;       // k: accuracy points to Acc* that count as converged
  std::size_t split = 0;        // a: head size (required, 1 <= a < depth)
  TrainConfig train;            // recipe for both baseline trainings
  TrainConfig finetune = default_finetune_config();
  AttackConfig train_attack;    // adversarial-training / finetune attack
  AttackConfig eval_attack;     // robust-accuracy + activation-collection attack
  EdgeConfig mi;
  std::vector<double> bandwidth_scales = default_bandwidth_scales();
  std::uint64_t seed = 0;  // master seed; every stream below derives from it

  void validate(std::size_t depth) const;
};

struct TrialTrace {
  std::size_t trial = 0;  // 1-based
  bool converged = false;
  bool failed = false;   // finetuning diverged; excluded from aggregation
  std::string failure;   // what went wrong when failed
  std::size_t epochs_run = 0;
  double acc_tilde = 0.0;  // robust accuracy at the stopping epoch (percent)
  // [e] = per-layer dependence measured before epoch 1 (e = 0) and after
  // each finetune epoch, same estimator as a1_diagnostic
  std::vector<std::vector<LayerRho>> mi_per_epoch;
};

struct RhoReport {
  std::size_t split = 0;
  double clean_standard = 0.0;  // percent, clean test accuracy
  double clean_star = 0.0;
  double acc_standard = 0.0;  // percent, under the eval attack
  double acc_star = 0.0;
  double acc_sr = 0.0;     // robust head + baseline tail, before finetuning
  double acc_tilde = 0.0;  // best stored trial accuracy
  double mean_epochs = 0.0;  // over converged trials
  bool any_converged = false;
  std::map<std::size_t, double> rho;  // layer -> learned bound (nats)
  std::vector<TrialTrace> trials;
};

struct Algorithm1Result {
  RhoReport report;
  Network standard_net;
  Network robust_net;
};

// Learn per-layer dependence bounds by finetuning the tail of a composed
// network (robust head, baseline tail) until its robust accuracy is within
// `tolerance` of the robust baseline. rho per layer is the smallest
// converged-trial measurement; when no trial converges it falls back to the
// largest measurement across trials and clears any_converged.
Algorithm1Result algorithm1(const std::vector<std::size_t>& dims,
                            const std::vector<Activation>& activations, const Dataset& train,
                            const Dataset& test, const RhoLearningConfig& cfg);

struct LambdaConfig {
  std::size_t split = 0;          // a: head layers entering the combination
  double ridge = 1e-6;            // 0 switches to a QR solve
  std::size_t batch_size = 256;   // least-squares batch rows
  std::size_t random_draws = 20;  // baseline draws behind acc_rand
  std::uint64_t seed = 0;

  void validate() const;
};

struct LambdaSolution {
  std::size_t split = 0;
  std::vector<Tensor> lambda;  // [j-1] = [dim_j, classes] weights for head layer j
  double ridge_used = 0.0;
  bool rank_deficient = false;  // a QR solve hit a tiny pivot and fell back to ridge
  double acc_tilde = 0.0;       // percent, argmax of the combination
  double acc_rand = 0.0;        // percent, mean over seeded random weights
  std::vector<std::string> warnings;
};

// scores of the linear combination: sum over head layers of h_j * lambda_j
Tensor lincomb_predict(const Network& net, const std::vector<Tensor>& lambda, std::size_t a,
                       const Tensor& x);

// Fit per-head-layer weights so the combined head activations reproduce the
// network's own logits: batched least squares on (concatenated activations,
// logits), averaged over batches.
LambdaSolution algorithm2(const Network& net, const Dataset& data, const LambdaConfig& cfg);

std::string rho_report_json(const RhoReport& report);
std::string lambda_solution_json(const LambdaSolution& solution);

// summary table: one header line + one row per report
std::string table_csv_header();
std::string table_csv_row(const std::string& network_name, const std::string& dataset_name,
                          std::size_t depth, const RhoReport& report);

}  // namespace semirobust
