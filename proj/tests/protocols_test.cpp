#include "semirobust/protocols.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "semirobust/dataset.hpp"
#include "semirobust/network.hpp"
#include "semirobust/training.hpp"

namespace semirobust {
namespace {

TEST(protocols, planted_linear_tail_is_recovered_exactly) {
  // a freshly built network has zero biases, so its logits are an exact
  // linear function of the last hidden layer: the solver must reproduce them
  const Network net = Network::build({2, 8, 6, 2},
                                     {Activation::relu, Activation::relu, Activation::identity},
                                     27);
  const Dataset data = generate_dataset(DatasetKind::moons, 500, 0.1, 28);

  LambdaConfig cfg;
  cfg.split = 2;
  cfg.ridge = 0.0;
  cfg.batch_size = 256;
  cfg.seed = 33;
  const LambdaSolution solution = algorithm2(net, data, cfg);

  EXPECT_EQ(solution.split, 2u);
  ASSERT_EQ(solution.lambda.size(), 2u);
  EXPECT_EQ(solution.lambda[0].rows(), 8u);
  EXPECT_EQ(solution.lambda[1].rows(), 6u);
  EXPECT_EQ(solution.lambda[1].cols(), 2u);
  EXPECT_FALSE(solution.rank_deficient);
  EXPECT_EQ(solution.ridge_used, 0.0);

  const Tensor predicted = lincomb_predict(net, solution.lambda, 2, data.features);
  const Tensor logits = net.forward(data.features);
  double max_err = 0.0;
  std::size_t argmax_matches = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      max_err = std::max(max_err, std::abs(predicted.at(r, c) - logits.at(r, c)));
    }
    const bool net_says_one = logits.at(r, 1) > logits.at(r, 0);
    const bool fit_says_one = predicted.at(r, 1) > predicted.at(r, 0);
    argmax_matches += net_says_one == fit_says_one ? 1 : 0;
  }
  EXPECT_LE(max_err, 1e-6);
  EXPECT_EQ(argmax_matches, logits.rows());
  EXPECT_DOUBLE_EQ(solution.acc_tilde, clean_accuracy(net, data));

  // random read-out weights sit near chance on a two-class problem
  EXPECT_GT(solution.acc_rand, 20.0);
  EXPECT_LT(solution.acc_rand, 80.0);
}

TEST(protocols, requested_ridge_is_used_verbatim) {
  const Network net = Network::build({2, 8, 6, 2},
                                     {Activation::relu, Activation::relu, Activation::identity},
                                     27);
  const Dataset data = generate_dataset(DatasetKind::moons, 500, 0.1, 28);
  LambdaConfig cfg;
  cfg.split = 2;
  cfg.ridge = 1e-6;
  cfg.seed = 33;
  const LambdaSolution solution = algorithm2(net, data, cfg);
  EXPECT_EQ(solution.ridge_used, 1e-6);
  EXPECT_FALSE(solution.rank_deficient);

  const Tensor predicted = lincomb_predict(net, solution.lambda, 2, data.features);
  const Tensor logits = net.forward(data.features);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    EXPECT_NEAR(predicted[i], logits[i], 1e-3);
  }
}

TEST(protocols, degenerate_activations_trigger_the_ridge_fallback) {
  Network net = Network::build({2, 8, 6, 2},
                               {Activation::relu, Activation::relu, Activation::identity}, 27);
  // make every first-layer unit identical so the stacked activations lose rank
  for (std::size_t r = 1; r < 8; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      net.layer(1).weights.at(r, c) = net.layer(1).weights.at(0, c);
    }
  }
  const Dataset data = generate_dataset(DatasetKind::moons, 500, 0.1, 28);
  LambdaConfig cfg;
  cfg.split = 2;
  cfg.ridge = 0.0;
  cfg.seed = 33;
  const LambdaSolution solution = algorithm2(net, data, cfg);
  EXPECT_TRUE(solution.rank_deficient);
  EXPECT_GT(solution.ridge_used, 0.0);
  ASSERT_FALSE(solution.warnings.empty());
  EXPECT_NE(solution.warnings[0].find("rank deficient"), std::string::npos);

  // an exact reproduction still lives in the span, so the fallback stays close
  const Tensor predicted = lincomb_predict(net, solution.lambda, 2, data.features);
  const Tensor logits = net.forward(data.features);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    EXPECT_NEAR(predicted[i], logits[i], 1e-3);
  }
}

TEST(protocols, lambda_config_and_shapes_are_validated) {
  const Network net = Network::build({2, 6, 2}, {Activation::relu, Activation::identity}, 1);
  const Dataset data = generate_dataset(DatasetKind::moons, 200, 0.1, 2);
  LambdaConfig cfg;
  cfg.split = 0;
  EXPECT_THROW(algorithm2(net, data, cfg), std::invalid_argument);
  cfg.split = 2;  // == depth
  EXPECT_THROW(algorithm2(net, data, cfg), std::invalid_argument);
  cfg.split = 1;
  cfg.ridge = -1.0;
  EXPECT_THROW(algorithm2(net, data, cfg), std::invalid_argument);
  cfg.ridge = 0.0;
  cfg.batch_size = 0;
  EXPECT_THROW(algorithm2(net, data, cfg), std::invalid_argument);
  cfg.batch_size = 256;
  cfg.random_draws = 0;
  EXPECT_THROW(algorithm2(net, data, cfg), std::invalid_argument);

  std::vector<Tensor> wrong_count(2, Tensor({6, 2}));
  EXPECT_THROW(lincomb_predict(net, wrong_count, 1, data.features), std::invalid_argument);
  std::vector<Tensor> wrong_shape(1, Tensor({5, 2}));
  EXPECT_THROW(lincomb_predict(net, wrong_shape, 1, data.features), std::invalid_argument);
}

RhoLearningConfig tiny_rho_config() {
  RhoLearningConfig cfg;
  cfg.trials = 2;
  cfg.max_epochs = 3;
  cfg.tolerance = 1.0;
  cfg.split = 1;
  cfg.train.epochs = 5;
  cfg.train.learning_rate = 0.05;
  cfg.train.lr_decay_epochs = {};
  cfg.train.batch_size = 64;
  cfg.train.optimizer = Optimizer::sgd_momentum;
  cfg.train_attack.epsilon = 0.3;
  cfg.train_attack.step_size = 0.075;
  cfg.train_attack.iterations = 5;
  cfg.eval_attack = cfg.train_attack;
  cfg.mi.min_class_samples = 20;
  cfg.seed = 42;
  return cfg;
}

TEST(protocols, rho_learning_produces_a_complete_reproducible_report) {
  const std::vector<std::size_t> dims = {2, 8, 8, 2};
  const std::vector<Activation> acts = {Activation::relu, Activation::relu, Activation::identity};
  const Dataset train = generate_dataset(DatasetKind::moons, 400, 0.1, 50);
  const Dataset test = generate_dataset(DatasetKind::moons, 200, 0.1, 51);
  const RhoLearningConfig cfg = tiny_rho_config();

  const Algorithm1Result result = algorithm1(dims, acts, train, test, cfg);
  const RhoReport& report = result.report;

  EXPECT_EQ(report.split, 1u);
  ASSERT_EQ(report.trials.size(), 2u);
  for (std::size_t t = 0; t < report.trials.size(); ++t) {
    const TrialTrace& trace = report.trials[t];
    EXPECT_EQ(trace.trial, t + 1);
    EXPECT_FALSE(trace.failed);
    EXPECT_GE(trace.epochs_run, 1u);
    EXPECT_LE(trace.epochs_run, 3u);
    ASSERT_EQ(trace.mi_per_epoch.size(), trace.epochs_run + 1);
    for (const std::vector<LayerRho>& per_layer : trace.mi_per_epoch) {
      ASSERT_EQ(per_layer.size(), 2u);  // layer pairs ending at 2 and 3
      EXPECT_EQ(per_layer[0].layer, 2u);
      EXPECT_EQ(per_layer[1].layer, 3u);
    }
    if (trace.converged) {
      EXPECT_GE(trace.acc_tilde, report.acc_star - cfg.tolerance);
    }
  }

  ASSERT_EQ(report.rho.size(), 2u);
  for (const auto& [layer, value] : report.rho) {
    EXPECT_TRUE(layer == 2 || layer == 3);
    EXPECT_TRUE(std::isfinite(value));
    EXPECT_GE(value, 0.0);
  }
  for (double acc : {report.clean_standard, report.clean_star, report.acc_standard,
                     report.acc_star, report.acc_sr, report.acc_tilde}) {
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 100.0);
  }
  bool some_converged = false;
  for (const TrialTrace& trace : report.trials) some_converged |= trace.converged;
  EXPECT_EQ(report.any_converged, some_converged);
  if (!report.any_converged) EXPECT_EQ(report.mean_epochs, 0.0);

  // the two baselines start from independent draws and end up different
  EXPECT_NE(result.standard_net.flat_params(1, 3), result.robust_net.flat_params(1, 3));

  // byte-identical on a rerun with the same master seed
  const Algorithm1Result again = algorithm1(dims, acts, train, test, cfg);
  EXPECT_EQ(rho_report_json(report), rho_report_json(again.report));
}

TEST(protocols, rho_learning_config_is_validated_before_any_training) {
  const std::vector<std::size_t> dims = {2, 8, 8, 2};
  const std::vector<Activation> acts = {Activation::relu, Activation::relu, Activation::identity};
  const Dataset train = generate_dataset(DatasetKind::moons, 400, 0.1, 50);
  const Dataset test = generate_dataset(DatasetKind::moons, 200, 0.1, 51);

  RhoLearningConfig cfg = tiny_rho_config();
  cfg.trials = 0;
  EXPECT_THROW(algorithm1(dims, acts, train, test, cfg), std::invalid_argument);
  cfg = tiny_rho_config();
  cfg.max_epochs = 0;
  EXPECT_THROW(algorithm1(dims, acts, train, test, cfg), std::invalid_argument);
  cfg = tiny_rho_config();
  cfg.tolerance = -0.5;
  EXPECT_THROW(algorithm1(dims, acts, train, test, cfg), std::invalid_argument);
  cfg = tiny_rho_config();
  cfg.split = 0;
  EXPECT_THROW(algorithm1(dims, acts, train, test, cfg), std::invalid_argument);
  cfg = tiny_rho_config();
  cfg.split = 3;  // == depth
  EXPECT_THROW(algorithm1(dims, acts, train, test, cfg), std::invalid_argument);
  EXPECT_THROW(algorithm1({2}, {}, train, test, tiny_rho_config()), std::invalid_argument);
}

TEST(protocols, finetune_recipe_is_one_slow_epoch) {
  const TrainConfig cfg = default_finetune_config();
  EXPECT_EQ(cfg.epochs, 1u);
  EXPECT_DOUBLE_EQ(cfg.learning_rate, 0.005);
  EXPECT_TRUE(cfg.lr_decay_epochs.empty());
}

TEST(protocols, summary_table_row_formats_every_column) {
  EXPECT_EQ(table_csv_header(),
            "Network,Dataset,#f_b,Acc*,Acc_sr,Acc_tilde,Diff,#Epochs,"
            "rho_n,rho_n-3,rho_n-7,rho_n-11\n");

  RhoReport report;
  report.split = 2;
  report.acc_star = 81.2;
  report.acc_sr = 49.2;
  report.acc_tilde = 80.65;
  report.mean_epochs = 1.8;
  report.rho[6] = 0.25;
  report.rho[3] = 0.125;
  EXPECT_EQ(table_csv_row("mlp-2x16", "moons", 6, report),
            "mlp-2x16,moons,4,81.20,49.20,80.65,-0.55,1.8,0.2500,0.1250,-,-\n");
}

TEST(protocols, report_serialization_round_trips_through_json) {
  RhoReport report;
  report.split = 3;
  report.clean_standard = 90.5;
  report.clean_star = 88.25;
  report.acc_standard = 51.0;
  report.acc_star = 80.0;
  report.acc_sr = 49.5;
  report.acc_tilde = 79.75;
  report.mean_epochs = 2.5;
  report.any_converged = true;
  report.rho[4] = 0.125;
  TrialTrace trace;
  trace.trial = 1;
  trace.converged = true;
  trace.epochs_run = 2;
  trace.acc_tilde = 79.75;
  LayerRho row;
  row.layer = 4;
  row.rho_hat = 0.125;
  row.raw_rho = 0.120;
  trace.mi_per_epoch.push_back({row});
  report.trials.push_back(trace);

  const nlohmann::json doc = nlohmann::json::parse(rho_report_json(report));
  EXPECT_EQ(doc.at("split").get<std::size_t>(), 3u);
  EXPECT_DOUBLE_EQ(doc.at("acc_star").get<double>(), 80.0);
  EXPECT_DOUBLE_EQ(doc.at("rho").at("4").get<double>(), 0.125);
  EXPECT_TRUE(doc.at("any_converged").get<bool>());
  ASSERT_EQ(doc.at("trials").size(), 1u);
  EXPECT_TRUE(doc.at("trials")[0].at("converged").get<bool>());
  EXPECT_DOUBLE_EQ(doc.at("trials")[0].at("mi_per_epoch")[0].at("4").at("rho_hat").get<double>(),
                   0.125);
}

}  // namespace
}  // namespace semirobust
