#include "semirobust/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "semirobust/rng.hpp"

namespace semirobust {

namespace {

std::string suffixed_log(const std::string& prefix, const std::string& suffix) {
  return prefix.empty() ? std::string() : prefix + "-" + suffix + ".jsonl";
}

double percent_correct(const Tensor& scores, const std::vector<int>& labels) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.cols(); ++c) {
      if (scores.at(r, c) > scores.at(r, best)) best = c;
    }
    if (static_cast<int>(best) == labels[r]) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(scores.rows());
}

// concatenated head-layer activations [samples, sum of head dims]
Tensor concat_head(const std::vector<Tensor>& layers, std::size_t a) {
  std::size_t total = 0;
  for (std::size_t j = 1; j <= a; ++j) total += layers[j - 1].cols();
  Tensor out({layers[0].rows(), total});
  std::size_t offset = 0;
  for (std::size_t j = 1; j <= a; ++j) {
    const Tensor& h = layers[j - 1];
    for (std::size_t r = 0; r < h.rows(); ++r) {
      for (std::size_t c = 0; c < h.cols(); ++c) out.at(r, offset + c) = h.at(r, c);
    }
    offset += h.cols();
  }
  return out;
}

// lower-triangular Cholesky solve of (G) X = B for SPD G
Tensor cholesky_solve(Tensor g, const Tensor& b) {
  const std::size_t d = g.rows();
  for (std::size_t k = 0; k < d; ++k) {
    double pivot = g.at(k, k);
    for (std::size_t i = 0; i < k; ++i) pivot -= g.at(k, i) * g.at(k, i);
    if (pivot <= 0.0) {
      throw std::runtime_error("least-squares normal matrix is not positive definite");
    }
    g.at(k, k) = std::sqrt(pivot);
    for (std::size_t r = k + 1; r < d; ++r) {
      double acc = g.at(r, k);
      for (std::size_t i = 0; i < k; ++i) acc -= g.at(r, i) * g.at(k, i);
      g.at(r, k) = acc / g.at(k, k);
    }
  }
  Tensor x = b;  // [d, c]
  for (std::size_t col = 0; col < x.cols(); ++col) {
    for (std::size_t r = 0; r < d; ++r) {  // forward: L y = b
      double acc = x.at(r, col);
      for (std::size_t i = 0; i < r; ++i) acc -= g.at(r, i) * x.at(i, col);
      x.at(r, col) = acc / g.at(r, r);
    }
    for (std::size_t rr = d; rr > 0; --rr) {  // backward: L^T x = y
      const std::size_t r = rr - 1;
      double acc = x.at(r, col);
      for (std::size_t i = r + 1; i < d; ++i) acc -= g.at(i, r) * x.at(i, col);
      x.at(r, col) = acc / g.at(r, r);
    }
  }
  return x;
}

Tensor ridge_solve(const Tensor& a, const Tensor& b, double ridge) {
  const std::size_t d = a.cols();
  Tensor g({d, d});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < a.rows(); ++r) acc += a.at(r, i) * a.at(r, j);
      g.at(i, j) = acc;
      g.at(j, i) = acc;
    }
    g.at(i, i) += ridge;
  }
  Tensor rhs({d, b.cols()});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t c = 0; c < b.cols(); ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < a.rows(); ++r) acc += a.at(r, i) * b.at(r, c);
      rhs.at(i, c) = acc;
    }
  }
  return cholesky_solve(std::move(g), rhs);
}

// Householder QR solve of min ||A x - B||; sets *deficient when a diagonal
// of R is negligible (or the system is underdetermined) and gives up
bool qr_solve(Tensor a, Tensor b, Tensor& solution) {
  const std::size_t m = a.rows();
  const std::size_t d = a.cols();
  if (m < d) return false;
  for (std::size_t k = 0; k < d; ++k) {
    double norm = 0.0;
    for (std::size_t r = k; r < m; ++r) norm += a.at(r, k) * a.at(r, k);
    norm = std::sqrt(norm);
    if (norm == 0.0) return false;
    const double alpha = a.at(k, k) > 0.0 ? -norm : norm;
    std::vector<double> v(m - k);
    v[0] = a.at(k, k) - alpha;
    for (std::size_t r = k + 1; r < m; ++r) v[r - k] = a.at(r, k);
    double vnorm = 0.0;
    for (double q : v) vnorm += q * q;
    if (vnorm == 0.0) {
      continue;  // column already triangular below the diagonal
    }
    auto reflect = [&](Tensor& t, std::size_t col) {
      double dot_vc = 0.0;
      for (std::size_t r = k; r < m; ++r) dot_vc += v[r - k] * t.at(r, col);
      const double scale = 2.0 * dot_vc / vnorm;
      for (std::size_t r = k; r < m; ++r) t.at(r, col) -= scale * v[r - k];
    };
    for (std::size_t col = k; col < d; ++col) reflect(a, col);
    for (std::size_t col = 0; col < b.cols(); ++col) reflect(b, col);
  }
  double max_diag = 0.0;
  for (std::size_t k = 0; k < d; ++k) max_diag = std::max(max_diag, std::abs(a.at(k, k)));
  for (std::size_t k = 0; k < d; ++k) {
    if (std::abs(a.at(k, k)) <= 1e-10 * max_diag) return false;
  }
  solution = Tensor({d, b.cols()});
  for (std::size_t col = 0; col < b.cols(); ++col) {
    for (std::size_t rr = d; rr > 0; --rr) {
      const std::size_t r = rr - 1;
      double acc = b.at(r, col);
      for (std::size_t i = r + 1; i < d; ++i) acc -= a.at(r, i) * solution.at(i, col);
      solution.at(r, col) = acc / a.at(r, r);
    }
  }
  return true;
}

char row_buffer[256];

std::string fixed(double v, int places) {
  std::snprintf(row_buffer, sizeof(row_buffer), "%.*f", places, v);
  return row_buffer;
}

}  // namespace

TrainConfig default_finetune_config() {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.learning_rate = 0.005;
  cfg.lr_decay_epochs = {};
  return cfg;
}

void RhoLearningConfig::validate(std::size_t depth) const {
  if (trials < 1) throw std::invalid_argument("rho learning needs >= 1 trial");
  if (max_epochs < 1) throw std::invalid_argument("rho learning needs >= 1 finetune epoch");
  if (tolerance < 0.0) throw std::invalid_argument("rho learning tolerance must be >= 0");
  if (split < 1 || split >= depth) {
    throw std::invalid_argument("rho learning split " + std::to_string(split) +
                                " must satisfy 1 <= a < depth " + std::to_string(depth));
  }
  train.validate();
  finetune.validate();
}

Algorithm1Result algorithm1(const std::vector<std::size_t>& dims,
                            const std::vector<Activation>& activations, const Dataset& train,
                            const Dataset& test, const RhoLearningConfig& cfg) {
  if (dims.size() < 2) throw std::invalid_argument("algorithm1 needs at least one layer");
  cfg.validate(dims.size() - 1);
  const std::size_t a = cfg.split;
  const std::size_t depth = dims.size() - 1;

  Network standard_net =
      Network::build(dims, activations, derive_seed(cfg.seed, "init-standard"));
  TrainConfig standard_cfg = cfg.train;
  standard_cfg.seed = derive_seed(cfg.seed, "train-standard");
  standard_cfg.log_path = suffixed_log(cfg.train.log_path, "standard");
  train_standard(standard_net, train, nullptr, standard_cfg);

  Network robust_net =
      Network::build(dims, activations, derive_seed(cfg.seed, "init-adversarial"));
  TrainConfig robust_cfg = cfg.train;
  robust_cfg.seed = derive_seed(cfg.seed, "train-adversarial");
  robust_cfg.log_path = suffixed_log(cfg.train.log_path, "adversarial");
  train_adversarial(robust_net, train, nullptr, cfg.train_attack, robust_cfg);

  AttackConfig eval_attack = cfg.eval_attack;
  eval_attack.seed = derive_seed(cfg.seed, "eval-attack");

  RhoReport report;
  report.split = a;
  report.clean_standard = clean_accuracy(standard_net, test);
  report.clean_star = clean_accuracy(robust_net, test);
  report.acc_standard = adversarial_accuracy(standard_net, test, eval_attack);
  report.acc_star = adversarial_accuracy(robust_net, test, eval_attack);

  Network composed = compose_networks(robust_net, standard_net, a);
  report.acc_sr = adversarial_accuracy(composed, test, eval_attack);

  double best_acc = -std::numeric_limits<double>::infinity();
  double epoch_sum = 0.0;
  std::size_t converged_count = 0;
  std::size_t failed_count = 0;

  for (std::size_t t = 1; t <= cfg.trials; ++t) {
    Network net_t = compose_networks(robust_net, standard_net, a);
    net_t.freeze_head(a);

    AttackConfig trial_attack = cfg.eval_attack;
    trial_attack.seed = derive_seed(cfg.seed, "trial-attack", t);
    EdgeConfig trial_mi = cfg.mi;
    trial_mi.seed = derive_seed(cfg.seed, "trial-mi", t);
    TrainConfig finetune_cfg = cfg.finetune;
    finetune_cfg.seed = derive_seed(cfg.seed, "trial-finetune", t);
    finetune_cfg.log_path = suffixed_log(cfg.train.log_path, "trial" + std::to_string(t));
    // finetune epochs append, so each trial has to start its file over
    if (!finetune_cfg.log_path.empty()) std::filesystem::remove(finetune_cfg.log_path);

    TrialTrace trace;
    trace.trial = t;
    trace.mi_per_epoch.push_back(
        a1_diagnostic(net_t, a, test, trial_attack, trial_mi, cfg.bandwidth_scales));

    double trial_best = -std::numeric_limits<double>::infinity();
    for (std::size_t e = 1; e <= cfg.max_epochs; ++e) {
      TrainOutcome outcome;
      try {
        outcome = finetune_tail(net_t, train, &test, cfg.train_attack, finetune_cfg, e,
                                &trial_attack);
      } catch (const std::exception& ex) {
        trace.failed = true;
        trace.failure = ex.what();
        break;
      }
      trace.epochs_run = e;
      trace.mi_per_epoch.push_back(
          a1_diagnostic(net_t, a, test, trial_attack, trial_mi, cfg.bandwidth_scales));
      const double acc_e = outcome.record.adversarial.at("pgd");
      trial_best = std::max(trial_best, acc_e);
      if (report.acc_star - acc_e <= cfg.tolerance) {
        trace.converged = true;
        trace.acc_tilde = acc_e;
        break;
      }
    }
    if (!trace.converged && !trace.failed) trace.acc_tilde = trial_best;
    if (trace.failed) {
      ++failed_count;
    } else {
      best_acc = std::max(best_acc, trace.acc_tilde);
      if (trace.converged) {
        ++converged_count;
        epoch_sum += static_cast<double>(trace.epochs_run);
      }
    }
    report.trials.push_back(std::move(trace));
  }

  if (failed_count == cfg.trials) {
    throw std::runtime_error("algorithm1: every finetune trial diverged");
  }
  report.any_converged = converged_count > 0;
  report.acc_tilde = best_acc;
  report.mean_epochs =
      converged_count > 0 ? epoch_sum / static_cast<double>(converged_count) : 0.0;

  // smallest converged-trial measurement per layer; largest across all
  // completed trials when nothing converged (a conservative fallback)
  for (std::size_t j = a + 1; j <= depth; ++j) {
    double value = report.any_converged ? std::numeric_limits<double>::infinity()
                                        : -std::numeric_limits<double>::infinity();
    for (const TrialTrace& trace : report.trials) {
      if (trace.failed) continue;
      if (report.any_converged && !trace.converged) continue;
      const std::vector<LayerRho>& last = trace.mi_per_epoch.back();
      for (const LayerRho& row : last) {
        if (row.layer != j) continue;
        value = report.any_converged ? std::min(value, row.rho_hat) : std::max(value, row.rho_hat);
      }
    }
    report.rho[j] = value;
  }

  Algorithm1Result result;
  result.report = std::move(report);
  result.standard_net = std::move(standard_net);
  result.robust_net = std::move(robust_net);
  return result;
}

void LambdaConfig::validate() const {
  if (split < 1) throw std::invalid_argument("lambda solve needs split >= 1");
  if (ridge < 0.0) throw std::invalid_argument("lambda ridge must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("lambda batch size must be >= 1");
  if (random_draws < 1) throw std::invalid_argument("lambda needs >= 1 random draw");
}

Tensor lincomb_predict(const Network& net, const std::vector<Tensor>& lambda, std::size_t a,
                       const Tensor& x) {
  if (a < 1 || a >= net.depth()) {
    throw std::invalid_argument("lincomb_predict split must satisfy 1 <= a < depth");
  }
  if (lambda.size() != a) {
    throw std::invalid_argument("lincomb_predict needs one weight matrix per head layer");
  }
  const std::size_t classes = lambda.front().cols();
  const LayerActivations acts = forward_collect(net, x);
  Tensor scores({x.rows(), classes});
  for (std::size_t j = 1; j <= a; ++j) {
    const Tensor& h = acts.layers[j - 1];
    const Tensor& l = lambda[j - 1];
    if (l.rows() != h.cols() || l.cols() != classes) {
      throw std::invalid_argument("lincomb_predict weight shape mismatch at layer " +
                                  std::to_string(j));
    }
    for (std::size_t r = 0; r < h.rows(); ++r) {
      for (std::size_t c = 0; c < classes; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < h.cols(); ++i) acc += h.at(r, i) * l.at(i, c);
        scores.at(r, c) += acc;
      }
    }
  }
  return scores;
}

LambdaSolution algorithm2(const Network& net, const Dataset& data, const LambdaConfig& cfg) {
  cfg.validate();
  if (cfg.split >= net.depth()) {
    throw std::invalid_argument("lambda split " + std::to_string(cfg.split) +
                                " must be below depth " + std::to_string(net.depth()));
  }
  const std::size_t a = cfg.split;
  const LayerActivations acts = forward_collect(net, data.features);
  const Tensor stacked = concat_head(acts.layers, a);
  const Tensor& logits = acts.layers[net.depth() - 1];
  const std::size_t n = stacked.rows();
  const std::size_t d = stacked.cols();
  const std::size_t classes = logits.cols();

  LambdaSolution solution;
  solution.split = a;
  solution.ridge_used = cfg.ridge;

  Tensor mean_lambda({d, classes});
  std::size_t batches = 0;
  for (std::size_t begin = 0; begin < n; begin += cfg.batch_size, ++batches) {
    const std::size_t rows = std::min(cfg.batch_size, n - begin);
    Tensor ab({rows, d});
    Tensor bb({rows, classes});
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < d; ++c) ab.at(r, c) = stacked.at(begin + r, c);
      for (std::size_t c = 0; c < classes; ++c) bb.at(r, c) = logits.at(begin + r, c);
    }
    Tensor batch_lambda;
    if (cfg.ridge > 0.0) {
      batch_lambda = ridge_solve(ab, bb, cfg.ridge);
    } else if (!qr_solve(ab, bb, batch_lambda)) {
      // near-dependent activation columns: retreat to a tiny ridge sized to
      // the activation scale so the batch still contributes
      double trace = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < d; ++c) trace += ab.at(r, c) * ab.at(r, c);
      }
      const double bumped = 1e-8 * std::max(1.0, trace / static_cast<double>(d));
      if (!solution.rank_deficient) {
        solution.warnings.push_back("batch " + std::to_string(batches) +
                                    " is rank deficient; solved with ridge " +
                                    std::to_string(bumped));
      }
      solution.rank_deficient = true;
      solution.ridge_used = std::max(solution.ridge_used, bumped);
      batch_lambda = ridge_solve(ab, bb, bumped);
    }
    for (std::size_t i = 0; i < mean_lambda.size(); ++i) mean_lambda[i] += batch_lambda[i];
  }
  for (std::size_t i = 0; i < mean_lambda.size(); ++i) {
    mean_lambda[i] /= static_cast<double>(batches);
  }

  std::size_t offset = 0;
  for (std::size_t j = 1; j <= a; ++j) {
    const std::size_t dim_j = acts.layers[j - 1].cols();
    Tensor part({dim_j, classes});
    for (std::size_t r = 0; r < dim_j; ++r) {
      for (std::size_t c = 0; c < classes; ++c) part.at(r, c) = mean_lambda.at(offset + r, c);
    }
    offset += dim_j;
    solution.lambda.push_back(std::move(part));
  }

  solution.acc_tilde =
      percent_correct(lincomb_predict(net, solution.lambda, a, data.features), data.labels);

  double rand_sum = 0.0;
  for (std::size_t i = 0; i < cfg.random_draws; ++i) {
    RandomStream rng(derive_seed(cfg.seed, "random-lambda", i));
    std::vector<Tensor> random_lambda;
    for (std::size_t j = 1; j <= a; ++j) {
      Tensor part({acts.layers[j - 1].cols(), classes});
      for (std::size_t q = 0; q < part.size(); ++q) part[q] = rng.normal();
      random_lambda.push_back(std::move(part));
    }
    rand_sum += percent_correct(lincomb_predict(net, random_lambda, a, data.features), data.labels);
  }
  solution.acc_rand = rand_sum / static_cast<double>(cfg.random_draws);
  return solution;
}

std::string rho_report_json(const RhoReport& report) {
  nlohmann::json rho = nlohmann::json::object();
  for (const auto& [layer, value] : report.rho) rho[std::to_string(layer)] = value;
  nlohmann::json trials = nlohmann::json::array();
  for (const TrialTrace& trace : report.trials) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const std::vector<LayerRho>& per_layer : trace.mi_per_epoch) {
      nlohmann::json row = nlohmann::json::object();
      for (const LayerRho& layer : per_layer) {
        row[std::to_string(layer.layer)] = {{"rho_hat", layer.rho_hat},
                                            {"raw_rho", layer.raw_rho}};
      }
      epochs.push_back(std::move(row));
    }
    trials.push_back({
        {"trial", trace.trial},
        {"converged", trace.converged},
        {"failed", trace.failed},
        {"failure", trace.failure},
        {"epochs_run", trace.epochs_run},
        {"acc_tilde", trace.acc_tilde},
        {"mi_per_epoch", std::move(epochs)},
    });
  }
  nlohmann::json doc = {
      {"split", report.split},
      {"clean_standard", report.clean_standard},
      {"clean_star", report.clean_star},
      {"acc_standard", report.acc_standard},
      {"acc_star", report.acc_star},
      {"acc_sr", report.acc_sr},
      {"acc_tilde", report.acc_tilde},
      {"mean_epochs", report.mean_epochs},
      {"any_converged", report.any_converged},
      {"rho", std::move(rho)},
      {"trials", std::move(trials)},
  };
  return doc.dump(2) + "\n";
}

std::string lambda_solution_json(const LambdaSolution& solution) {
  nlohmann::json lambda = nlohmann::json::array();
  for (const Tensor& part : solution.lambda) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < part.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t c = 0; c < part.cols(); ++c) row.push_back(part.at(r, c));
      rows.push_back(std::move(row));
    }
    lambda.push_back(std::move(rows));
  }
  nlohmann::json doc = {
      {"split", solution.split},
      {"ridge_used", solution.ridge_used},
      {"rank_deficient", solution.rank_deficient},
      {"acc_tilde", solution.acc_tilde},
      {"acc_rand", solution.acc_rand},
      {"warnings", solution.warnings},
      {"lambda", std::move(lambda)},
  };
  return doc.dump(2) + "\n";
}

std::string table_csv_header() {
  return "Network,Dataset,#f_b,Acc*,Acc_sr,Acc_tilde,Diff,#Epochs,"
         "rho_n,rho_n-3,rho_n-7,rho_n-11\n";
}

std::string table_csv_row(const std::string& network_name, const std::string& dataset_name,
                          std::size_t depth, const RhoReport& report) {
  std::string row = network_name + "," + dataset_name + "," +
                    std::to_string(depth - report.split) + "," + fixed(report.acc_star, 2) + "," +
                    fixed(report.acc_sr, 2) + "," + fixed(report.acc_tilde, 2) + "," +
                    fixed(report.acc_tilde - report.acc_star, 2) + "," +
                    fixed(report.mean_epochs, 1);
  for (std::size_t back : {std::size_t{0}, std::size_t{3}, std::size_t{7}, std::size_t{11}}) {
    row += ",";
    if (depth > back) {
      const auto it = report.rho.find(depth - back);
      row += it != report.rho.end() ? fixed(it->second, 4) : std::string("-");
    } else {
      row += "-";
    }
  }
  return row + "\n";
}

}  // namespace semirobust
