#include "semirobust/runner.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <type_traits>
#include <utility>

#include <nlohmann/json.hpp>

#include "semirobust/checkpoint.hpp"
#include "semirobust/metrics.hpp"
#include "semirobust/probe.hpp"
#include "semirobust/protocols.hpp"
#include "semirobust/rng.hpp"

namespace semirobust {

namespace {

using nlohmann::json;

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  const auto now = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(now - start).count();
}

// run a pipeline phase: timed, and failures rephrased with the phase name
template <typename Fn>
auto phase(RunRecord& record, const std::string& name, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      record.timings_ms[name] = elapsed_ms(start);
    } else {
      auto result = fn();
      record.timings_ms[name] = elapsed_ms(start);
      return result;
    }
  } catch (const std::invalid_argument& e) {
    record.timings_ms[name] = elapsed_ms(start);
    throw std::invalid_argument("phase '" + name + "': " + e.what());
  } catch (const std::exception& e) {
    record.timings_ms[name] = elapsed_ms(start);
    throw std::runtime_error("phase '" + name + "': " + e.what());
  }
}

void write_artifact(RunRecord& record, const std::string& name, const std::string& content) {
  const std::filesystem::path path = std::filesystem::path(record.out_dir) / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  record.artifacts.push_back(name);
}

std::string network_name(const std::vector<std::size_t>& dims) {
  std::string name = "mlp";
  for (std::size_t d : dims) name += (name == "mlp" ? "-" : "x") + std::to_string(d);
  return name;
}

std::vector<Activation> parse_activations(const NetworkBlock& block) {
  if (block.activations.size() + 1 != block.dims.size()) {
    throw std::invalid_argument("network needs one activation per layer (" +
                                std::to_string(block.dims.size() - 1) + ")");
  }
  std::vector<Activation> acts;
  for (const std::string& name : block.activations) acts.push_back(activation_from_name(name));
  return acts;
}

Dataset slice(const Dataset& whole, std::size_t begin, std::size_t count,
              const std::string& split) {
  Dataset out;
  out.features = Tensor({count, whole.dim()});
  out.labels.resize(count);
  for (std::size_t r = 0; r < count; ++r) {
    for (std::size_t c = 0; c < whole.dim(); ++c) {
      out.features.at(r, c) = whole.features.at(begin + r, c);
    }
    out.labels[r] = whole.labels[begin + r];
  }
  out.num_classes = whole.num_classes;
  out.split = split;
  out.generator = whole.generator;
  out.seed = whole.seed;
  return out;
}

struct SplitData {
  Dataset train;
  Dataset test;
};

SplitData make_datasets(const ExperimentConfig& cfg) {
  SplitData data;
  if (cfg.dataset.kind == "file") {
    if (cfg.dataset.file.empty()) {
      throw std::invalid_argument("dataset.kind 'file' needs dataset.file");
    }
    const ImageFormat format = cfg.dataset.format == "csv" ? ImageFormat::csv : ImageFormat::idx;
    if (cfg.dataset.format != "csv" && cfg.dataset.format != "idx") {
      throw std::invalid_argument("dataset.format must be idx or csv");
    }
    const Dataset whole = load_small_images(cfg.dataset.file, format, cfg.dataset.limit);
    if (cfg.dataset.train_samples + cfg.dataset.test_samples > whole.size()) {
      throw std::invalid_argument("dataset file holds " + std::to_string(whole.size()) +
                                  " samples, fewer than train+test");
    }
    data.train = slice(whole, 0, cfg.dataset.train_samples, "train");
    data.test = slice(whole, cfg.dataset.train_samples, cfg.dataset.test_samples, "test");
    return data;
  }
  const DatasetKind kind = dataset_kind_from_name(cfg.dataset.kind);
  data.train = generate_dataset(kind, cfg.dataset.train_samples, cfg.dataset.noise,
                                derive_seed(cfg.seed, "dataset-train"));
  data.train.split = "train";
  data.test = generate_dataset(kind, cfg.dataset.test_samples, cfg.dataset.noise,
                               derive_seed(cfg.seed, "dataset-test"));
  data.test.split = "test";
  return data;
}

void check_split(const ExperimentConfig& cfg, std::size_t depth) {
  if (cfg.split < 1 || cfg.split >= depth) {
    throw std::invalid_argument("split " + std::to_string(cfg.split) +
                                " must satisfy 1 <= a < depth " + std::to_string(depth));
  }
}

Network load_required_checkpoint(const ExperimentConfig& cfg, const char* mode) {
  if (cfg.network.checkpoint.empty()) {
    throw std::invalid_argument(std::string(mode) + " needs network.checkpoint");
  }
  return load_checkpoint(cfg.network.checkpoint).network;
}

AttackConfig eval_attack_at(const ExperimentConfig& cfg, std::size_t index) {
  AttackConfig attack = to_attack_config(cfg.eval_attacks.at(index));
  attack.seed = derive_seed(cfg.seed, "eval-attack", index);
  return attack;
}

json accuracy_json(const AccuracyRecord& record) {
  json adv = json::object();
  for (const auto& [tag, value] : record.adversarial) adv[tag] = value;
  return {{"provenance", record.provenance},
          {"clean_acc", record.clean_acc},
          {"adversarial", adv}};
}

std::string plot_rho_csv(const std::map<std::size_t, double>& rho) {
  std::string out = "layer,rho\n";
  for (const auto& [layer, value] : rho) {
    char line[64];
    std::snprintf(line, sizeof(line), "%zu,%.6f\n", layer, value);
    out += line;
  }
  return out;
}

// ---- pipelines ---------------------------------------------------------

void run_train(const ExperimentConfig& cfg, RunRecord& record, const SplitData& data) {
  const std::vector<Activation> acts = parse_activations(cfg.network);
  const AttackConfig eval_attack = eval_attack_at(cfg, 0);
  const AttackConfig train_attack = to_attack_config(cfg.train_attack);

  Network standard_net =
      Network::build(cfg.network.dims, acts, derive_seed(cfg.seed, "init-standard"));
  TrainConfig standard_cfg = to_train_config(cfg.training);
  standard_cfg.seed = derive_seed(cfg.seed, "train-standard");
  standard_cfg.log_path =
      (std::filesystem::path(record.out_dir) / "train-log-standard.jsonl").string();
  phase(record, "train-standard",
        [&] { train_standard(standard_net, data.train, nullptr, standard_cfg); });
  record.artifacts.push_back("train-log-standard.jsonl");

  Network robust_net =
      Network::build(cfg.network.dims, acts, derive_seed(cfg.seed, "init-adversarial"));
  TrainConfig robust_cfg = to_train_config(cfg.training);
  robust_cfg.seed = derive_seed(cfg.seed, "train-adversarial");
  robust_cfg.log_path =
      (std::filesystem::path(record.out_dir) / "train-log-adversarial.jsonl").string();
  phase(record, "train-adversarial",
        [&] { train_adversarial(robust_net, data.train, nullptr, train_attack, robust_cfg); });
  record.artifacts.push_back("train-log-adversarial.jsonl");

  phase(record, "reports", [&] {
    save_checkpoint(standard_net,
                    (std::filesystem::path(record.out_dir) / "standard.ckpt").string(),
                    Provenance::standard, cfg.seed);
    record.artifacts.push_back("standard.ckpt");
    save_checkpoint(robust_net,
                    (std::filesystem::path(record.out_dir) / "adversarial.ckpt").string(),
                    Provenance::adversarial, cfg.seed);
    record.artifacts.push_back("adversarial.ckpt");

    const AccuracyRecord std_acc = evaluate(standard_net, data.test, &eval_attack, "Acc");
    const AccuracyRecord adv_acc = evaluate(robust_net, data.test, &eval_attack, "Acc*");
    const json doc = {{"standard", accuracy_json(std_acc)},
                      {"adversarial", accuracy_json(adv_acc)}};
    write_artifact(record, "train_report.json", doc.dump(2) + "\n");
    record.summary["clean_standard"] = std_acc.clean_acc;
    record.summary["adv_standard"] = std_acc.adversarial.at("pgd");
    record.summary["clean_adversarial"] = adv_acc.clean_acc;
    record.summary["adv_adversarial"] = adv_acc.adversarial.at("pgd");
  });
}

void run_attack_eval(const ExperimentConfig& cfg, RunRecord& record, const SplitData& data) {
  const Network net = load_required_checkpoint(cfg, "attack-eval");
  phase(record, "attack-eval", [&] {
    json attacks = json::array();
    std::string csv = "attack,epsilon,step_size,iterations,random_start,accuracy\n";
    const double clean = clean_accuracy(net, data.test);
    record.summary["clean"] = clean;
    {
      char line[128];
      std::snprintf(line, sizeof(line), "clean,0,0,0,false,%.2f\n", clean);
      csv += line;
    }
    for (std::size_t i = 0; i < cfg.eval_attacks.size(); ++i) {
      const AttackConfig attack = eval_attack_at(cfg, i);
      const double acc = adversarial_accuracy(net, data.test, attack);
      attacks.push_back({{"epsilon", attack.epsilon},
                         {"step_size", attack.step_size},
                         {"iterations", attack.iterations},
                         {"random_start", attack.random_start},
                         {"accuracy", acc}});
      char line[128];
      std::snprintf(line, sizeof(line), "pgd,%g,%g,%zu,%s,%.2f\n", attack.epsilon,
                    attack.step_size, attack.iterations, attack.random_start ? "true" : "false",
                    acc);
      csv += line;
      record.summary["pgd_" + std::to_string(i)] = acc;
    }
    const json doc = {{"clean", clean}, {"attacks", attacks}};
    write_artifact(record, "attack_eval.json", doc.dump(2) + "\n");
    write_artifact(record, "attack_eval.csv", csv);
  });
}

void run_diagnostics(const ExperimentConfig& cfg, RunRecord& record, const SplitData& data) {
  const Network net = load_required_checkpoint(cfg, "diagnostics");
  check_split(cfg, net.depth());
  const std::size_t a = cfg.split;

  std::vector<ProbeHead> probes = phase(record, "probes", [&] {
    std::vector<ProbeHead> fitted;
    for (std::size_t j = a; j <= net.depth(); ++j) {
      fitted.push_back(train_probe(net, j, data.train.features, data.train.labels,
                                   data.train.num_classes, ProbeConfig{},
                                   derive_seed(cfg.seed, "probe", j)));
    }
    return fitted;
  });

  phase(record, "diagnostics", [&] {
    EdgeConfig mi = to_edge_config(cfg.mi);
    mi.seed = derive_seed(cfg.seed, "diagnostics-mi");
    const AssumptionDiagnostics diag = a2_diagnostic(
        net, a, probes, data.test, eval_attack_at(cfg, 0), mi, cfg.mi.bandwidth_scales);
    write_artifact(record, "diagnostics.csv", diagnostics_csv(diag));
    write_artifact(record, "diagnostics.json", diagnostics_json(diag));
    std::map<std::size_t, double> rho;
    for (const LayerA2& row : diag.layers) {
      rho[row.layer] = row.rho_hat;
      record.summary["rho_" + std::to_string(row.layer)] = row.rho_hat;
    }
    write_artifact(record, "plot_rho.csv", plot_rho_csv(rho));
  });
}

void run_rho_learn(const ExperimentConfig& cfg, RunRecord& record, const SplitData& data) {
  const std::vector<Activation> acts = parse_activations(cfg.network);
  check_split(cfg, cfg.network.dims.size() - 1);

  RhoLearningConfig rho_cfg;
  rho_cfg.trials = cfg.algorithm.trials;
  rho_cfg.max_epochs = cfg.algorithm.max_epochs;
  rho_cfg.tolerance = cfg.algorithm.tolerance;
  rho_cfg.split = cfg.split;
  rho_cfg.train = to_train_config(cfg.training);
  rho_cfg.train.log_path = (std::filesystem::path(record.out_dir) / "train-log").string();
  rho_cfg.finetune = to_train_config(cfg.training);
  rho_cfg.finetune.epochs = 1;
  rho_cfg.finetune.learning_rate = cfg.algorithm.finetune_learning_rate;
  rho_cfg.finetune.lr_decay_epochs = {};
  rho_cfg.train_attack = to_attack_config(cfg.train_attack);
  rho_cfg.eval_attack = to_attack_config(cfg.eval_attacks.at(0));
  rho_cfg.mi = to_edge_config(cfg.mi);
  rho_cfg.bandwidth_scales = cfg.mi.bandwidth_scales;
  rho_cfg.seed = cfg.seed;

  const Algorithm1Result result = phase(record, "algorithm1", [&] {
    return algorithm1(cfg.network.dims, acts, data.train, data.test, rho_cfg);
  });
  for (const TrialTrace& trace : result.report.trials) {
    record.artifacts.push_back("train-log-trial" + std::to_string(trace.trial) + ".jsonl");
  }
  record.artifacts.push_back("train-log-standard.jsonl");
  record.artifacts.push_back("train-log-adversarial.jsonl");

  phase(record, "reports", [&] {
    save_checkpoint(result.standard_net,
                    (std::filesystem::path(record.out_dir) / "standard.ckpt").string(),
                    Provenance::standard, cfg.seed);
    record.artifacts.push_back("standard.ckpt");
    save_checkpoint(result.robust_net,
                    (std::filesystem::path(record.out_dir) / "adversarial.ckpt").string(),
                    Provenance::adversarial, cfg.seed);
    record.artifacts.push_back("adversarial.ckpt");

    write_artifact(record, "rho_report.json", rho_report_json(result.report));
    write_artifact(record, "table.csv",
                   table_csv_header() +
                       table_csv_row(network_name(cfg.network.dims), cfg.dataset.kind,
                                     cfg.network.dims.size() - 1, result.report));
    write_artifact(record, "plot_rho.csv", plot_rho_csv(result.report.rho));

    record.summary["acc_standard"] = result.report.acc_standard;
    record.summary["acc_star"] = result.report.acc_star;
    record.summary["acc_sr"] = result.report.acc_sr;
    record.summary["acc_tilde"] = result.report.acc_tilde;
    record.summary["gap"] = result.report.acc_star - result.report.acc_standard;
    record.summary["mean_epochs"] = result.report.mean_epochs;
    record.summary["any_converged"] = result.report.any_converged ? 1.0 : 0.0;
    for (const auto& [layer, value] : result.report.rho) {
      record.summary["rho_" + std::to_string(layer)] = value;
    }
  });
}

void run_lambda_solve(const ExperimentConfig& cfg, RunRecord& record, const SplitData& data) {
  Network net;
  if (!cfg.network.checkpoint.empty()) {
    net = load_checkpoint(cfg.network.checkpoint).network;
  } else {
    const std::vector<Activation> acts = parse_activations(cfg.network);
    net = Network::build(cfg.network.dims, acts, derive_seed(cfg.seed, "init-adversarial"));
    TrainConfig train_cfg = to_train_config(cfg.training);
    train_cfg.seed = derive_seed(cfg.seed, "train-adversarial");
    const AttackConfig train_attack = to_attack_config(cfg.train_attack);
    phase(record, "train-adversarial",
          [&] { train_adversarial(net, data.train, nullptr, train_attack, train_cfg); });
  }
  check_split(cfg, net.depth());

  phase(record, "algorithm2", [&] {
    LambdaConfig lambda_cfg;
    lambda_cfg.split = cfg.split;
    lambda_cfg.ridge = cfg.algorithm.lambda_ridge;
    lambda_cfg.batch_size = cfg.algorithm.lambda_batch;
    lambda_cfg.random_draws = cfg.algorithm.lambda_draws;
    lambda_cfg.seed = cfg.seed;
    const LambdaSolution solution = algorithm2(net, data.test, lambda_cfg);
    write_artifact(record, "lambda.json", lambda_solution_json(solution));
    record.summary["acc_tilde"] = solution.acc_tilde;
    record.summary["acc_rand"] = solution.acc_rand;
    record.summary["ridge_used"] = solution.ridge_used;
  });
}

void run_bounds(const ExperimentConfig& cfg, RunRecord& record, const SplitData& data) {
  Network star;
  if (!cfg.network.checkpoint.empty()) {
    star = load_checkpoint(cfg.network.checkpoint).network;
  } else {
    const std::vector<Activation> acts = parse_activations(cfg.network);
    star = Network::build(cfg.network.dims, acts, derive_seed(cfg.seed, "init-standard"));
    TrainConfig train_cfg = to_train_config(cfg.training);
    train_cfg.seed = derive_seed(cfg.seed, "train-standard");
    phase(record, "train-standard", [&] { train_standard(star, data.train, nullptr, train_cfg); });
  }
  check_split(cfg, star.depth());
  const std::size_t a = cfg.split;
  const std::size_t n = star.depth();
  const std::vector<double> flat = star.flat_params(a + 1, n);

  phase(record, "bounds", [&] {
    auto perturbed = [&](std::size_t index) {
      RandomStream rng(derive_seed(cfg.seed, "bound-perturbation", index));
      std::vector<double> noise(flat.size());
      for (double& v : noise) v = rng.normal();
      const double scale = cfg.algorithm.bound_delta_norm / l2_norm(noise);
      std::vector<double> moved(flat.size());
      for (std::size_t i = 0; i < flat.size(); ++i) moved[i] = flat[i] + scale * noise[i];
      Network tilde = star;
      tilde.set_flat_params(a + 1, n, moved);
      return tilde;
    };

    PowerIterationConfig power;
    power.max_iterations = cfg.algorithm.power_iterations;
    power.hvp_epsilon = cfg.algorithm.hvp_epsilon;
    power.seed = cfg.seed;

    const Network first = perturbed(0);
    const HessianBoundReport hessian = hessian_bound(star, first, a, data.train, power);
    const LipschitzBoundReport lipschitz = lipschitz_bound(star, first, a, data.test);
    const double base_loss = mean_loss(star, data.train);
    const Tensor base_out = star.forward(data.test.features);

    json loss_diffs = json::array();
    json max_devs = json::array();
    std::size_t hessian_ok = 0;
    std::size_t hessian_ok_slack = 0;
    std::size_t lipschitz_ok = 0;
    for (std::size_t i = 0; i < cfg.algorithm.bound_perturbations; ++i) {
      const Network tilde = perturbed(i);
      const double diff = std::abs(mean_loss(tilde, data.train) - base_loss);
      loss_diffs.push_back(diff);
      if (hessian.bound >= diff) ++hessian_ok;
      if (1.1 * hessian.bound >= diff) ++hessian_ok_slack;

      const Tensor moved_out = tilde.forward(data.test.features);
      double max_dev = 0.0;
      for (std::size_t r = 0; r < moved_out.rows(); ++r) {
        double sq = 0.0;
        for (std::size_t c = 0; c < moved_out.cols(); ++c) {
          const double d = moved_out.at(r, c) - base_out.at(r, c);
          sq += d * d;
        }
        max_dev = std::max(max_dev, std::sqrt(sq));
      }
      max_devs.push_back(max_dev);
      if (lipschitz.bound >= max_dev) ++lipschitz_ok;
    }

    const json doc = {
        {"split", a},
        {"delta_norm", cfg.algorithm.bound_delta_norm},
        {"perturbations", cfg.algorithm.bound_perturbations},
        {"stationarity", hessian.stationarity},
        {"stationary", hessian.stationary},
        {"power_converged", hessian.power_converged},
        {"lambda_max", hessian.lambda_max},
        {"hessian",
         {{"bound", hessian.bound},
          {"loss_diffs", loss_diffs},
          {"dominated", hessian_ok},
          {"dominated_with_slack", hessian_ok_slack},
          {"slack", 1.1}}},
        {"lipschitz",
         {{"bound", lipschitz.bound},
          {"c_x", lipschitz.c_x},
          {"c_sigma", lipschitz.c_sigma},
          {"head_norm_product", lipschitz.head_norm_product},
          {"max_deviations", max_devs},
          {"dominated", lipschitz_ok}}},
    };
    write_artifact(record, "bounds.json", doc.dump(2) + "\n");
    record.summary["lambda_max"] = hessian.lambda_max;
    record.summary["hessian_bound"] = hessian.bound;
    record.summary["hessian_dominated"] = static_cast<double>(hessian_ok);
    record.summary["hessian_dominated_with_slack"] = static_cast<double>(hessian_ok_slack);
    record.summary["lipschitz_bound"] = lipschitz.bound;
    record.summary["lipschitz_dominated"] = static_cast<double>(lipschitz_ok);
    record.summary["stationarity"] = hessian.stationarity;
  });
}

}  // namespace

RunRecord run(const ExperimentConfig& cfg, const std::string& mode) {
  RunRecord record;
  record.mode = mode;
  record.hash = config_hash(cfg);
  record.out_dir = (std::filesystem::path(cfg.output_dir) / record.hash).string();
  std::filesystem::create_directories(record.out_dir);

  write_artifact(record, "config.json", serialize_config(cfg));

  const SplitData data = phase(record, "dataset", [&] { return make_datasets(cfg); });

  if (mode == "train") {
    run_train(cfg, record, data);
  } else if (mode == "attack-eval") {
    run_attack_eval(cfg, record, data);
  } else if (mode == "diagnostics") {
    run_diagnostics(cfg, record, data);
  } else if (mode == "rho-learn") {
    run_rho_learn(cfg, record, data);
  } else if (mode == "lambda-solve") {
    run_lambda_solve(cfg, record, data);
  } else if (mode == "bounds") {
    run_bounds(cfg, record, data);
  } else {
    throw std::invalid_argument(
        "unknown mode '" + mode +
        "' (expected train, attack-eval, diagnostics, rho-learn, lambda-solve, or bounds)");
  }

  json timings = json::object();
  for (const auto& [name, ms] : record.timings_ms) timings[name] = ms;
  json summary = json::object();
  for (const auto& [name, value] : record.summary) summary[name] = value;
  const json doc = {
      {"mode", record.mode},     {"config_hash", record.hash}, {"out_dir", record.out_dir},
      {"artifacts", record.artifacts}, {"timings_ms", timings}, {"summary", summary},
  };
  const std::filesystem::path path = std::filesystem::path(record.out_dir) / "run_record.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << "\n";
  record.artifacts.push_back("run_record.json");
  return record;
}

RunRecord run(const ExperimentConfig& cfg) { return run(cfg, cfg.algorithm.mode); }

}  // namespace semirobust
