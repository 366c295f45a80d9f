#include "semirobust/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "semirobust/rng.hpp"
#include "semirobust/tape.hpp"

namespace semirobust {

namespace {

double mean_of(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

// class-id labels for multi-column probes, +-1 labels for single-column ones
std::vector<int> labels_for_probe(const Network& net, const ProbeHead& probe,
                                  const Dataset& data) {
  if (probe_out_dim(net, probe) == 1) return pm_one_labels(data);
  return data.labels;
}

std::string probe_tag(const ProbeHead& probe) {
  return (probe.identity ? "identity@" : "trained@") + std::to_string(probe.layer);
}

// per-sample correlation from precomputed scores
std::vector<double> correlation_from_scores(const Tensor& scores, const std::vector<int>& labels,
                                            CorrelationKind kind) {
  Tape tape;
  Tape::NodeRef node = tape.margin_correlation(tape.input(scores), labels, kind);
  return tape.value(node).data();
}

void check_split_pair(const Network& net_star, const Network& net_tilde, std::size_t a,
                      const char* ctx) {
  if (net_star.depth() != net_tilde.depth() || net_star.dims() != net_tilde.dims()) {
    throw std::invalid_argument(std::string(ctx) + ": networks differ in architecture");
  }
  if (a < 1 || a >= net_star.depth()) {
    throw std::invalid_argument(std::string(ctx) + ": split " + std::to_string(a) +
                                " must satisfy 1 <= a < depth " +
                                std::to_string(net_star.depth()));
  }
  for (std::size_t j = 1; j <= a; ++j) {
    const DenseLayer& ls = net_star.layer(j);
    const DenseLayer& lt = net_tilde.layer(j);
    for (std::size_t i = 0; i < ls.weights.size(); ++i) {
      if (ls.weights[i] != lt.weights[i]) {
        throw std::invalid_argument(std::string(ctx) + ": head weights differ at layer " +
                                    std::to_string(j));
      }
    }
    for (std::size_t i = 0; i < ls.bias.size(); ++i) {
      if (ls.bias[i] != lt.bias[i]) {
        throw std::invalid_argument(std::string(ctx) + ": head biases differ at layer " +
                                    std::to_string(j));
      }
    }
  }
}

double activation_lipschitz(Activation act) {
  switch (act) {
    case Activation::relu:
    case Activation::identity:
    case Activation::tanh:
      return 1.0;  // all three also map 0 to 0, which the head peeling needs
  }
  throw std::invalid_argument("no Lipschitz constant known for this activation");
}

// adversarial inputs + all layer activations under the classification attack
LayerActivations attacked_activations(const Network& net, const Dataset& data,
                                      const AttackConfig& attack) {
  AttackResult result = pgd(net, LossSpec{}, data.features, data.labels, attack);
  LayerActivations acts = forward_collect(net, result.perturbed, true);
  return acts;
}

EdgeConfig layer_pair_config(const EdgeConfig& base, std::size_t j) {
  EdgeConfig cfg = base;
  cfg.seed = derive_seed(base.seed, "layer-pair", j);
  return cfg;
}

}  // namespace

SemirobustnessEstimate estimate_gamma(const Network& net, std::size_t j, const ProbeHead& probe,
                                      const Dataset& data, CorrelationKind kind,
                                      const AttackConfig& attack, const Tensor* warm_start) {
  if (probe.layer != j) {
    throw std::invalid_argument("estimate_gamma: probe attaches at layer " +
                                std::to_string(probe.layer) + ", not requested layer " +
                                std::to_string(j));
  }
  const std::vector<int> labels = labels_for_probe(net, probe, data);

  SemirobustnessEstimate est;
  est.layer = j;
  est.probe_id = probe_tag(probe);
  est.attack = attack;
  est.sample_count = data.size();
  est.clean_correlation =
      mean_of(correlation_values(net, probe, data.features, labels, kind));

  AttackResult result =
      correlation_attack(net, probe, data.features, labels, kind, attack, warm_start);
  est.gamma_hat = mean_of(result.objective);
  est.delta = std::move(result.delta);
  return est;
}

Theorem1Report check_theorem1(const Network& net, std::size_t j, const ProbeHead& probe,
                              const Dataset& data, CorrelationKind kind,
                              const AttackConfig& attack) {
  if (j < 1 || j > net.depth()) {
    throw std::invalid_argument("check_theorem1: layer " + std::to_string(j) +
                                " outside 1.." + std::to_string(net.depth()));
  }
  Theorem1Report report;
  report.layer = j;

  SemirobustnessEstimate at_j = estimate_gamma(net, j, probe, data, kind, attack);
  report.gamma_j = at_j.gamma_hat;
  const Tensor x_adv = data.features + at_j.delta;
  const std::vector<int> labels = labels_for_probe(net, probe, data);

  // same scores whether the attachment layer is reached through the
  // subnetwork view or through a full forward pass truncated at j
  const std::vector<double> via_view =
      correlation_from_scores(probe_scores(net, probe, x_adv), labels, kind);
  const LayerActivations full = forward_collect(net, x_adv, true);
  const Tensor& h_j = probe.layer == 0 ? full.input : full.layers[probe.layer - 1];
  const std::vector<double> via_full =
      correlation_from_scores(apply_probe(net, probe, h_j), labels, kind);
  for (std::size_t i = 0; i < via_view.size(); ++i) {
    report.view_vs_full_max_abs =
        std::max(report.view_vs_full_max_abs, std::abs(via_view[i] - via_full[i]));
  }

  // the probe re-attached one layer lower must reproduce the layer-j
  // correlations on the exact same perturbations
  const ProbeHead peeled = peel_probe(net, probe);
  const std::vector<double> lower =
      correlation_values(net, peeled, x_adv, labels, kind);
  for (std::size_t i = 0; i < lower.size(); ++i) {
    report.construction_max_abs =
        std::max(report.construction_max_abs, std::abs(lower[i] - via_view[i]));
  }

  // a fresh search at j-1, warm-started from the layer-j perturbations, can
  // only lower the estimate
  SemirobustnessEstimate below =
      estimate_gamma(net, j - 1, peeled, data, kind, attack, &at_j.delta);
  report.gamma_j_minus_1 = below.gamma_hat;
  report.reattack_dominates = below.gamma_hat <= at_j.gamma_hat + 1e-9;
  return report;
}

std::vector<LayerRho> a1_diagnostic(const Network& net, std::size_t a, const Dataset& data,
                                    const AttackConfig& attack, const EdgeConfig& mi_cfg,
                                    const std::vector<double>& bandwidth_scales) {
  if (a < 1 || a >= net.depth()) {
    throw std::invalid_argument("a1_diagnostic: split " + std::to_string(a) +
                                " must satisfy 1 <= a < depth");
  }
  const LayerActivations acts = attacked_activations(net, data, attack);
  std::vector<LayerRho> layers;
  for (std::size_t j = a + 1; j <= net.depth(); ++j) {
    const ConditionalMIEstimate cond =
        conditional_mi(acts.layers[j - 2], acts.layers[j - 1], data.labels, bandwidth_scales,
                       layer_pair_config(mi_cfg, j));
    LayerRho row;
    row.layer = j;
    row.rho_hat = cond.total_nats;
    row.raw_rho = cond.raw_total_nats;
    row.warnings = cond.warnings;
    layers.push_back(std::move(row));
  }
  return layers;
}

AssumptionDiagnostics a2_diagnostic(const Network& net, std::size_t a,
                                    const std::vector<ProbeHead>& probes, const Dataset& data,
                                    const AttackConfig& attack, const EdgeConfig& mi_cfg,
                                    const std::vector<double>& bandwidth_scales) {
  if (a < 1 || a >= net.depth()) {
    throw std::invalid_argument("a2_diagnostic: split " + std::to_string(a) +
                                " must satisfy 1 <= a < depth");
  }
  const std::size_t expected = net.depth() - a + 1;
  if (probes.size() != expected) {
    throw std::invalid_argument("a2_diagnostic: needs one probe per layer " +
                                std::to_string(a) + ".." + std::to_string(net.depth()));
  }
  for (std::size_t i = 0; i < probes.size(); ++i) {
    if (probes[i].layer != a + i) {
      throw std::invalid_argument("a2_diagnostic: probe " + std::to_string(i) +
                                  " attaches at layer " + std::to_string(probes[i].layer) +
                                  ", expected " + std::to_string(a + i));
    }
  }

  const LayerActivations acts = attacked_activations(net, data, attack);
  AssumptionDiagnostics diag;
  diag.split = a;

  // per-probe correlations on the shared adversarial inputs
  std::vector<std::vector<double>> corr(probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const std::vector<int> labels = labels_for_probe(net, probes[i], data);
    const Tensor scores = apply_probe(net, probes[i], acts.layers[probes[i].layer - 1]);
    corr[i] = correlation_from_scores(scores, labels, CorrelationKind::normalized_margin);
  }

  for (std::size_t j = a + 1; j <= net.depth(); ++j) {
    const ConditionalMIEstimate cond =
        conditional_mi(acts.layers[j - 2], acts.layers[j - 1], data.labels, bandwidth_scales,
                       layer_pair_config(mi_cfg, j));
    LayerA2 row;
    row.layer = j;
    row.rho_hat = cond.total_nats;
    row.raw_rho = cond.raw_total_nats;
    row.u_hat = cond.ratio_expectation;
    const std::vector<double>& upper = corr[j - a];
    const std::vector<double>& lower = corr[j - a - 1];
    double gap = 0.0;
    for (std::size_t i = 0; i < upper.size(); ++i) gap += upper[i] - lower[i];
    row.correlation_gap = gap / static_cast<double>(upper.size());
    row.a2_satisfied = row.correlation_gap >= 1.0 + row.u_hat;
    for (const std::string& w : cond.warnings) {
      diag.warnings.push_back("layer " + std::to_string(j) + ": " + w);
    }
    diag.layers.push_back(std::move(row));
  }
  return diag;
}

std::string diagnostics_csv(const AssumptionDiagnostics& diag) {
  std::ostringstream out;
  out << "layer,rho_hat,raw_rho,U_hat,corr_gap,a2_satisfied\n";
  out.precision(6);
  out << std::fixed;
  for (const LayerA2& row : diag.layers) {
    out << row.layer << ',' << row.rho_hat << ',' << row.raw_rho << ',' << row.u_hat << ','
        << row.correlation_gap << ',' << (row.a2_satisfied ? "true" : "false") << '\n';
  }
  return out.str();
}

std::string diagnostics_json(const AssumptionDiagnostics& diag) {
  nlohmann::json layers = nlohmann::json::object();
  for (const LayerA2& row : diag.layers) {
    layers[std::to_string(row.layer)] = {
        {"rho_hat", row.rho_hat},           {"raw_rho", row.raw_rho},
        {"U_hat", row.u_hat},               {"corr_gap", row.correlation_gap},
        {"a2_satisfied", row.a2_satisfied},
    };
  }
  nlohmann::json doc = {
      {"split", diag.split},
      {"layers", layers},
      {"warnings", diag.warnings},
  };
  return doc.dump(2) + "\n";
}

double mean_loss(const Network& net, const Dataset& data) {
  Tape tape;
  Network::Traced traced = net.trace(tape, data.features, false, false);
  Tape::NodeRef loss = tape.mean_all(tape.softmax_cross_entropy(traced.output(), data.labels));
  return tape.value(loss)[0];
}

double performance_diff(const Network& net_star, const Network& net_tilde, std::size_t a,
                        const Dataset& data) {
  check_split_pair(net_star, net_tilde, a, "performance_diff");
  return mean_loss(net_star, data) - mean_loss(net_tilde, data);
}

std::vector<double> loss_gradient(const Network& net, const Dataset& data, std::size_t first,
                                  std::size_t last) {
  Network work = net;
  work.unfreeze_all();
  Tape tape;
  Network::Traced traced = work.trace(tape, data.features, false, true);
  Tape::NodeRef loss = tape.mean_all(tape.softmax_cross_entropy(traced.output(), data.labels));
  tape.backward(loss);
  std::vector<double> grad;
  grad.reserve(work.param_count(first, last));
  for (std::size_t j = first; j <= last; ++j) {
    const Tensor& gw = tape.grad(traced.weights[j - 1]);
    for (std::size_t i = 0; i < gw.size(); ++i) grad.push_back(gw[i]);
    const Tensor& gb = tape.grad(traced.biases[j - 1]);
    for (std::size_t i = 0; i < gb.size(); ++i) grad.push_back(gb[i]);
  }
  return grad;
}

HessianBoundReport hessian_bound(const Network& net_star, const Network& net_tilde, std::size_t a,
                                 const Dataset& data, const PowerIterationConfig& cfg) {
  check_split_pair(net_star, net_tilde, a, "hessian_bound");
  const std::size_t n = net_star.depth();
  const std::vector<double> omega_star = net_star.flat_params(a + 1, n);
  const std::vector<double> omega_tilde = net_tilde.flat_params(a + 1, n);

  std::vector<double> delta(omega_star.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = omega_tilde[i] - omega_star[i];

  HessianBoundReport report;
  report.delta_norm = l2_norm(delta);

  const std::vector<double> full_grad = loss_gradient(net_star, data, 1, n);
  report.stationarity = l2_norm(full_grad) / std::sqrt(static_cast<double>(full_grad.size()));
  report.stationary = report.stationarity <= cfg.stationarity_threshold;

  Network work = net_star;
  GradFn tail_grad = [&work, &data, a, n](const std::vector<double>& omega) {
    work.set_flat_params(a + 1, n, omega);
    return loss_gradient(work, data, a + 1, n);
  };
  VecFn apply = [&tail_grad, &omega_star, &cfg](const std::vector<double>& v) {
    return hvp(tail_grad, omega_star, v, cfg.hvp_epsilon);
  };
  PowerIterationResult power =
      max_eigenvalue(apply, omega_star.size(), static_cast<int>(cfg.max_iterations), cfg.tol,
                     cfg.seed);
  report.lambda_max = power.eigenvalue;
  report.power_converged = power.converged;
  report.iterations = static_cast<std::size_t>(power.iterations);
  report.bound = 0.5 * power.eigenvalue * report.delta_norm * report.delta_norm;
  return report;
}

LipschitzBoundReport lipschitz_bound(const Network& net_star, const Network& net_tilde,
                                     std::size_t a, const Dataset& data) {
  check_split_pair(net_star, net_tilde, a, "lipschitz_bound");
  const std::size_t n = net_star.depth();

  LipschitzBoundReport report;
  for (std::size_t r = 0; r < data.features.rows(); ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < data.features.cols(); ++c) {
      sq += data.features.at(r, c) * data.features.at(r, c);
    }
    report.c_x = std::max(report.c_x, std::sqrt(sq));
  }

  report.c_sigma = 1.0;
  for (std::size_t j = 1; j <= n; ++j) {
    report.c_sigma *= activation_lipschitz(net_star.layer(j).activation);
  }

  report.head_norm_product = 1.0;
  for (std::size_t j = 1; j <= a; ++j) {
    report.head_norm_product *= frobenius_norm(net_star.layer(j).weights);
  }

  const std::vector<double> omega_star = net_star.flat_params(a + 1, n);
  const std::vector<double> omega_tilde = net_tilde.flat_params(a + 1, n);
  std::vector<double> delta(omega_star.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = omega_tilde[i] - omega_star[i];
  report.tail_delta_fro = l2_norm(delta);

  report.bound = report.c_x * report.c_sigma * report.head_norm_product * report.tail_delta_fro;
  return report;
}

}  // namespace semirobust
