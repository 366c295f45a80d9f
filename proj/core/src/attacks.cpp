#include "semirobust/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "semirobust/rng.hpp"

namespace semirobust {

namespace {

double sign_of(double v) {
  if (v > 0.0) return 1.0;
  if (v < 0.0) return -1.0;
  return 0.0;
}

void validate(const AttackConfig& cfg, const Tensor& x, const std::vector<int>& labels) {
  if (cfg.epsilon < 0.0) throw std::invalid_argument("attack epsilon must be >= 0");
  if (cfg.step_size < 0.0) throw std::invalid_argument("attack step size must be >= 0");
  if (cfg.clamp_inputs && cfg.clamp_min >= cfg.clamp_max) {
    throw std::invalid_argument("attack clamp range is empty");
  }
  if (x.rank() != 2) {
    throw std::invalid_argument("attack expects a [batch, features] input, got " +
                                x.shape_string());
  }
  if (labels.size() != x.rows()) {
    throw std::invalid_argument("attack labels must be one value per sample");
  }
}

// clamp delta to the budget, then keep x + delta inside the input range
void project(Tensor& delta, const Tensor& x, const AttackConfig& cfg) {
  for (std::size_t i = 0; i < delta.size(); ++i) {
    delta[i] = std::clamp(delta[i], -cfg.epsilon, cfg.epsilon);
    if (cfg.clamp_inputs) {
      delta[i] = std::clamp(x[i] + delta[i], cfg.clamp_min, cfg.clamp_max) - x[i];
    }
  }
}

struct ObjectiveEval {
  std::vector<double> per_sample;
  Tensor input_grad;  // empty when gradients were not requested
};

// per-sample objective and (optionally) its input gradient for one batch
using ObjectiveFn = std::function<ObjectiveEval(const Tensor& perturbed, bool want_grad)>;

// per-sample classification loss as picked by the spec: cross-entropy on the
// logits, or the negated +-1 label/score product for single-output networks
ObjectiveFn loss_objective(const Network& net, const LossSpec& loss,
                           const std::vector<int>& labels) {
  loss.validate();
  if (loss.kind == LossKind::correlation_binary && net.output_dim() != 1) {
    throw std::invalid_argument("correlation_binary loss needs a single-output network");
  }
  return [&net, loss, labels](const Tensor& perturbed, bool want_grad) {
    Tape tape;
    Network::Traced traced = net.trace(tape, perturbed, want_grad, false);
    Tape::NodeRef losses;
    if (loss.kind == LossKind::cross_entropy_multiclass) {
      losses = tape.softmax_cross_entropy(traced.output(), labels);
    } else {
      losses = tape.scale(
          tape.margin_correlation(traced.output(), labels, CorrelationKind::raw_binary), -1.0);
    }
    ObjectiveEval eval;
    eval.per_sample = tape.value(losses).data();
    if (want_grad) {
      tape.backward(tape.sum_all(losses));
      eval.input_grad = tape.grad(traced.input);
    }
    return eval;
  };
}

ObjectiveFn correlation_objective(const Network& net, const ProbeHead& probe,
                                  const std::vector<int>& labels, CorrelationKind kind) {
  return [&net, &probe, labels, kind](const Tensor& perturbed, bool want_grad) {
    Tape tape;
    Tape::NodeRef scores;
    Tape::NodeRef input;
    if (probe.layer == 0) {
      input = tape.input(perturbed, want_grad);
      scores = trace_probe(tape, net, probe, input);
    } else {
      Network::Traced traced = net.trace(tape, perturbed, want_grad, false);
      input = traced.input;
      scores = trace_probe(tape, net, probe, traced.layer_out[probe.layer - 1]);
    }
    Tape::NodeRef corr = tape.margin_correlation(scores, labels, kind);
    ObjectiveEval eval;
    eval.per_sample = tape.value(corr).data();
    if (want_grad) {
      tape.backward(tape.sum_all(corr));
      eval.input_grad = tape.grad(input);
    }
    return eval;
  };
}

// Shared iterated-sign-step driver. `maximize` picks the step direction and
// the per-sample ranking; ties go to the later candidate so longer runs
// refine rather than freeze. When `start_is_candidate` is false the starting
// point never enters the ranking — only post-step iterates compete.
AttackResult run_iterated(const ObjectiveFn& objective, const Tensor& x, const AttackConfig& cfg,
                          Tensor start, bool start_is_candidate, bool maximize,
                          const std::vector<Tensor>& extra_candidates) {
  const std::size_t m = x.rows();
  const double worst =
      maximize ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();

  AttackResult result;
  result.delta = start;  // fallback when the candidate set is empty
  result.objective.assign(m, worst);
  bool any_candidate = false;

  auto consider = [&](const Tensor& delta, const std::vector<double>& obj) {
    any_candidate = true;
    for (std::size_t r = 0; r < m; ++r) {
      const bool better = maximize ? obj[r] >= result.objective[r] : obj[r] <= result.objective[r];
      if (better) {
        result.objective[r] = obj[r];
        for (std::size_t c = 0; c < x.cols(); ++c) result.delta.at(r, c) = delta.at(r, c);
      }
    }
  };

  for (Tensor cand : extra_candidates) {
    project(cand, x, cfg);
    consider(cand, objective(x + cand, false).per_sample);
  }

  Tensor delta = std::move(start);
  project(delta, x, cfg);
  const double dir = maximize ? 1.0 : -1.0;
  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    ObjectiveEval eval = objective(x + delta, true);
    if (t > 1 || start_is_candidate) consider(delta, eval.per_sample);
    for (std::size_t i = 0; i < delta.size(); ++i) {
      delta[i] += dir * cfg.step_size * sign_of(eval.input_grad[i]);
    }
    project(delta, x, cfg);
  }
  consider(delta, objective(x + delta, false).per_sample);

  if (!any_candidate) {
    // unreachable: the final evaluation above always registers one
    throw std::runtime_error("attack produced no candidate points");
  }
  result.perturbed = x + result.delta;
  return result;
}

}  // namespace

AttackResult fgsm(const Network& net, const LossSpec& loss, const Tensor& x,
                  const std::vector<int>& labels, const AttackConfig& config) {
  validate(config, x, labels);
  ObjectiveFn objective = loss_objective(net, loss, labels);
  ObjectiveEval eval = objective(x, true);
  Tensor delta({x.rows(), x.cols()});
  for (std::size_t i = 0; i < delta.size(); ++i) {
    delta[i] = config.epsilon * sign_of(eval.input_grad[i]);
  }
  project(delta, x, config);
  AttackResult result;
  result.delta = std::move(delta);
  result.perturbed = x + result.delta;
  result.objective = objective(result.perturbed, false).per_sample;
  result.kind = "fgsm";
  result.seed = config.seed;
  return result;
}

AttackResult pgd(const Network& net, const LossSpec& loss, const Tensor& x,
                 const std::vector<int>& labels, const AttackConfig& config) {
  validate(config, x, labels);
  Tensor start({x.rows(), x.cols()});
  if (config.random_start && config.epsilon > 0.0) {
    RandomStream rng(derive_seed(config.seed, "attack-start"));
    for (std::size_t i = 0; i < start.size(); ++i) {
      start[i] = rng.uniform(-config.epsilon, config.epsilon);
    }
  }
  AttackResult result = run_iterated(loss_objective(net, loss, labels), x, config,
                                     std::move(start),
                                     /*start_is_candidate=*/false, /*maximize=*/true, {});
  result.kind = "pgd";
  result.seed = config.seed;
  return result;
}

AttackResult correlation_attack(const Network& net, const ProbeHead& probe, const Tensor& x,
                                const std::vector<int>& labels, CorrelationKind kind,
                                const AttackConfig& config, const Tensor* warm_start) {
  validate(config, x, labels);
  ObjectiveFn objective = correlation_objective(net, probe, labels, kind);

  std::vector<Tensor> extras;
  extras.emplace_back(std::vector<std::size_t>{x.rows(), x.cols()});  // zero perturbation
  Tensor start = extras.front();
  if (warm_start != nullptr) {
    if (!warm_start->same_shape(x)) {
      throw std::invalid_argument("correlation_attack warm start shape mismatch: " +
                                  warm_start->shape_string() + " vs " + x.shape_string());
    }
    start = *warm_start;
  } else if (config.random_start && config.epsilon > 0.0) {
    RandomStream rng(derive_seed(config.seed, "attack-start"));
    for (std::size_t i = 0; i < start.size(); ++i) {
      start[i] = rng.uniform(-config.epsilon, config.epsilon);
    }
  }
  AttackResult result = run_iterated(objective, x, config, std::move(start),
                                     /*start_is_candidate=*/true, /*maximize=*/false, extras);
  result.kind = "correlation";
  result.seed = config.seed;
  return result;
}

std::vector<double> correlation_values(const Network& net, const ProbeHead& probe,
                                       const Tensor& x, const std::vector<int>& labels,
                                       CorrelationKind kind) {
  if (x.rank() != 2 || labels.size() != x.rows()) {
    throw std::invalid_argument("correlation_values expects [batch, features] inputs with one "
                                "label per sample");
  }
  return correlation_objective(net, probe, labels, kind)(x, false).per_sample;
}

}  // namespace semirobust
