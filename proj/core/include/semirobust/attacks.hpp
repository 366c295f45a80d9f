#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semirobust/network.hpp"
#include "semirobust/probe.hpp"
#include "semirobust/tape.hpp"
#include "semirobust/tensor.hpp"

namespace semirobust {

enum class AttackNorm { linf };

struct AttackConfig {
  double epsilon = 8.0 / 255.0;  // perturbation budget, >= 0
  double step_size = 2.0 / 255.0;
  std::size_t iterations = 10;
  AttackNorm norm = AttackNorm::linf;
  bool random_start = true;
  bool clamp_inputs = false;  // keep perturbed inputs inside [clamp_min, clamp_max]
  double clamp_min = 0.0;
  double clamp_max = 1.0;
  std::uint64_t seed = 0;
};

struct AttackResult {
  Tensor perturbed;
  Tensor delta;
  std::vector<double> objective;  // per-sample objective at the returned point
  std::string kind;
  std::uint64_t seed = 0;
};

// one signed gradient step of size epsilon on the classification loss;
// labels are class ids (+-1 for the binary correlation loss)
AttackResult fgsm(const Network& net, const LossSpec& loss, const Tensor& x,
                  const std::vector<int>& labels, const AttackConfig& config);

// iterated signed gradient ascent on the classification loss; each sample
// keeps the best point among its post-step iterates (later iterates win ties)
AttackResult pgd(const Network& net, const LossSpec& loss, const Tensor& x,
                 const std::vector<int>& labels, const AttackConfig& config);

// iterated signed gradient descent on the per-sample margin correlation read
// out by `probe`; the zero perturbation and the (projected) warm start always
// join the candidate set, so the result never scores above either
AttackResult correlation_attack(const Network& net, const ProbeHead& probe, const Tensor& x,
                                const std::vector<int>& labels, CorrelationKind kind,
                                const AttackConfig& config, const Tensor* warm_start = nullptr);

// per-sample probe/label correlation at the given inputs (no attack)
std::vector<double> correlation_values(const Network& net, const ProbeHead& probe,
                                       const Tensor& x, const std::vector<int>& labels,
                                       CorrelationKind kind);

}  // namespace semirobust
