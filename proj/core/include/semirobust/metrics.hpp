#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semirobust/attacks.hpp"
#include "semirobust/dataset.hpp"
#include "semirobust/mi.hpp"
#include "semirobust/network.hpp"
#include "semirobust/probe.hpp"
#include "semirobust/second_order.hpp"

namespace semirobust {

struct SemirobustnessEstimate {
  std::size_t layer = 0;
  double gamma_hat = 0.0;           // mean per-sample minimized correlation
  double clean_correlation = 0.0;   // same mean at zero perturbation
  std::string probe_id;
  AttackConfig attack;
  std::size_t sample_count = 0;
  std::string approximation = "first-order";
  Tensor delta;  // per-sample minimizing perturbations (reusable as warm start)
};

// Worst-case label/probe-score correlation under the attack budget; the
// search can only lower the correlation, so gamma_hat <= clean_correlation.
// warm_start seeds the search and joins the candidate set.
SemirobustnessEstimate estimate_gamma(const Network& net, std::size_t j, const ProbeHead& probe,
                                      const Dataset& data, CorrelationKind kind,
                                      const AttackConfig& attack,
                                      const Tensor* warm_start = nullptr);

struct Theorem1Report {
  std::size_t layer = 0;                // j
  double view_vs_full_max_abs = 0.0;    // per-sample correlation gap, view vs truncated forward
  double construction_max_abs = 0.0;    // per-sample gap after re-attaching the probe at j-1
  double gamma_j = 0.0;
  double gamma_j_minus_1 = 0.0;         // fresh search at j-1, warm-started from layer j
  bool reattack_dominates = false;      // gamma_{j-1} <= gamma_j + 1e-9
};

// layer-wise consistency: the probe re-attached one layer lower via the
// network's own layer must reproduce layer-j correlations on the same
// perturbations, and a fresh search below can only do better
Theorem1Report check_theorem1(const Network& net, std::size_t j, const ProbeHead& probe,
                              const Dataset& data, CorrelationKind kind,
                              const AttackConfig& attack);

struct LayerRho {
  std::size_t layer = 0;  // j; measures the (j-1, j) layer pair
  double rho_hat = 0.0;   // prior-weighted class-conditional MI, clamped per class
  double raw_rho = 0.0;   // prior-weighted raw ensemble values
  std::vector<std::string> warnings;
};

// class-conditional dependence between consecutive layer activations under
// attack, for pairs (j-1, j) with j = a+1..n
std::vector<LayerRho> a1_diagnostic(const Network& net, std::size_t a, const Dataset& data,
                                    const AttackConfig& attack, const EdgeConfig& mi_cfg,
                                    const std::vector<double>& bandwidth_scales);

struct LayerA2 {
  std::size_t layer = 0;
  double rho_hat = 0.0;
  double raw_rho = 0.0;
  double u_hat = 0.0;            // histogram ratio-expectation estimate
  double correlation_gap = 0.0;  // mean probe-correlation step from j-1 to j
  bool a2_satisfied = false;     // correlation_gap >= 1 + u_hat
};

struct AssumptionDiagnostics {
  std::size_t split = 0;  // head size a
  std::vector<LayerA2> layers;
  std::vector<std::string> warnings;
};

// joint A1/A2 diagnostic sharing one histogram family per layer pair;
// probes[j] must be attached at layer j for every j in a..n
AssumptionDiagnostics a2_diagnostic(const Network& net, std::size_t a,
                                    const std::vector<ProbeHead>& probes, const Dataset& data,
                                    const AttackConfig& attack, const EdgeConfig& mi_cfg,
                                    const std::vector<double>& bandwidth_scales);

std::string diagnostics_csv(const AssumptionDiagnostics& diag);
std::string diagnostics_json(const AssumptionDiagnostics& diag);

// mean loss gap L(star) - L(tilde) over the dataset; the two networks must
// share bit-identical head weights
double performance_diff(const Network& net_star, const Network& net_tilde, std::size_t a,
                        const Dataset& data);

struct PowerIterationConfig {
  std::size_t max_iterations = 200;
  double tol = 1e-9;
  double hvp_epsilon = 1e-4;
  double stationarity_threshold = 1e-3;  // ||grad|| / sqrt(param count)
  std::uint64_t seed = 0;
};

struct HessianBoundReport {
  double bound = 0.0;        // 0.5 * lambda_max * ||delta||^2
  double lambda_max = 0.0;
  double delta_norm = 0.0;   // l2 over tail parameters
  bool power_converged = false;
  std::size_t iterations = 0;
  double stationarity = 0.0;
  bool stationary = false;
};

// curvature bound on the loss gap: power iteration over the tail-parameter
// Hessian of net_star's clean loss, scaled by the squared tail distance
HessianBoundReport hessian_bound(const Network& net_star, const Network& net_tilde, std::size_t a,
                                 const Dataset& data, const PowerIterationConfig& cfg);

struct LipschitzBoundReport {
  double bound = 0.0;
  double c_x = 0.0;                // max sample l2 norm
  double c_sigma = 1.0;            // activation Lipschitz constant
  double head_norm_product = 0.0;  // prod of head weight Frobenius norms
  double tail_delta_fro = 0.0;     // Frobenius distance over tail parameters
};

// propagation bound on output deviation: C_x * C_sigma * prod ||W_head||_F
// * ||tail delta||_F
LipschitzBoundReport lipschitz_bound(const Network& net_star, const Network& net_tilde,
                                     std::size_t a, const Dataset& data);

// flat gradient of the mean cross-entropy over `data` with respect to the
// parameters of layers [first, last], in flat_params order
std::vector<double> loss_gradient(const Network& net, const Dataset& data, std::size_t first,
                                  std::size_t last);

// mean cross-entropy of the network on the dataset
double mean_loss(const Network& net, const Dataset& data);

}  // namespace semirobust
