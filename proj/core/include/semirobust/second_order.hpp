#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace semirobust {

// value + analytic gradient of a scalar function at a point
struct ValueGrad {
  double value = 0.0;
  std::vector<double> grad;
};

using DiffFn = std::function<ValueGrad(const std::vector<double>&)>;
using GradFn = std::function<std::vector<double>(const std::vector<double>&)>;
using VecFn = std::function<std::vector<double>(const std::vector<double>&)>;

// Max relative error between the analytic gradient and a central finite
// difference of the value, coordinate by coordinate; the denominator is
// max(1, |analytic|) so tiny components do not blow the ratio up.
double finite_diff_check(const DiffFn& f, const std::vector<double>& point, double h);

// Hessian-vector product by central differencing of gradients:
//   H v  ~  (grad(x + eps v) - grad(x - eps v)) / (2 eps)
// Exact (to rounding) for quadratics.
std::vector<double> hvp(const GradFn& grad_fn, const std::vector<double>& at,
                        const std::vector<double>& v, double eps = 1e-4);

struct PowerIterationResult {
  double eigenvalue = 0.0;  // Rayleigh quotient at the final iterate
  std::vector<double> eigenvector;
  bool converged = false;
  int iterations = 0;
};

// Power iteration on a symmetric operator given as v -> A v. Converges to the
// largest-magnitude eigenvalue; the Rayleigh quotient supplies its sign.
PowerIterationResult max_eigenvalue(const VecFn& apply, std::size_t dim,
                                    int max_iterations = 500, double tol = 1e-9,
                                    std::uint64_t seed = 0);

}  // namespace semirobust
