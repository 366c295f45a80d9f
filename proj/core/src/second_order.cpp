#include "semirobust/second_order.hpp"

#include <cmath>
#include <stdexcept>

#include "semirobust/rng.hpp"
#include "semirobust/tensor.hpp"

namespace semirobust {

double finite_diff_check(const DiffFn& f, const std::vector<double>& point, double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_check: h must be positive");
  const ValueGrad at = f(point);
  if (at.grad.size() != point.size()) {
    throw std::invalid_argument("finite_diff_check: gradient length mismatch");
  }
  double worst = 0.0;
  std::vector<double> x = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    x[i] = point[i] + h;
    const double fp = f(x).value;
    x[i] = point[i] - h;
    const double fm = f(x).value;
    x[i] = point[i];
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max(1.0, std::abs(at.grad[i]));
    worst = std::max(worst, std::abs(at.grad[i] - numeric) / denom);
  }
  return worst;
}

std::vector<double> hvp(const GradFn& grad_fn, const std::vector<double>& at,
                        const std::vector<double>& v, double eps) {
  if (at.size() != v.size()) throw std::invalid_argument("hvp: dimension mismatch");
  if (eps <= 0.0) throw std::invalid_argument("hvp: eps must be positive");
  std::vector<double> shifted(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) shifted[i] = at[i] + eps * v[i];
  std::vector<double> gp = grad_fn(shifted);
  for (std::size_t i = 0; i < at.size(); ++i) shifted[i] = at[i] - eps * v[i];
  std::vector<double> gm = grad_fn(shifted);
  if (gp.size() != at.size() || gm.size() != at.size()) {
    throw std::invalid_argument("hvp: gradient length mismatch");
  }
  std::vector<double> out(at.size());
  const double inv = 1.0 / (2.0 * eps);
  for (std::size_t i = 0; i < at.size(); ++i) out[i] = (gp[i] - gm[i]) * inv;
  return out;
}

PowerIterationResult max_eigenvalue(const VecFn& apply, std::size_t dim,
                                    int max_iterations, double tol, std::uint64_t seed) {
  if (dim == 0) throw std::invalid_argument("max_eigenvalue: zero dimension");
  RandomStream rng(derive_seed(seed, "power-iteration"));
  std::vector<double> b(dim);
  for (double& x : b) x = rng.normal();
  double norm = l2_norm(b);
  if (norm == 0.0) {
    b[0] = 1.0;
    norm = 1.0;
  }
  for (double& x : b) x /= norm;

  PowerIterationResult res;
  double prev = 0.0;
  for (int it = 1; it <= max_iterations; ++it) {
    std::vector<double> ab = apply(b);
    if (ab.size() != dim) throw std::invalid_argument("max_eigenvalue: operator changed dimension");
    const double rayleigh = dot(b, ab);
    const double ab_norm = l2_norm(ab);
    res.iterations = it;
    res.eigenvalue = rayleigh;
    if (ab_norm == 0.0) {
      // operator annihilates the iterate: eigenvalue 0 on this subspace
      res.eigenvector = b;
      res.converged = true;
      return res;
    }
    for (std::size_t i = 0; i < dim; ++i) b[i] = ab[i] / ab_norm;
    if (it > 1 && std::abs(rayleigh - prev) <= tol * std::max(1.0, std::abs(rayleigh))) {
      res.eigenvector = b;
      res.converged = true;
      return res;
    }
    prev = rayleigh;
  }
  res.eigenvector = b;
  res.converged = false;
  return res;
}

}  // namespace semirobust
