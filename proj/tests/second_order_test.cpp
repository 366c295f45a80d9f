#include "semirobust/second_order.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

#include <gtest/gtest.h>

#include "semirobust/rng.hpp"
#include "support/oracles.hpp"

namespace semirobust {
namespace {

// symmetric test matrix with a deterministic spread of eigenvalues
std::vector<double> random_symmetric(std::size_t dim, std::uint64_t seed) {
  RandomStream rng(seed);
  std::vector<double> m(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = rng.normal();
      m[i * dim + j] = v;
      m[j * dim + i] = v;
    }
  }
  return m;
}

VecFn matrix_apply(const std::vector<double>& m, std::size_t dim) {
  return [m, dim](const std::vector<double>& v) {
    std::vector<double> out(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < dim; ++j) out[i] += m[i * dim + j] * v[j];
    }
    return out;
  };
}

TEST(finite_diff_check, accepts_a_correct_gradient) {
  // f(x) = sum x_i^3 - 2 x_0 x_1
  DiffFn f = [](const std::vector<double>& x) {
    ValueGrad vg;
    vg.grad.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      vg.value += x[i] * x[i] * x[i];
      vg.grad[i] = 3.0 * x[i] * x[i];
    }
    vg.value -= 2.0 * x[0] * x[1];
    vg.grad[0] -= 2.0 * x[1];
    vg.grad[1] -= 2.0 * x[0];
    return vg;
  };
  EXPECT_LT(finite_diff_check(f, {0.5, -1.2, 0.8}, 1e-5), 1e-8);
}

TEST(finite_diff_check, flags_a_wrong_gradient) {
  DiffFn broken = [](const std::vector<double>& x) {
    ValueGrad vg;
    vg.value = x[0] * x[0];
    vg.grad = {x[0]};  // missing the factor 2
    return vg;
  };
  EXPECT_GT(finite_diff_check(broken, {1.5}, 1e-5), 0.1);
}

TEST(hvp, exact_on_quadratics) {
  const std::size_t dim = 6;
  const std::vector<double> a = random_symmetric(dim, 21);
  // f = 0.5 v^T A v  =>  grad = A v, hessian = A
  GradFn grad = matrix_apply(a, dim);
  RandomStream rng(3);
  std::vector<double> at(dim), v(dim);
  for (auto& x : at) x = rng.normal();
  for (auto& x : v) x = rng.normal();
  const std::vector<double> hv = hvp(grad, at, v, 1e-4);
  const std::vector<double> want = matrix_apply(a, dim)(v);
  for (std::size_t i = 0; i < dim; ++i) EXPECT_NEAR(hv[i], want[i], 1e-8);
}

TEST(power_iteration, matches_jacobi_oracle_on_symmetric_matrices) {
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    const std::size_t dim = 10;
    const std::vector<double> m = random_symmetric(dim, seed);
    const std::vector<double> eig = oracle::jacobi_eigenvalues(m, dim);
    // largest magnitude eigenvalue, sign included
    double want = eig.front();
    if (std::abs(eig.back()) > std::abs(want)) want = eig.back();
    const PowerIterationResult got = max_eigenvalue(matrix_apply(m, dim), dim, 2000, 1e-12, seed);
    EXPECT_TRUE(got.converged);
    EXPECT_NEAR(got.eigenvalue, want, 1e-7) << "seed " << seed;
  }
}

TEST(power_iteration, reports_negative_dominant_eigenvalues) {
  // diag(-5, 1, 2): dominant by magnitude is -5
  std::vector<double> m(9, 0.0);
  m[0] = -5.0;
  m[4] = 1.0;
  m[8] = 2.0;
  const PowerIterationResult got = max_eigenvalue(matrix_apply(m, 3), 3, 500, 1e-12, 1);
  EXPECT_NEAR(got.eigenvalue, -5.0, 1e-9);
}

TEST(power_iteration, deterministic_per_seed) {
  const std::vector<double> m = random_symmetric(8, 11);
  const PowerIterationResult a = max_eigenvalue(matrix_apply(m, 8), 8, 300, 1e-10, 42);
  const PowerIterationResult b = max_eigenvalue(matrix_apply(m, 8), 8, 300, 1e-10, 42);
  EXPECT_EQ(a.eigenvalue, b.eigenvalue);
  EXPECT_EQ(a.iterations, b.iterations);
  ASSERT_EQ(a.eigenvector.size(), b.eigenvector.size());
  for (std::size_t i = 0; i < a.eigenvector.size(); ++i) {
    EXPECT_EQ(a.eigenvector[i], b.eigenvector[i]);
  }
}

TEST(power_iteration, one_dimensional_operator) {
  VecFn apply = [](const std::vector<double>& v) { return std::vector<double>{3.5 * v[0]}; };
  const PowerIterationResult got = max_eigenvalue(apply, 1, 50, 1e-12, 0);
  EXPECT_NEAR(got.eigenvalue, 3.5, 1e-12);
  EXPECT_TRUE(got.converged);
}

}  // namespace
}  // namespace semirobust
