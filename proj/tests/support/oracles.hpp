#pragma once

// Hand-rolled reference implementations the library must agree with.
// Deliberately naive and written against the maths directly, so a mistake
// in the production code cannot be mirrored here.

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "semirobust/tensor.hpp"

namespace oracle {

// plain triple-loop matrix product
semirobust::Tensor naive_matmul(const semirobust::Tensor& a, const semirobust::Tensor& b);

// central finite-difference gradient of a scalar function
std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> at, double h);

// all eigenvalues of a dense symmetric matrix (row-major), descending by
// value, via cyclic Jacobi rotations
std::vector<double> jacobi_eigenvalues(std::vector<double> m, std::size_t dim);

// closed-form MI of a bivariate standard Gaussian pair with correlation rho
double gaussian_mi(double rho);

// plug-in MI of a contingency table, in nats
double table_mi(const std::vector<std::vector<double>>& counts);

// correlated standard Gaussian columns (x, y) with correlation rho, using
// std::mt19937_64 directly so the sampler shares nothing with the library
std::pair<semirobust::Tensor, semirobust::Tensor> gaussian_pair(std::size_t n, double rho,
                                                                std::uint64_t seed);

// uniform [0,1) column
semirobust::Tensor uniform_column(std::size_t n, std::uint64_t seed);

}  // namespace oracle
