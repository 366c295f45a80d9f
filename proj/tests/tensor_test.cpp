#include "semirobust/tensor.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <gtest/gtest.h>

#include "support/oracles.hpp"

namespace semirobust {
namespace {

TEST(tensor, shape_constructor_zero_fills) {
  Tensor t({3, 4});
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.rows(), 3u);
  EXPECT_EQ(t.cols(), 4u);
  EXPECT_EQ(t.size(), 12u);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(t[i], 0.0);
}

TEST(tensor, matrix_factory_round_trips_through_at) {
  Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.at(0, 0), 1.0);
  EXPECT_EQ(t.at(0, 2), 3.0);
  EXPECT_EQ(t.at(1, 0), 4.0);
  t.at(1, 2) = 9.0;
  EXPECT_EQ(t[5], 9.0);
}

TEST(tensor, scalar_and_row_vector_ranks) {
  EXPECT_EQ(Tensor::scalar(2.5).rank(), 0u);
  EXPECT_EQ(Tensor::scalar(2.5).size(), 1u);
  Tensor v = Tensor::row_vector({1, 2, 3});
  EXPECT_EQ(v.rank(), 1u);
  EXPECT_EQ(v.size(), 3u);
}

TEST(tensor, rows_cols_reject_non_matrices) {
  Tensor v = Tensor::row_vector({1, 2});
  EXPECT_THROW(v.rows(), std::invalid_argument);
  EXPECT_THROW(v.cols(), std::invalid_argument);
}

TEST(tensor, data_size_must_match_shape) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST(tensor, non_finite_values_rejected) {
  EXPECT_THROW(Tensor({1, 2}, {1.0, std::nan("")}), std::invalid_argument);
  EXPECT_THROW(Tensor({1, 2}, {1.0, std::numeric_limits<double>::infinity()}),
               std::invalid_argument);
}

TEST(tensor, ensure_finite_names_the_context) {
  Tensor t({1, 1});
  t[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    t.ensure_finite("loss update");
    FAIL() << "expected a throw";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("loss update"), std::string::npos);
  }
}

TEST(tensor, matmul_matches_naive_reference) {
  Tensor a = Tensor::matrix(4, 3, {0.5, -1, 2, 3, 0.25, -0.75, 1, 1, 1, -2, 0.125, 4});
  Tensor b = Tensor::matrix(3, 5, {1, 2, 3, 4, 5, -1, 0.5, 0, 2, -3, 0.25, 1, -1, 0.5, 2});
  const Tensor got = matmul(a, b);
  const Tensor want = oracle::naive_matmul(a, b);
  ASSERT_TRUE(got.same_shape(want));
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_DOUBLE_EQ(got[i], want[i]);
}

TEST(tensor, matmul_one_by_one) {
  const Tensor got = matmul(Tensor::matrix(1, 1, {3}), Tensor::matrix(1, 1, {-2}));
  EXPECT_EQ(got.at(0, 0), -6.0);
}

TEST(tensor, matmul_rejects_mismatched_inner_dim) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 2})), std::invalid_argument);
}

TEST(tensor, transpose_is_an_involution) {
  Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor tt = transpose(transpose(a));
  ASSERT_TRUE(tt.same_shape(a));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(tt[i], a[i]);
  EXPECT_EQ(transpose(a).at(2, 1), 6.0);
}

TEST(tensor, elementwise_arithmetic) {
  Tensor a = Tensor::matrix(1, 3, {1, 2, 3});
  Tensor b = Tensor::matrix(1, 3, {10, 20, 30});
  const Tensor sum = a + b;
  const Tensor diff = b - a;
  const Tensor scaled = 2.0 * a;
  EXPECT_EQ(sum.at(0, 2), 33.0);
  EXPECT_EQ(diff.at(0, 1), 18.0);
  EXPECT_EQ(scaled.at(0, 0), 2.0);
  EXPECT_THROW(a + Tensor({1, 2}), std::invalid_argument);
}

TEST(tensor, norms_and_dot) {
  EXPECT_DOUBLE_EQ(dot({1, 2, 3}, {4, 5, 6}), 32.0);
  EXPECT_DOUBLE_EQ(l2_norm({3, 4}), 5.0);
  EXPECT_DOUBLE_EQ(frobenius_norm(Tensor::matrix(2, 2, {1, 2, 2, 4})), 5.0);
  EXPECT_DOUBLE_EQ(linf_norm(Tensor::matrix(1, 3, {-7, 2, 5})), 7.0);
}

TEST(tensor, zeros_like_copies_shape_only) {
  Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor z = Tensor::zeros_like(a);
  ASSERT_TRUE(z.same_shape(a));
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(z[i], 0.0);
}

TEST(tensor, shape_string_is_readable) {
  EXPECT_EQ(Tensor({2, 3}).shape_string(), "[2, 3]");
}

}  // namespace
}  // namespace semirobust
