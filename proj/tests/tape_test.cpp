#include "semirobust/tape.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "semirobust/tensor.hpp"
#include "support/oracles.hpp"

namespace semirobust {
namespace {

// Evaluate a taped scalar as a function of one input tensor's flat values and
// compare the tape's gradient for that input against central differences.
void expect_gradient_matches(
    const std::function<Tape::NodeRef(Tape&, Tape::NodeRef)>& graph,
    const Tensor& x0, double tol = 1e-7) {
  auto value_at = [&](const std::vector<double>& flat) {
    Tensor x(x0.shape(), flat);
    Tape tape;
    Tape::NodeRef in = tape.input(x, true);
    Tape::NodeRef out = graph(tape, in);
    return tape.value(out)[0];
  };
  Tape tape;
  Tape::NodeRef in = tape.input(x0, true);
  Tape::NodeRef out = graph(tape, in);
  tape.backward(out);
  const Tensor& analytic = tape.grad(in);
  const std::vector<double> numeric = oracle::numeric_gradient(value_at, x0.data(), 1e-6);
  ASSERT_EQ(analytic.size(), numeric.size());
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    EXPECT_NEAR(analytic[i], numeric[i], tol) << "flat index " << i;
  }
}

TEST(tape, linear_forward_matches_hand_computation) {
  Tape tape;
  // y = x W^T + b with x:[2,3], W:[2,3], b:[2]
  Tape::NodeRef x = tape.input(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  Tape::NodeRef w = tape.input(Tensor::matrix(2, 3, {0.5, -1, 0.25, 2, 0, -0.5}));
  Tape::NodeRef b = tape.input(Tensor::row_vector({10, 20}));
  const Tensor& y = tape.value(tape.linear(x, w, b));
  ASSERT_EQ(y.rows(), 2u);
  ASSERT_EQ(y.cols(), 2u);
  EXPECT_DOUBLE_EQ(y.at(0, 0), 0.5 - 2 + 0.75 + 10);
  EXPECT_DOUBLE_EQ(y.at(0, 1), 2 + 0 - 1.5 + 20);
  EXPECT_DOUBLE_EQ(y.at(1, 0), 2 - 5 + 1.5 + 10);
  EXPECT_DOUBLE_EQ(y.at(1, 1), 8 + 0 - 3 + 20);
}

TEST(tape, linear_gradients_match_finite_differences) {
  const Tensor x0 = Tensor::matrix(3, 2, {0.5, -1.2, 0.3, 2.0, -0.7, 0.9});
  const Tensor w0 = Tensor::matrix(4, 2, {1, -0.5, 0.25, 0.75, -1.5, 0.1, 0.6, -0.9});
  const Tensor b0 = Tensor::row_vector({0.1, -0.2, 0.3, 0.4});
  // gradient with respect to x
  expect_gradient_matches(
      [&](Tape& t, Tape::NodeRef in) {
        return t.mean_all(t.square(t.linear(in, t.input(w0), t.input(b0))));
      },
      x0);
  // gradient with respect to w
  expect_gradient_matches(
      [&](Tape& t, Tape::NodeRef in) {
        return t.mean_all(t.square(t.linear(t.input(x0), in, t.input(b0))));
      },
      w0);
  // gradient with respect to b
  expect_gradient_matches(
      [&](Tape& t, Tape::NodeRef in) {
        return t.mean_all(t.square(t.linear(t.input(x0), t.input(w0), in)));
      },
      b0);
}

TEST(tape, matmul_add_scale_gradients) {
  const Tensor a0 = Tensor::matrix(2, 3, {1, -2, 0.5, 0.25, 3, -1});
  const Tensor b0 = Tensor::matrix(3, 2, {2, 0.5, -1, 1, 0.75, -0.25});
  expect_gradient_matches(
      [&](Tape& t, Tape::NodeRef in) {
        Tape::NodeRef prod = t.matmul(in, t.input(b0));
        Tape::NodeRef doubled = t.add(prod, t.scale(prod, 2.0));
        return t.sum_all(t.square(doubled));
      },
      a0, 1e-5);
}

TEST(tape, relu_and_tanh_gradients) {
  const Tensor x0 = Tensor::matrix(2, 3, {0.8, -0.3, 1.7, -2.2, 0.05, -0.6});
  expect_gradient_matches(
      [&](Tape& t, Tape::NodeRef in) { return t.sum_all(t.square(t.relu(in))); }, x0);
  expect_gradient_matches(
      [&](Tape& t, Tape::NodeRef in) { return t.sum_all(t.square(t.tanh_act(in))); }, x0);
}

TEST(tape, relu_subgradient_at_zero_is_zero) {
  Tape tape;
  Tape::NodeRef x = tape.input(Tensor::matrix(1, 3, {0.0, -1.0, 2.0}), true);
  Tape::NodeRef out = tape.sum_all(tape.relu(x));
  tape.backward(out);
  const Tensor& g = tape.grad(x);
  EXPECT_EQ(g.at(0, 0), 0.0);
  EXPECT_EQ(g.at(0, 1), 0.0);
  EXPECT_EQ(g.at(0, 2), 1.0);
}

TEST(tape, softmax_cross_entropy_value_matches_log_sum_exp) {
  Tape tape;
  const Tensor logits = Tensor::matrix(2, 3, {2.0, 1.0, 0.1, -1.0, 0.5, 3.0});
  const std::vector<int> labels = {0, 2};
  Tape::NodeRef ce = tape.softmax_cross_entropy(tape.input(logits), labels);
  const Tensor& per_sample = tape.value(ce);
  ASSERT_EQ(per_sample.size(), 2u);
  auto expected = [&](std::size_t row, int label) {
    double mx = logits.at(row, 0);
    for (std::size_t c = 1; c < 3; ++c) mx = std::max(mx, logits.at(row, c));
    double denom = 0.0;
    for (std::size_t c = 0; c < 3; ++c) denom += std::exp(logits.at(row, c) - mx);
    return -(logits.at(row, static_cast<std::size_t>(label)) - mx - std::log(denom));
  };
  EXPECT_NEAR(per_sample[0], expected(0, 0), 1e-12);
  EXPECT_NEAR(per_sample[1], expected(1, 2), 1e-12);
}

TEST(tape, softmax_cross_entropy_gradient_is_softmax_minus_one_hot) {
  const Tensor logits = Tensor::matrix(2, 3, {0.3, -0.8, 0.9, 1.4, 0.2, -0.1});
  const std::vector<int> labels = {1, 0};
  expect_gradient_matches(
      [&](Tape& t, Tape::NodeRef in) {
        return t.mean_all(t.softmax_cross_entropy(in, labels));
      },
      logits);
}

TEST(tape, margin_correlation_gradients) {
  const std::vector<int> multi_labels = {0, 1, 2, 1};
  const Tensor scores = Tensor::matrix(4, 3, {1.2, -0.3, 0.4, 0.1, 0.9, -1.1,
                                              -0.4, 0.2, 0.8, 0.6, 0.5, 0.3});
  expect_gradient_matches(
      [&](Tape& t, Tape::NodeRef in) {
        return t.mean_all(t.margin_correlation(in, multi_labels, CorrelationKind::normalized_margin));
      },
      scores);
  const std::vector<int> pm = {1, -1, 1};
  const Tensor single = Tensor::matrix(3, 1, {0.7, -0.2, 1.4});
  expect_gradient_matches(
      [&](Tape& t, Tape::NodeRef in) {
        return t.mean_all(t.margin_correlation(in, pm, CorrelationKind::normalized_margin));
      },
      single);
}

TEST(tape, margin_correlation_single_output_fixture) {
  // one output column, +-1 labels: value is y * s / (1 + |s|) per sample
  Tape tape;
  const Tensor scores = Tensor::matrix(2, 1, {0.2, 0.4});
  Tape::NodeRef node =
      tape.margin_correlation(tape.input(scores), {1, 1}, CorrelationKind::normalized_margin);
  const Tensor& v = tape.value(node);
  EXPECT_NEAR(v[0], 0.2 / 1.2, 1e-12);
  EXPECT_NEAR(v[1], 0.4 / 1.4, 1e-12);
}

TEST(tape, backward_visits_diamond_nodes_once) {
  Tape tape;
  Tape::NodeRef x = tape.input(Tensor::matrix(1, 2, {1.0, 2.0}), true);
  Tape::NodeRef left = tape.scale(x, 2.0);
  Tape::NodeRef right = tape.square(x);
  Tape::NodeRef joined = tape.add(left, right);
  Tape::NodeRef out = tape.sum_all(joined);
  tape.backward(out);
  // x, left, right, joined, out: five reachable nodes
  EXPECT_EQ(tape.last_backward_visits(), 5u);
  EXPECT_DOUBLE_EQ(tape.grad(x).at(0, 0), 2.0 + 2.0 * 1.0);
  EXPECT_DOUBLE_EQ(tape.grad(x).at(0, 1), 2.0 + 2.0 * 2.0);
}

TEST(tape, grad_of_unreached_node_is_zero) {
  Tape tape;
  Tape::NodeRef x = tape.input(Tensor::matrix(1, 2, {1.0, 2.0}), true);
  Tape::NodeRef unused = tape.square(x);
  Tape::NodeRef out = tape.sum_all(tape.scale(x, 3.0));
  tape.backward(out);
  const Tensor& g = tape.grad(unused);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g[i], 0.0);
}

TEST(tape, backward_requires_scalar_root) {
  Tape tape;
  Tape::NodeRef x = tape.input(Tensor::matrix(1, 2, {1.0, 2.0}), true);
  Tape::NodeRef y = tape.square(x);
  EXPECT_THROW(tape.backward(y), std::invalid_argument);
}

TEST(tape, invalid_node_reference_throws) {
  Tape tape;
  EXPECT_THROW(tape.value(Tape::NodeRef{}), std::invalid_argument);
}

TEST(tape, cross_entropy_rejects_bad_labels) {
  Tape tape;
  Tape::NodeRef logits = tape.input(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  EXPECT_THROW(tape.softmax_cross_entropy(logits, {0}), std::invalid_argument);
  EXPECT_THROW(tape.softmax_cross_entropy(logits, {0, 3}), std::invalid_argument);
}

}  // namespace
}  // namespace semirobust
