#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "semirobust/tensor.hpp"

namespace semirobust {

// How a per-sample alignment score between predictions and labels is formed.
//   raw_binary:        scores are a single column, labels are +-1, score_i * y_i
//   normalized_margin: (true-class score - best other score), squashed by
//                      m / (1 + |m|) into (-1, 1); single-column scores with
//                      +-1 labels use m = y * s
enum class CorrelationKind { raw_binary, normalized_margin };

enum class LossKind { cross_entropy_multiclass, correlation_binary };

// label semantics per loss: class indices (one-hot targets) for cross-entropy,
// +-1 scalars for the binary correlation loss
enum class LabelEncoding { one_hot, pm_one };

struct LossSpec {
  LossKind kind = LossKind::cross_entropy_multiclass;
  LabelEncoding label_encoding = LabelEncoding::one_hot;

  // throws when the encoding cannot feed the loss
  void validate() const;
};

// Reverse-mode gradient tape. Records an append-only op sequence; node ids
// are creation-ordered, so every input id precedes its output id. One tape
// per forward/backward pass, confined to a single thread.
class Tape {
 public:
  struct NodeRef {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // leaves -------------------------------------------------------------
  NodeRef input(Tensor value, bool requires_grad = false);

  // recorded ops ---------------------------------------------------------
  // y = x * W^T + b    x:[m,in]  W:[out,in]  b:[out]  ->  [m,out]
  NodeRef linear(NodeRef x, NodeRef w, NodeRef b);
  NodeRef matmul(NodeRef a, NodeRef b);
  NodeRef add(NodeRef a, NodeRef b);
  NodeRef scale(NodeRef a, double s);
  NodeRef relu(NodeRef x);       // subgradient 0 at x == 0
  NodeRef tanh_act(NodeRef x);
  NodeRef square(NodeRef x);
  NodeRef sum_all(NodeRef x);    // -> scalar
  NodeRef mean_all(NodeRef x);   // -> scalar

  // per-sample softmax cross-entropy, logits:[m,C] C >= 2  ->  [m]
  NodeRef softmax_cross_entropy(NodeRef logits, const std::vector<int>& labels);

  // per-sample correlation between scores and labels  ->  [m]
  // scores:[m,C]; labels are class ids for C >= 2, +-1 for C == 1
  NodeRef margin_correlation(NodeRef scores, const std::vector<int>& labels,
                             CorrelationKind kind);

  // access ---------------------------------------------------------------
  const Tensor& value(NodeRef ref) const;
  std::size_t node_count() const { return nodes_.size(); }

  // backward -------------------------------------------------------------
  // root must be scalar; seeds d(root)/d(root) = 1 and sweeps the tape in
  // reverse creation order, visiting each reachable node exactly once
  void backward(NodeRef root);
  const Tensor& grad(NodeRef ref) const;  // zeros if the node was not reached
  std::size_t last_backward_visits() const { return last_backward_visits_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_allocated = false;
    std::vector<int> parents;
    std::function<void(Tape&)> backprop;
    const char* op = "";
  };

  NodeRef emplace(Tensor value, bool requires_grad, std::vector<int> parents,
                  const char* op, std::function<void(Tape&)> backprop);
  Node& node(NodeRef ref);
  const Node& node_checked(NodeRef ref, const char* ctx) const;
  Tensor& grad_buffer(int id);
  bool needs_grad(NodeRef ref) const;

  std::vector<Node> nodes_;
  std::size_t last_backward_visits_ = 0;
  mutable Tensor zero_grad_;  // scratch for grad() on unreached nodes
};

}  // namespace semirobust
