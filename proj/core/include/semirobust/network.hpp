#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semirobust/tape.hpp"
#include "semirobust/tensor.hpp"

namespace semirobust {

enum class Activation { relu, identity, tanh };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct DenseLayer {
  Tensor weights;  // [out, in]
  Tensor bias;     // [out]
  Activation activation = Activation::relu;
  bool frozen = false;

  std::size_t fan_in() const { return weights.cols(); }
  std::size_t fan_out() const { return weights.rows(); }
};

Tensor layer_forward(const DenseLayer& layer, const Tensor& x);

// Feed-forward dense network. Layers are addressed 1-based throughout the
// library (layer(1) .. layer(depth())), matching how split indices and
// per-layer reports are written.
class Network {
 public:
  Network() = default;

  // He-initialized weights, zero biases; deterministic per seed
  static Network build(const std::vector<std::size_t>& dims,
                       std::vector<Activation> activations, std::uint64_t seed);

  std::size_t depth() const { return layers_.size(); }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::vector<std::size_t> dims() const;
  std::vector<Activation> activations() const;

  DenseLayer& layer(std::size_t j);              // 1-based
  const DenseLayer& layer(std::size_t j) const;  // 1-based

  Tensor forward(const Tensor& x) const;
  std::vector<Tensor> forward_layers(const Tensor& x) const;  // [j-1] = layer j output

  void freeze_head(std::size_t a);  // freeze layers 1..a, unfreeze the rest
  void unfreeze_all();

  // flattened parameters of layers [first, last], weights row-major then bias
  // per layer; weights_only skips biases
  std::size_t param_count(std::size_t first, std::size_t last, bool weights_only = false) const;
  std::vector<double> flat_params(std::size_t first, std::size_t last,
                                  bool weights_only = false) const;
  void set_flat_params(std::size_t first, std::size_t last, const std::vector<double>& v,
                       bool weights_only = false);

  struct Traced {
    Tape::NodeRef input;
    std::vector<Tape::NodeRef> layer_out;  // [j-1] = layer j output
    std::vector<Tape::NodeRef> weights;
    std::vector<Tape::NodeRef> biases;
    Tape::NodeRef output() const { return layer_out.back(); }
  };

  // Record a forward pass. Frozen layers join the tape without gradients, so
  // activations flow but no gradient reaches their parameters. param_grads
  // false registers every parameter gradient-free (attack mode).
  Traced trace(Tape& tape, const Tensor& x, bool input_grad, bool param_grads) const;

 private:
  void check_layer_index(std::size_t j, const char* ctx) const;
  std::vector<DenseLayer> layers_;
};

// contiguous layer range [first, last] of a parent network, 1-based inclusive
struct SubnetworkView {
  const Network* net = nullptr;
  std::size_t first = 1;
  std::size_t last = 0;

  std::size_t depth() const { return last - first + 1; }
  // h is the output of layer first-1 (the raw input when first == 1)
  Tensor forward(const Tensor& h) const;
  std::vector<Tensor> forward_layers(const Tensor& h) const;
};

struct SubnetworkSplit {
  SubnetworkView head;  // layers 1..a
  SubnetworkView tail;  // layers a+1..n
  std::size_t a = 0;
};

// split at head size a; requires 1 <= a < depth
SubnetworkSplit split(const Network& net, std::size_t a);

SubnetworkView full_view(const Network& net);
SubnetworkView view(const Network& net, std::size_t first, std::size_t last);

struct LayerActivations {
  Tensor input;
  std::vector<Tensor> layers;  // [j-1] = layer j output
  bool adversarial = false;
};

LayerActivations forward_collect(const Network& net, const Tensor& batch,
                                 bool adversarial_inputs = false);

// build a new network reusing head layers [1..a] of `head_source` and tail
// layers [a+1..n] of `tail_source` (shapes must agree)
Network compose_networks(const Network& head_source, const Network& tail_source, std::size_t a);

}  // namespace semirobust
