#pragma once

#include <cstdint>
#include <vector>

#include "semirobust/network.hpp"
#include "semirobust/tape.hpp"
#include "semirobust/tensor.hpp"

namespace semirobust {

// Linear read-out head attached to one layer of a network. `compose_layers`
// lists parent layers routed through (in order) between the attachment point
// and the linear map; peeling a layer off a deeper probe extends it, which
// keeps the composed head numerically identical to the deeper one.
struct ProbeHead {
  std::size_t layer = 0;  // attachment layer, 1-based; 0 = raw input
  bool identity = false;  // scores are the (composed) activations themselves
  Tensor weights;         // [classes, dim], unused when identity
  Tensor bias;            // [classes], unused when identity
  std::vector<std::size_t> compose_layers;
};

struct ProbeConfig {
  std::size_t epochs = 30;
  double learning_rate = 0.05;
  std::size_t batch_size = 128;
  double momentum = 0.9;
};

// identity read-out of layer j's activations (j = depth gives the raw logits)
ProbeHead identity_probe(const Network& net, std::size_t j);
ProbeHead output_probe(const Network& net);

// number of score columns the probe produces
std::size_t probe_out_dim(const Network& net, const ProbeHead& probe);

// scores from activations already taken at the attachment layer
Tensor apply_probe(const Network& net, const ProbeHead& probe, const Tensor& h);

// scores from raw network inputs (forwards to the attachment layer first)
Tensor probe_scores(const Network& net, const ProbeHead& probe, const Tensor& inputs);

// tape version of apply_probe; composed layers and the linear map join the
// tape as constants so gradients flow only to h
Tape::NodeRef trace_probe(Tape& tape, const Network& net, const ProbeHead& probe,
                          Tape::NodeRef h);

// re-attach one layer lower, routing through the layer that was peeled off;
// scores are unchanged for any input
ProbeHead peel_probe(const Network& net, const ProbeHead& probe);

// fit a softmax read-out on detached activations at layer j
ProbeHead train_probe(const Network& net, std::size_t j, const Tensor& inputs,
                      const std::vector<int>& labels, std::size_t num_classes,
                      const ProbeConfig& config, std::uint64_t seed);

}  // namespace semirobust
