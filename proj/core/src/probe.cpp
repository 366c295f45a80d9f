#include "semirobust/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "semirobust/rng.hpp"

namespace semirobust {

namespace {

std::size_t attachment_dim(const Network& net, std::size_t layer) {
  if (layer == 0) return net.input_dim();
  return net.layer(layer).fan_out();
}

void check_probe(const Network& net, const ProbeHead& probe) {
  if (probe.layer > net.depth()) {
    throw std::invalid_argument("probe attachment layer " + std::to_string(probe.layer) +
                                " outside 0.." + std::to_string(net.depth()));
  }
  std::size_t dim = attachment_dim(net, probe.layer);
  std::size_t prev = probe.layer;
  for (std::size_t j : probe.compose_layers) {
    if (j != prev + 1) {
      throw std::invalid_argument("probe compose_layers must walk consecutive layers");
    }
    if (net.layer(j).fan_in() != dim) {
      throw std::invalid_argument("probe compose layer " + std::to_string(j) +
                                  " fan-in mismatch");
    }
    dim = net.layer(j).fan_out();
    prev = j;
  }
  if (!probe.identity && (probe.weights.rank() != 2 || probe.weights.cols() != dim)) {
    throw std::invalid_argument("probe weight width does not match composed activation width");
  }
}

}  // namespace

ProbeHead identity_probe(const Network& net, std::size_t j) {
  if (j == 0 || j > net.depth()) {
    throw std::invalid_argument("identity_probe: layer " + std::to_string(j) + " outside 1.." +
                                std::to_string(net.depth()));
  }
  ProbeHead probe;
  probe.layer = j;
  probe.identity = true;
  return probe;
}

ProbeHead output_probe(const Network& net) { return identity_probe(net, net.depth()); }

std::size_t probe_out_dim(const Network& net, const ProbeHead& probe) {
  check_probe(net, probe);
  if (probe.identity) {
    if (!probe.compose_layers.empty()) return net.layer(probe.compose_layers.back()).fan_out();
    return attachment_dim(net, probe.layer);
  }
  return probe.weights.rows();
}

Tensor apply_probe(const Network& net, const ProbeHead& probe, const Tensor& h) {
  check_probe(net, probe);
  const std::size_t expected =
      probe.layer == 0 ? net.input_dim() : net.layer(probe.layer).fan_out();
  if (h.rank() != 2 || h.cols() != expected) {
    throw std::invalid_argument("apply_probe: activations are " + h.shape_string() +
                                " but layer " + std::to_string(probe.layer) + " is " +
                                std::to_string(expected) + " wide");
  }
  Tensor cur = h;
  for (std::size_t j : probe.compose_layers) cur = layer_forward(net.layer(j), cur);
  if (probe.identity) return cur;
  const std::size_t m = cur.rows();
  const std::size_t classes = probe.weights.rows();
  Tensor scores({m, classes});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < classes; ++c) {
      double acc = probe.bias[c];
      for (std::size_t k = 0; k < cur.cols(); ++k) acc += cur.at(r, k) * probe.weights.at(c, k);
      scores.at(r, c) = acc;
    }
  }
  return scores;
}

Tensor probe_scores(const Network& net, const ProbeHead& probe, const Tensor& inputs) {
  Tensor h = probe.layer == 0 ? inputs : view(net, 1, probe.layer).forward(inputs);
  return apply_probe(net, probe, h);
}

Tape::NodeRef trace_probe(Tape& tape, const Network& net, const ProbeHead& probe,
                          Tape::NodeRef h) {
  check_probe(net, probe);
  Tape::NodeRef cur = h;
  for (std::size_t j : probe.compose_layers) {
    const DenseLayer& layer = net.layer(j);
    Tape::NodeRef w = tape.input(layer.weights, false);
    Tape::NodeRef b = tape.input(layer.bias, false);
    cur = tape.linear(cur, w, b);
    switch (layer.activation) {
      case Activation::identity:
        break;
      case Activation::relu:
        cur = tape.relu(cur);
        break;
      case Activation::tanh:
        cur = tape.tanh_act(cur);
        break;
    }
  }
  if (probe.identity) return cur;
  Tape::NodeRef w = tape.input(probe.weights, false);
  Tape::NodeRef b = tape.input(probe.bias, false);
  return tape.linear(cur, w, b);
}

ProbeHead peel_probe(const Network& net, const ProbeHead& probe) {
  check_probe(net, probe);
  if (probe.layer == 0) {
    throw std::invalid_argument("peel_probe: probe already attached at the raw input");
  }
  ProbeHead peeled = probe;
  peeled.layer = probe.layer - 1;
  peeled.compose_layers.insert(peeled.compose_layers.begin(), probe.layer);
  return peeled;
}

ProbeHead train_probe(const Network& net, std::size_t j, const Tensor& inputs,
                      const std::vector<int>& labels, std::size_t num_classes,
                      const ProbeConfig& config, std::uint64_t seed) {
  if (j == 0 || j > net.depth()) {
    throw std::invalid_argument("train_probe: layer " + std::to_string(j) + " outside 1.." +
                                std::to_string(net.depth()));
  }
  if (num_classes < 2) throw std::invalid_argument("train_probe needs at least 2 classes");
  if (inputs.rank() != 2 || inputs.rows() != labels.size() || labels.empty()) {
    throw std::invalid_argument("train_probe: inputs/labels size mismatch");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw std::invalid_argument("train_probe: label outside class range");
    }
  }
  const Tensor acts = view(net, 1, j).forward(inputs);
  const std::size_t dim = acts.cols();
  const std::size_t m = acts.rows();

  ProbeHead probe;
  probe.layer = j;
  probe.identity = false;
  probe.weights = Tensor({num_classes, dim});
  probe.bias = Tensor({num_classes});
  RandomStream init(derive_seed(seed, "probe-init"));
  const double scale = std::sqrt(2.0 / static_cast<double>(dim));
  for (std::size_t i = 0; i < probe.weights.size(); ++i) probe.weights[i] = scale * init.normal();

  RandomStream shuffler(derive_seed(seed, "probe-shuffle"));
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  Tensor vel_w = Tensor::zeros_like(probe.weights);
  Tensor vel_b = Tensor::zeros_like(probe.bias);

  const std::size_t batch = std::max<std::size_t>(1, std::min(config.batch_size, m));
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffler.shuffle(order);
    for (std::size_t start = 0; start < m; start += batch) {
      const std::size_t count = std::min(batch, m - start);
      Tensor xb({count, dim});
      std::vector<int> yb(count);
      for (std::size_t r = 0; r < count; ++r) {
        const std::size_t src = order[start + r];
        for (std::size_t c = 0; c < dim; ++c) xb.at(r, c) = acts.at(src, c);
        yb[r] = labels[src];
      }
      Tape tape;
      Tape::NodeRef x = tape.input(xb, false);
      Tape::NodeRef w = tape.input(probe.weights, true);
      Tape::NodeRef b = tape.input(probe.bias, true);
      Tape::NodeRef loss = tape.mean_all(tape.softmax_cross_entropy(tape.linear(x, w, b), yb));
      tape.backward(loss);
      const Tensor& gw = tape.grad(w);
      const Tensor& gb = tape.grad(b);
      for (std::size_t i = 0; i < probe.weights.size(); ++i) {
        vel_w[i] = config.momentum * vel_w[i] + gw[i];
        probe.weights[i] -= config.learning_rate * vel_w[i];
      }
      for (std::size_t i = 0; i < probe.bias.size(); ++i) {
        vel_b[i] = config.momentum * vel_b[i] + gb[i];
        probe.bias[i] -= config.learning_rate * vel_b[i];
      }
    }
  }
  probe.weights.ensure_finite("train_probe weights");
  probe.bias.ensure_finite("train_probe bias");
  return probe;
}

}  // namespace semirobust
