#include "semirobust/network.hpp"

#include <cmath>
#include <stdexcept>

#include "semirobust/rng.hpp"

namespace semirobust {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::identity:
      return "identity";
    case Activation::tanh:
      return "tanh";
  }
  throw std::invalid_argument("unknown activation enum value");
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation name: " + name);
}

namespace {

Tensor apply_activation(Activation act, Tensor z) {
  switch (act) {
    case Activation::identity:
      return z;
    case Activation::relu:
      for (std::size_t i = 0; i < z.size(); ++i) {
        if (z[i] < 0.0) z[i] = 0.0;
      }
      return z;
    case Activation::tanh:
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::tanh(z[i]);
      return z;
  }
  throw std::invalid_argument("unknown activation enum value");
}

Tensor affine(const DenseLayer& layer, const Tensor& x) {
  if (x.rank() != 2) {
    throw std::invalid_argument("layer_forward expects a [batch, features] input, got " +
                                x.shape_string());
  }
  if (x.cols() != layer.fan_in()) {
    throw std::invalid_argument("layer_forward: input width " + std::to_string(x.cols()) +
                                " does not match layer fan-in " +
                                std::to_string(layer.fan_in()));
  }
  const std::size_t m = x.rows();
  const std::size_t out = layer.fan_out();
  Tensor z({m, out});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = layer.bias[o];
      for (std::size_t c = 0; c < layer.fan_in(); ++c) {
        acc += x.at(r, c) * layer.weights.at(o, c);
      }
      z.at(r, o) = acc;
    }
  }
  return z;
}

}  // namespace

Tensor layer_forward(const DenseLayer& layer, const Tensor& x) {
  return apply_activation(layer.activation, affine(layer, x));
}

Network Network::build(const std::vector<std::size_t>& dims, std::vector<Activation> activations,
                       std::uint64_t seed) {
  if (dims.size() < 2) {
    throw std::invalid_argument("Network::build needs at least input and output dims");
  }
  if (activations.size() != dims.size() - 1) {
    throw std::invalid_argument("Network::build: " + std::to_string(dims.size() - 1) +
                                " layers but " + std::to_string(activations.size()) +
                                " activations");
  }
  for (std::size_t d : dims) {
    if (d == 0) throw std::invalid_argument("Network::build: zero layer width");
  }
  Network net;
  net.layers_.reserve(dims.size() - 1);
  for (std::size_t j = 0; j + 1 < dims.size(); ++j) {
    const std::size_t fan_in = dims[j];
    const std::size_t fan_out = dims[j + 1];
    DenseLayer layer;
    layer.activation = activations[j];
    layer.weights = Tensor({fan_out, fan_in});
    layer.bias = Tensor({fan_out});
    RandomStream rng(derive_seed(seed, "init", j + 1));
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      layer.weights[i] = scale * rng.normal();
    }
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

std::size_t Network::input_dim() const {
  if (layers_.empty()) throw std::runtime_error("input_dim on empty network");
  return layers_.front().fan_in();
}

std::size_t Network::output_dim() const {
  if (layers_.empty()) throw std::runtime_error("output_dim on empty network");
  return layers_.back().fan_out();
}

std::vector<std::size_t> Network::dims() const {
  std::vector<std::size_t> d;
  d.reserve(layers_.size() + 1);
  d.push_back(input_dim());
  for (const auto& l : layers_) d.push_back(l.fan_out());
  return d;
}

std::vector<Activation> Network::activations() const {
  std::vector<Activation> a;
  a.reserve(layers_.size());
  for (const auto& l : layers_) a.push_back(l.activation);
  return a;
}

void Network::check_layer_index(std::size_t j, const char* ctx) const {
  if (j == 0 || j > layers_.size()) {
    throw std::invalid_argument(std::string(ctx) + ": layer index " + std::to_string(j) +
                                " outside 1.." + std::to_string(layers_.size()));
  }
}

DenseLayer& Network::layer(std::size_t j) {
  check_layer_index(j, "Network::layer");
  return layers_[j - 1];
}

const DenseLayer& Network::layer(std::size_t j) const {
  check_layer_index(j, "Network::layer");
  return layers_[j - 1];
}

Tensor Network::forward(const Tensor& x) const {
  Tensor h = x;
  for (const auto& layer : layers_) h = layer_forward(layer, h);
  return h;
}

std::vector<Tensor> Network::forward_layers(const Tensor& x) const {
  std::vector<Tensor> outs;
  outs.reserve(layers_.size());
  Tensor h = x;
  for (const auto& layer : layers_) {
    h = layer_forward(layer, h);
    outs.push_back(h);
  }
  return outs;
}

void Network::freeze_head(std::size_t a) {
  if (a >= layers_.size()) {
    throw std::invalid_argument("freeze_head: head size " + std::to_string(a) +
                                " must leave at least one trainable layer of " +
                                std::to_string(layers_.size()));
  }
  for (std::size_t j = 0; j < layers_.size(); ++j) layers_[j].frozen = j < a;
}

void Network::unfreeze_all() {
  for (auto& layer : layers_) layer.frozen = false;
}

std::size_t Network::param_count(std::size_t first, std::size_t last, bool weights_only) const {
  check_layer_index(first, "param_count");
  check_layer_index(last, "param_count");
  if (first > last) throw std::invalid_argument("param_count: first > last");
  std::size_t n = 0;
  for (std::size_t j = first; j <= last; ++j) {
    n += layers_[j - 1].weights.size();
    if (!weights_only) n += layers_[j - 1].bias.size();
  }
  return n;
}

std::vector<double> Network::flat_params(std::size_t first, std::size_t last,
                                         bool weights_only) const {
  std::vector<double> flat;
  flat.reserve(param_count(first, last, weights_only));
  for (std::size_t j = first; j <= last; ++j) {
    const DenseLayer& l = layers_[j - 1];
    flat.insert(flat.end(), l.weights.data().begin(), l.weights.data().end());
    if (!weights_only) flat.insert(flat.end(), l.bias.data().begin(), l.bias.data().end());
  }
  return flat;
}

void Network::set_flat_params(std::size_t first, std::size_t last, const std::vector<double>& v,
                              bool weights_only) {
  const std::size_t want = param_count(first, last, weights_only);
  if (v.size() != want) {
    throw std::invalid_argument("set_flat_params: got " + std::to_string(v.size()) +
                                " values, layer range holds " + std::to_string(want));
  }
  std::size_t pos = 0;
  for (std::size_t j = first; j <= last; ++j) {
    DenseLayer& l = layers_[j - 1];
    for (std::size_t i = 0; i < l.weights.size(); ++i) l.weights[i] = v[pos++];
    if (!weights_only) {
      for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] = v[pos++];
    }
  }
}

Network::Traced Network::trace(Tape& tape, const Tensor& x, bool input_grad,
                               bool param_grads) const {
  if (layers_.empty()) throw std::runtime_error("trace on empty network");
  Traced traced;
  traced.input = tape.input(x, input_grad);
  traced.layer_out.reserve(layers_.size());
  traced.weights.reserve(layers_.size());
  traced.biases.reserve(layers_.size());
  Tape::NodeRef h = traced.input;
  for (const auto& layer : layers_) {
    const bool grads = param_grads && !layer.frozen;
    Tape::NodeRef w = tape.input(layer.weights, grads);
    Tape::NodeRef b = tape.input(layer.bias, grads);
    traced.weights.push_back(w);
    traced.biases.push_back(b);
    Tape::NodeRef z = tape.linear(h, w, b);
    switch (layer.activation) {
      case Activation::identity:
        h = z;
        break;
      case Activation::relu:
        h = tape.relu(z);
        break;
      case Activation::tanh:
        h = tape.tanh_act(z);
        break;
    }
    traced.layer_out.push_back(h);
  }
  return traced;
}

Tensor SubnetworkView::forward(const Tensor& h) const {
  if (net == nullptr) throw std::runtime_error("SubnetworkView without a network");
  Tensor out = h;
  for (std::size_t j = first; j <= last; ++j) out = layer_forward(net->layer(j), out);
  return out;
}

std::vector<Tensor> SubnetworkView::forward_layers(const Tensor& h) const {
  if (net == nullptr) throw std::runtime_error("SubnetworkView without a network");
  std::vector<Tensor> outs;
  outs.reserve(depth());
  Tensor cur = h;
  for (std::size_t j = first; j <= last; ++j) {
    cur = layer_forward(net->layer(j), cur);
    outs.push_back(cur);
  }
  return outs;
}

SubnetworkView view(const Network& net, std::size_t first, std::size_t last) {
  if (first == 0 || last > net.depth() || first > last) {
    throw std::invalid_argument("view: layer range " + std::to_string(first) + ".." +
                                std::to_string(last) + " outside 1.." +
                                std::to_string(net.depth()));
  }
  return SubnetworkView{&net, first, last};
}

SubnetworkView full_view(const Network& net) { return view(net, 1, net.depth()); }

SubnetworkSplit split(const Network& net, std::size_t a) {
  if (a == 0 || a >= net.depth()) {
    throw std::invalid_argument("split: head size " + std::to_string(a) +
                                " must satisfy 1 <= a < " + std::to_string(net.depth()));
  }
  SubnetworkSplit s;
  s.a = a;
  s.head = view(net, 1, a);
  s.tail = view(net, a + 1, net.depth());
  return s;
}

LayerActivations forward_collect(const Network& net, const Tensor& batch,
                                 bool adversarial_inputs) {
  LayerActivations acts;
  acts.input = batch;
  acts.layers = net.forward_layers(batch);
  acts.adversarial = adversarial_inputs;
  return acts;
}

Network compose_networks(const Network& head_source, const Network& tail_source, std::size_t a) {
  if (a == 0 || a >= head_source.depth() || head_source.depth() != tail_source.depth()) {
    throw std::invalid_argument("compose_networks: incompatible depths or head size");
  }
  const auto hd = head_source.dims();
  const auto td = tail_source.dims();
  if (hd != td) {
    throw std::invalid_argument("compose_networks: networks have different layer widths");
  }
  Network out = head_source;
  for (std::size_t j = a + 1; j <= out.depth(); ++j) {
    out.layer(j) = tail_source.layer(j);
  }
  out.unfreeze_all();
  return out;
}

}  // namespace semirobust
