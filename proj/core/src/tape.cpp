#include "semirobust/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace semirobust {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

void LossSpec::validate() const {
  if (kind == LossKind::correlation_binary && label_encoding != LabelEncoding::pm_one) {
    throw std::invalid_argument("correlation_binary loss requires pm_one labels");
  }
  if (kind == LossKind::cross_entropy_multiclass && label_encoding != LabelEncoding::one_hot) {
    throw std::invalid_argument("cross_entropy_multiclass loss requires one_hot labels");
  }
}

Tape::NodeRef Tape::emplace(Tensor value, bool requires_grad, std::vector<int> parents,
                            const char* op, std::function<void(Tape&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.parents = std::move(parents);
  n.backprop = std::move(backprop);
  n.op = op;
  nodes_.push_back(std::move(n));
  return NodeRef{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(NodeRef ref) {
  return nodes_[static_cast<std::size_t>(ref.id)];
}

const Tape::Node& Tape::node_checked(NodeRef ref, const char* ctx) const {
  if (!ref.valid() || static_cast<std::size_t>(ref.id) >= nodes_.size()) {
    throw std::invalid_argument(std::string(ctx) + ": invalid tape node");
  }
  return nodes_[static_cast<std::size_t>(ref.id)];
}

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad_allocated) {
    n.grad = Tensor(n.value.shape());
    n.grad_allocated = true;
  }
  return n.grad;
}

bool Tape::needs_grad(NodeRef ref) const {
  return node_checked(ref, "needs_grad").requires_grad;
}

Tape::NodeRef Tape::input(Tensor value, bool requires_grad) {
  value.ensure_finite("tape input");
  return emplace(std::move(value), requires_grad, {}, "input", nullptr);
}

const Tensor& Tape::value(NodeRef ref) const {
  return node_checked(ref, "tape value").value;
}

const Tensor& Tape::grad(NodeRef ref) const {
  const Node& n = node_checked(ref, "tape grad");
  if (n.grad_allocated) return n.grad;
  zero_grad_ = Tensor(n.value.shape());
  return zero_grad_;
}

// ============================================================================
// ops
// ============================================================================

Tape::NodeRef Tape::linear(NodeRef xr, NodeRef wr, NodeRef br) {
  const Tensor& x = value(xr);
  const Tensor& w = value(wr);
  const Tensor& b = value(br);
  require(x.rank() == 2 && w.rank() == 2 && b.rank() == 1,
          "linear: expected x rank 2, w rank 2, b rank 1");
  require(x.cols() == w.cols(),
          "linear: input width " + std::to_string(x.cols()) + " vs weight fan-in " +
              std::to_string(w.cols()));
  require(b.size() == w.rows(), "linear: bias length does not match weight rows");

  const std::size_t m = x.rows(), in = x.cols(), out = w.rows();
  Tensor y({m, out});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < out; ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < in; ++k) s += x.at(i, k) * w.at(j, k);
      y.at(i, j) = s;
    }
  }

  const bool rg = needs_grad(xr) || needs_grad(wr) || needs_grad(br);
  const int xi = xr.id, wi = wr.id, bi = br.id;
  NodeRef outref = emplace(std::move(y), rg, {xi, wi, bi}, "linear", nullptr);
  if (rg) {
    const int oi = outref.id;
    node(outref).backprop = [xi, wi, bi, oi](Tape& t) {
      const Tensor& g = t.grad_buffer(oi);  // [m,out]
      const Tensor& x = t.nodes_[xi].value;
      const Tensor& w = t.nodes_[wi].value;
      const std::size_t m = x.rows(), in = x.cols(), out = w.rows();
      if (t.nodes_[xi].requires_grad) {
        Tensor& gx = t.grad_buffer(xi);  // gx += g * W
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < out; ++j) {
            const double gv = g.at(i, j);
            if (gv == 0.0) continue;
            for (std::size_t k = 0; k < in; ++k) gx.at(i, k) += gv * w.at(j, k);
          }
      }
      if (t.nodes_[wi].requires_grad) {
        Tensor& gw = t.grad_buffer(wi);  // gw += g^T * x
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < out; ++j) {
            const double gv = g.at(i, j);
            if (gv == 0.0) continue;
            for (std::size_t k = 0; k < in; ++k) gw.at(j, k) += gv * x.at(i, k);
          }
      }
      if (t.nodes_[bi].requires_grad) {
        Tensor& gb = t.grad_buffer(bi);  // gb += column sums of g
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < out; ++j) gb[j] += g.at(i, j);
      }
    };
  }
  return outref;
}

Tape::NodeRef Tape::matmul(NodeRef ar, NodeRef br) {
  const Tensor& a = value(ar);
  const Tensor& b = value(br);
  require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.rows(),
          "tape matmul: incompatible shapes " + a.shape_string() + " x " + b.shape_string());
  Tensor y = semirobust::matmul(a, b);
  const bool rg = needs_grad(ar) || needs_grad(br);
  const int ai = ar.id, bi = br.id;
  NodeRef out = emplace(std::move(y), rg, {ai, bi}, "matmul", nullptr);
  if (rg) {
    const int oi = out.id;
    node(out).backprop = [ai, bi, oi](Tape& t) {
      const Tensor& g = t.grad_buffer(oi);
      const Tensor& a = t.nodes_[ai].value;
      const Tensor& b = t.nodes_[bi].value;
      if (t.nodes_[ai].requires_grad) {
        Tensor& ga = t.grad_buffer(ai);
        // ga += g * b^T
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t j = 0; j < b.cols(); ++j) {
            const double gv = g.at(i, j);
            if (gv == 0.0) continue;
            for (std::size_t k = 0; k < a.cols(); ++k) ga.at(i, k) += gv * b.at(k, j);
          }
      }
      if (t.nodes_[bi].requires_grad) {
        Tensor& gb = t.grad_buffer(bi);
        // gb += a^T * g
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t k = 0; k < a.cols(); ++k) {
            const double av = a.at(i, k);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) gb.at(k, j) += av * g.at(i, j);
          }
      }
    };
  }
  return out;
}

Tape::NodeRef Tape::add(NodeRef ar, NodeRef br) {
  const Tensor& a = value(ar);
  const Tensor& b = value(br);
  require(a.same_shape(b), "tape add: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  Tensor y = a + b;
  const bool rg = needs_grad(ar) || needs_grad(br);
  const int ai = ar.id, bi = br.id;
  NodeRef out = emplace(std::move(y), rg, {ai, bi}, "add", nullptr);
  if (rg) {
    const int oi = out.id;
    node(out).backprop = [ai, bi, oi](Tape& t) {
      const Tensor& g = t.grad_buffer(oi);
      for (int pid : {ai, bi}) {
        if (!t.nodes_[pid].requires_grad) continue;
        Tensor& gp = t.grad_buffer(pid);
        for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
      }
    };
  }
  return out;
}

Tape::NodeRef Tape::scale(NodeRef ar, double s) {
  const Tensor& a = value(ar);
  Tensor y = s * a;
  const bool rg = needs_grad(ar);
  const int ai = ar.id;
  NodeRef out = emplace(std::move(y), rg, {ai}, "scale", nullptr);
  if (rg) {
    const int oi = out.id;
    node(out).backprop = [ai, oi, s](Tape& t) {
      const Tensor& g = t.grad_buffer(oi);
      Tensor& gp = t.grad_buffer(ai);
      for (std::size_t i = 0; i < g.size(); ++i) gp[i] += s * g[i];
    };
  }
  return out;
}

Tape::NodeRef Tape::relu(NodeRef xr) {
  const Tensor& x = value(xr);
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = y[i] > 0.0 ? y[i] : 0.0;
  const bool rg = needs_grad(xr);
  const int xi = xr.id;
  NodeRef out = emplace(std::move(y), rg, {xi}, "relu", nullptr);
  if (rg) {
    const int oi = out.id;
    node(out).backprop = [xi, oi](Tape& t) {
      const Tensor& g = t.grad_buffer(oi);
      const Tensor& x = t.nodes_[xi].value;
      Tensor& gp = t.grad_buffer(xi);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > 0.0) gp[i] += g[i];  // subgradient at 0 is 0
      }
    };
  }
  return out;
}

Tape::NodeRef Tape::tanh_act(NodeRef xr) {
  const Tensor& x = value(xr);
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(y[i]);
  const bool rg = needs_grad(xr);
  const int xi = xr.id;
  NodeRef out = emplace(std::move(y), rg, {xi}, "tanh", nullptr);
  if (rg) {
    const int oi = out.id;
    node(out).backprop = [xi, oi](Tape& t) {
      const Tensor& g = t.grad_buffer(oi);
      const Tensor& y = t.nodes_[oi].value;
      Tensor& gp = t.grad_buffer(xi);
      for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i] * (1.0 - y[i] * y[i]);
    };
  }
  return out;
}

Tape::NodeRef Tape::square(NodeRef xr) {
  const Tensor& x = value(xr);
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= y[i];
  const bool rg = needs_grad(xr);
  const int xi = xr.id;
  NodeRef out = emplace(std::move(y), rg, {xi}, "square", nullptr);
  if (rg) {
    const int oi = out.id;
    node(out).backprop = [xi, oi](Tape& t) {
      const Tensor& g = t.grad_buffer(oi);
      const Tensor& x = t.nodes_[xi].value;
      Tensor& gp = t.grad_buffer(xi);
      for (std::size_t i = 0; i < g.size(); ++i) gp[i] += 2.0 * x[i] * g[i];
    };
  }
  return out;
}

Tape::NodeRef Tape::sum_all(NodeRef xr) {
  const Tensor& x = value(xr);
  double s = 0.0;
  for (double v : x.data()) s += v;
  const bool rg = needs_grad(xr);
  const int xi = xr.id;
  NodeRef out = emplace(Tensor::scalar(s), rg, {xi}, "sum_all", nullptr);
  if (rg) {
    const int oi = out.id;
    node(out).backprop = [xi, oi](Tape& t) {
      const double g = t.grad_buffer(oi)[0];
      Tensor& gp = t.grad_buffer(xi);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g;
    };
  }
  return out;
}

Tape::NodeRef Tape::mean_all(NodeRef xr) {
  const Tensor& x = value(xr);
  require(x.size() > 0, "mean_all: empty tensor");
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  const bool rg = needs_grad(xr);
  const int xi = xr.id;
  NodeRef out = emplace(Tensor::scalar(s * inv), rg, {xi}, "mean_all", nullptr);
  if (rg) {
    const int oi = out.id;
    node(out).backprop = [xi, oi, inv](Tape& t) {
      const double g = t.grad_buffer(oi)[0] * inv;
      Tensor& gp = t.grad_buffer(xi);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g;
    };
  }
  return out;
}

Tape::NodeRef Tape::softmax_cross_entropy(NodeRef lr, const std::vector<int>& labels) {
  const Tensor& z = value(lr);
  require(z.rank() == 2, "cross entropy: logits must be rank 2");
  const std::size_t m = z.rows(), c = z.cols();
  require(c >= 2, "cross entropy: needs at least 2 classes");
  require(labels.size() == m, "cross entropy: label count " + std::to_string(labels.size()) +
                                  " vs batch " + std::to_string(m));
  // cache softmax probabilities for the backward closure
  Tensor probs({m, c});
  Tensor loss({m});
  for (std::size_t i = 0; i < m; ++i) {
    const int y = labels[i];
    require(y >= 0 && static_cast<std::size_t>(y) < c,
            "cross entropy: label " + std::to_string(y) + " out of range");
    double zmax = z.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) zmax = std::max(zmax, z.at(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(z.at(i, j) - zmax);
    for (std::size_t j = 0; j < c; ++j) probs.at(i, j) = std::exp(z.at(i, j) - zmax) / denom;
    loss[i] = std::log(denom) - (z.at(i, static_cast<std::size_t>(y)) - zmax);
  }
  const bool rg = needs_grad(lr);
  const int zi = lr.id;
  NodeRef out = emplace(std::move(loss), rg, {zi}, "softmax_ce", nullptr);
  if (rg) {
    const int oi = out.id;
    auto labels_copy = labels;
    node(out).backprop = [zi, oi, probs = std::move(probs),
                          labels = std::move(labels_copy)](Tape& t) {
      const Tensor& g = t.grad_buffer(oi);
      Tensor& gz = t.grad_buffer(zi);
      const std::size_t m = probs.rows(), c = probs.cols();
      for (std::size_t i = 0; i < m; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        for (std::size_t j = 0; j < c; ++j) {
          double d = probs.at(i, j);
          if (static_cast<std::size_t>(labels[i]) == j) d -= 1.0;
          gz.at(i, j) += gi * d;
        }
      }
    };
  }
  return out;
}

Tape::NodeRef Tape::margin_correlation(NodeRef sr, const std::vector<int>& labels,
                                       CorrelationKind kind) {
  const Tensor& s = value(sr);
  require(s.rank() == 2, "margin correlation: scores must be rank 2");
  const std::size_t m = s.rows(), c = s.cols();
  require(labels.size() == m, "margin correlation: label count mismatch");

  Tensor corr({m});
  // per-sample (dcorr/dmargin, true column, rival column); rival = -1 for 1-D scores
  std::vector<double> dmargin(m, 0.0);
  std::vector<int> col_true(m, 0), col_rival(m, -1);
  std::vector<double> sign(m, 1.0);

  for (std::size_t i = 0; i < m; ++i) {
    double margin = 0.0;
    if (c == 1) {
      require(labels[i] == 1 || labels[i] == -1,
              "margin correlation: 1-D scores need +-1 labels");
      sign[i] = static_cast<double>(labels[i]);
      margin = sign[i] * s.at(i, 0);
    } else {
      const int y = labels[i];
      require(y >= 0 && static_cast<std::size_t>(y) < c,
              "margin correlation: label " + std::to_string(y) + " out of range");
      col_true[i] = y;
      double best = -std::numeric_limits<double>::infinity();
      int rival = -1;
      for (std::size_t j = 0; j < c; ++j) {
        if (j == static_cast<std::size_t>(y)) continue;
        if (s.at(i, j) > best) {  // first maximum wins ties
          best = s.at(i, j);
          rival = static_cast<int>(j);
        }
      }
      col_rival[i] = rival;
      margin = s.at(i, static_cast<std::size_t>(y)) - best;
    }
    if (kind == CorrelationKind::raw_binary) {
      require(c == 1, "raw binary correlation expects single-column scores");
      corr[i] = margin;  // margin == y * s already
      dmargin[i] = 1.0;
    } else {
      const double denom = 1.0 + std::abs(margin);
      corr[i] = margin / denom;
      dmargin[i] = 1.0 / (denom * denom);
    }
  }

  const bool rg = needs_grad(sr);
  const int si = sr.id;
  NodeRef out = emplace(std::move(corr), rg, {si}, "margin_corr", nullptr);
  if (rg) {
    const int oi = out.id;
    node(out).backprop = [si, oi, c, dmargin = std::move(dmargin),
                          col_true = std::move(col_true), col_rival = std::move(col_rival),
                          sign = std::move(sign)](Tape& t) {
      const Tensor& g = t.grad_buffer(oi);
      Tensor& gs = t.grad_buffer(si);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double gi = g[i] * dmargin[i];
        if (gi == 0.0) continue;
        if (c == 1) {
          gs.at(i, 0) += gi * sign[i];
        } else {
          gs.at(i, static_cast<std::size_t>(col_true[i])) += gi;
          if (col_rival[i] >= 0) gs.at(i, static_cast<std::size_t>(col_rival[i])) -= gi;
        }
      }
    };
  }
  return out;
}

// ============================================================================
// backward
// ============================================================================

void Tape::backward(NodeRef root) {
  const Node& r = node_checked(root, "backward");
  require(r.value.size() == 1, "backward: root must be scalar, got " + r.value.shape_string());
  require(r.requires_grad, "backward: root does not depend on any differentiable input");

  // mark the subgraph reachable from the root through grad-requiring nodes
  std::vector<bool> marked(nodes_.size(), false);
  std::vector<int> stack = {root.id};
  marked[static_cast<std::size_t>(root.id)] = true;
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    for (int p : nodes_[static_cast<std::size_t>(id)].parents) {
      if (!marked[static_cast<std::size_t>(p)] && nodes_[static_cast<std::size_t>(p)].requires_grad) {
        marked[static_cast<std::size_t>(p)] = true;
        stack.push_back(p);
      }
    }
  }

  grad_buffer(root.id)[0] = 1.0;
  last_backward_visits_ = 0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!marked[static_cast<std::size_t>(id)]) continue;
    ++last_backward_visits_;
    if (n.backprop) n.backprop(*this);
  }
}

}  // namespace semirobust
