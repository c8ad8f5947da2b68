/*
 * Copyright 2026 The TUNA-CIL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "tuna/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "tuna/errors.hpp"

namespace tuna {

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NumericalError(std::string(op) + ": non-finite input");
  }
}

void require_2d(const Tensor& t, const char* op) {
  if (t.dim() != 2) {
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
  }
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()));
}

// Builds the output node; wires the graph only if some parent tracks grads.
Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> parents,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  for (const auto& p : parents) {
    if (p.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

// Returns the parent's grad buffer if it wants one, else nullptr.
double* grad_of(const NodePtr& parent) {
  if (!parent->requires_grad) return nullptr;
  parent->ensure_grad();
  return parent->grad.data();
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor::Tensor() : node_(std::make_shared<Node>()) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->data.assign(numel_of(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel_of(shape) != values.size()) {
    throw ShapeError("Tensor::from: shape " + shape_str(shape) + " needs " +
                     std::to_string(numel_of(shape)) + " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  if (s.size() == 2) return s[0];
  return 1;
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  if (s.empty()) return 1;
  return s.back();
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor is not a scalar, shape " + shape_str(shape()));
  return node_->data[0];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

Tensor Tensor::clone(bool requires_grad) const { return from(shape(), node_->data, requires_grad); }

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Interior grads are not needed after the pass.
  for (Node* n : order) {
    if (n->backward_fn) std::vector<double>().swap(n->grad);
  }
}

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a.cols() != b.rows()) mismatch("matmul", a, b);
  check_finite(a, "matmul");
  check_finite(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const NodePtr& na = self.parents[0];
    const NodePtr& nb = self.parents[1];
    const double* g = self.grad.data();
    if (double* ga = grad_of(na)) {
      const double* pb = nb->data.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = pb + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (double* gb = grad_of(nb)) {
      const double* pa = na->data.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = pa[i * k + p];
          if (av == 0.0) continue;
          double* gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  return make_result({n, m}, std::move(out), {a}, [m, n](Node& self) {
    if (double* ga = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("add", a, b);
  check_finite(a, "add");
  check_finite(b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (const auto& p : self.parents) {
      if (double* g = grad_of(p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_2d(a, "add_bias");
  if (bias.numel() != a.cols()) mismatch("add_bias", a, bias);
  check_finite(a, "add_bias");
  check_finite(bias, "add_bias");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias.data()[j];
  return make_result(a.shape(), std::move(out), {a, bias}, [m, n](Node& self) {
    if (double* ga = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < m * n; ++i) ga[i] += self.grad[i];
    }
    if (double* gb = grad_of(self.parents[1])) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("mul", a, b);
  check_finite(a, "mul");
  check_finite(b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& da = self.parents[0]->data;
    const auto& db = self.parents[1]->data;
    if (double* ga = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * db[i];
    }
    if (double* gb = grad_of(self.parents[1])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * da[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  check_finite(a, "scale");
  if (!std::isfinite(factor)) throw NumericalError("scale: non-finite factor");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    if (double* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

Tensor relu(const Tensor& a) {
  check_finite(a, "relu");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    if (double* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (self.data[i] > 0.0) g[i] += self.grad[i];
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_2d(x, "layer_norm");
  if (gain.numel() != x.cols()) mismatch("layer_norm", x, gain);
  if (bias.numel() != x.cols()) mismatch("layer_norm", x, bias);
  check_finite(x, "layer_norm");
  check_finite(gain, "layer_norm");
  check_finite(bias, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  std::vector<double> xhat(m * n);
  std::vector<double> inv_std(m);
  const double* px = x.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = px + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = inv;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * inv;
      xhat[i * n + j] = h;
      out[i * n + j] = h * gain.data()[j] + bias.data()[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gain, bias},
                     [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
    const double* g = self.grad.data();
    const auto& gain_v = self.parents[1]->data;
    if (double* gx = grad_of(self.parents[0])) {
      std::vector<double> dxhat(n);
      for (std::size_t i = 0; i < m; ++i) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          dxhat[j] = g[i * n + j] * gain_v[j];
          mean_d += dxhat[j];
          mean_dx += dxhat[j] * xhat[i * n + j];
        }
        mean_d /= static_cast<double>(n);
        mean_dx /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
          gx[i * n + j] += inv_std[i] * (dxhat[j] - mean_d - xhat[i * n + j] * mean_dx);
        }
      }
    }
    if (double* gg = grad_of(self.parents[1])) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * xhat[i * n + j];
    }
    if (double* gb = grad_of(self.parents[2])) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

namespace {

void softmax_row(const double* in, double* out, std::size_t n) {
  double mx = in[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = std::exp(in[j] - mx);
    z += out[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= z;
}

}  // namespace

Tensor softmax(const Tensor& x) {
  check_finite(x, "softmax");
  const std::size_t m = x.rows(), n = x.cols();
  if (n == 0) throw ShapeError("softmax: empty rows in " + shape_str(x.shape()));
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) softmax_row(x.data().data() + i * n, out.data() + i * n, n);
  return make_result(x.shape(), std::move(out), {x}, [m, n](Node& self) {
    if (double* gx = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* p = self.data.data() + i * n;
        const double* g = self.grad.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += p[j] * g[j];
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += p[j] * (g[j] - dot);
      }
    }
  });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t groups,
                 std::size_t heads) {
  require_2d(q, "attention");
  if (k.shape() != q.shape()) mismatch("attention", q, k);
  if (v.shape() != q.shape()) mismatch("attention", q, v);
  if (groups == 0 || q.rows() % groups != 0) {
    throw ShapeError("attention: " + std::to_string(q.rows()) + " rows do not split into " +
                     std::to_string(groups) + " groups");
  }
  if (heads == 0 || q.cols() % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(q.cols()) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  check_finite(q, "attention");
  check_finite(k, "attention");
  check_finite(v, "attention");
  const std::size_t seq = q.rows() / groups, d = q.cols(), dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  // probs[g][h] is seq x seq
  std::vector<double> probs(groups * heads * seq * seq);
  std::vector<double> out(q.numel(), 0.0);
  const double* pq = q.data().data();
  const double* pk = k.data().data();
  const double* pv = v.data().data();
  std::vector<double> scores(seq);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t h = 0; h < heads; ++h) {
      double* P = probs.data() + (g * heads + h) * seq * seq;
      for (std::size_t i = 0; i < seq; ++i) {
        const double* qi = pq + (g * seq + i) * d + h * dh;
        for (std::size_t j = 0; j < seq; ++j) {
          const double* kj = pk + (g * seq + j) * d + h * dh;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          scores[j] = s * sc;
        }
        softmax_row(scores.data(), P + i * seq, seq);
        double* oi = out.data() + (g * seq + i) * d + h * dh;
        for (std::size_t j = 0; j < seq; ++j) {
          const double pij = P[i * seq + j];
          const double* vj = pv + (g * seq + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += pij * vj[c];
        }
      }
    }
  }
  return make_result(q.shape(), std::move(out), {q, k, v},
                     [groups, heads, seq, d, dh, sc, probs = std::move(probs)](Node& self) {
    const NodePtr& nq = self.parents[0];
    const NodePtr& nk = self.parents[1];
    const NodePtr& nv = self.parents[2];
    double* gq = grad_of(nq);
    double* gk = grad_of(nk);
    double* gv = grad_of(nv);
    const double* pq = nq->data.data();
    const double* pk = nk->data.data();
    const double* pv = nv->data.data();
    const double* go = self.grad.data();
    std::vector<double> dP(seq), dS(seq);
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t h = 0; h < heads; ++h) {
        const double* P = probs.data() + (g * heads + h) * seq * seq;
        for (std::size_t i = 0; i < seq; ++i) {
          const double* goi = go + (g * seq + i) * d + h * dh;
          // dV_j += P_ij * dO_i ; dP_ij = dO_i . V_j
          double dot = 0.0;
          for (std::size_t j = 0; j < seq; ++j) {
            const double pij = P[i * seq + j];
            const double* vj = pv + (g * seq + j) * d + h * dh;
            double s = 0.0;
            for (std::size_t c = 0; c < dh; ++c) s += goi[c] * vj[c];
            dP[j] = s;
            dot += pij * s;
            if (gv) {
              double* gvj = gv + (g * seq + j) * d + h * dh;
              for (std::size_t c = 0; c < dh; ++c) gvj[c] += pij * goi[c];
            }
          }
          for (std::size_t j = 0; j < seq; ++j) dS[j] = P[i * seq + j] * (dP[j] - dot) * sc;
          const double* qi = pq + (g * seq + i) * d + h * dh;
          for (std::size_t j = 0; j < seq; ++j) {
            const double* kj = pk + (g * seq + j) * d + h * dh;
            if (gq) {
              double* gqi = gq + (g * seq + i) * d + h * dh;
              for (std::size_t c = 0; c < dh; ++c) gqi[c] += dS[j] * kj[c];
            }
            if (gk) {
              double* gkj = gk + (g * seq + j) * d + h * dh;
              for (std::size_t c = 0; c < dh; ++c) gkj[c] += dS[j] * qi[c];
            }
          }
        }
      }
    }
  });
}

Tensor mean(const Tensor& x, int axis) {
  require_2d(x, "mean");
  check_finite(x, "mean");
  const std::size_t m = x.rows(), n = x.cols();
  if (axis == 0) {
    if (m == 0) throw ShapeError("mean: empty axis 0 in " + shape_str(x.shape()));
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j] += x.data()[i * n + j];
    for (auto& o : out) o /= static_cast<double>(m);
    return make_result({1, n}, std::move(out), {x}, [m, n](Node& self) {
      if (double* g = grad_of(self.parents[0])) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j] / static_cast<double>(m);
      }
    });
  }
  if (axis == 1) {
    if (n == 0) throw ShapeError("mean: empty axis 1 in " + shape_str(x.shape()));
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[i] += x.data()[i * n + j];
      out[i] /= static_cast<double>(n);
    }
    return make_result({m, 1}, std::move(out), {x}, [m, n](Node& self) {
      if (double* g = grad_of(self.parents[0])) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i] / static_cast<double>(n);
      }
    });
  }
  throw ShapeError("mean: axis must be 0 or 1, got " + std::to_string(axis));
}

Tensor sum(const Tensor& x) {
  check_finite(x, "sum");
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({1}, {s}, {x}, [](Node& self) {
    if (double* g = grad_of(self.parents[0])) {
      const std::size_t n = self.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

Tensor l1_norm(const Tensor& x) {
  check_finite(x, "l1_norm");
  double s = 0.0;
  for (double v : x.data()) s += std::abs(v);
  return make_result({1}, {s}, {x}, [](Node& self) {
    if (double* g = grad_of(self.parents[0])) {
      const auto& xv = self.parents[0]->data;
      for (std::size_t i = 0; i < xv.size(); ++i) {
        if (xv[i] > 0.0) g[i] += self.grad[0];
        else if (xv[i] < 0.0) g[i] -= self.grad[0];
      }
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_2d(logits, "cross_entropy");
  check_finite(logits, "cross_entropy");
  const std::size_t b = logits.rows(), k = logits.cols();
  if (labels.size() != b) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_str(logits.shape()));
  }
  if (b == 0 || k == 0) throw ShapeError("cross_entropy: empty logits " + shape_str(logits.shape()));
  std::vector<double> probs(b * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " outside [0," +
                              std::to_string(k) + ")");
    }
    const double* row = logits.data().data() + i * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double logz = mx + std::log(z);
    loss += logz - row[y];
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(row[j] - logz);
  }
  loss /= static_cast<double>(b);
  std::vector<int> ys(labels.begin(), labels.end());
  return make_result({1}, {loss}, {logits},
                     [b, k, probs = std::move(probs), ys = std::move(ys)](Node& self) {
    if (double* g = grad_of(self.parents[0])) {
      const double w = self.grad[0] / static_cast<double>(b);
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          const double onehot = static_cast<int>(j) == ys[i] ? 1.0 : 0.0;
          g[i * k + j] += w * (probs[i * k + j] - onehot);
        }
      }
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_2d(x, "gather_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(rows.size() * n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= m) {
      throw std::out_of_range("gather_rows: row " + std::to_string(rows[r]) + " of " +
                              shape_str(x.shape()));
    }
    std::copy_n(x.data().data() + rows[r] * n, n, out.data() + r * n);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result({rows.size(), n}, std::move(out), {x}, [n, idx = std::move(idx)](Node& self) {
    if (double* g = grad_of(self.parents[0])) {
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < n; ++j) g[idx[r] * n + j] += self.grad[r * n + j];
    }
  });
}

Tensor prepend_token(const Tensor& x, const Tensor& token, std::size_t seq) {
  require_2d(x, "prepend_token");
  if (token.numel() != x.cols()) mismatch("prepend_token", x, token);
  if (seq == 0 || x.rows() % seq != 0) {
    throw ShapeError("prepend_token: " + std::to_string(x.rows()) + " rows not a multiple of seq " +
                     std::to_string(seq));
  }
  check_finite(token, "prepend_token");
  const std::size_t groups = x.rows() / seq, n = x.cols(), out_seq = seq + 1;
  std::vector<double> out(groups * out_seq * n);
  for (std::size_t g = 0; g < groups; ++g) {
    double* dst = out.data() + g * out_seq * n;
    std::copy_n(token.data().data(), n, dst);
    std::copy_n(x.data().data() + g * seq * n, seq * n, dst + n);
  }
  return make_result({groups * out_seq, n}, std::move(out), {x, token},
                     [groups, seq, n, out_seq](Node& self) {
    double* gx = grad_of(self.parents[0]);
    double* gt = grad_of(self.parents[1]);
    for (std::size_t g = 0; g < groups; ++g) {
      const double* src = self.grad.data() + g * out_seq * n;
      if (gt) for (std::size_t j = 0; j < n; ++j) gt[j] += src[j];
      if (gx) {
        double* dst = gx + g * seq * n;
        for (std::size_t j = 0; j < seq * n; ++j) dst[j] += src[n + j];
      }
    }
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_2d(a, "concat_cols");
  require_2d(b, "concat_cols");
  if (a.rows() != b.rows()) mismatch("concat_cols", a, b);
  const std::size_t m = a.rows(), na = a.cols(), nb = b.cols(), n = na + nb;
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(a.data().data() + i * na, na, out.data() + i * n);
    std::copy_n(b.data().data() + i * nb, nb, out.data() + i * n + na);
  }
  return make_result({m, n}, std::move(out), {a, b}, [m, na, nb, n](Node& self) {
    if (double* ga = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < na; ++j) ga[i * na + j] += self.grad[i * n + j];
    }
    if (double* gb = grad_of(self.parents[1])) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < nb; ++j) gb[i * nb + j] += self.grad[i * n + na + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

SgdMomentum::SgdMomentum(std::vector<Tensor> params, double momentum)
    : params_(std::move(params)), momentum_(momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("SgdMomentum: momentum must lie in [0,1)");
  }
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(p.numel(), 0.0);
}

void SgdMomentum::step(double lr) {
  for (const auto& p : params_) {
    if (!p.has_grad()) throw std::logic_error("SgdMomentum::step: parameter has no gradient");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i].mutable_data();
    auto g = params_[i].grad();
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = momentum_ * v[j] + g[j];
      w[j] -= lr * v[j];
    }
  }
}

void SgdMomentum::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double cosine_lr(double lr0, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return lr0;
  const double s = static_cast<double>(std::min(step, total_steps));
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * s / static_cast<double>(total_steps)));
}

}  // namespace tuna
