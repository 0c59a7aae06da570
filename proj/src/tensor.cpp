#include "pstae/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace pstae {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void require(bool condition, const std::string& message) {
  if (!condition) throw ConfigError(message);
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw UsageError(std::string(op) + ": undefined tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " +
                      shape_to_string(a.shape()) + " vs " +
                      shape_to_string(b.shape()));
  }
}

detail::Node& parent(detail::Node& n, std::size_t i) { return *n.parents[i]; }

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

// --- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw ConfigError("tensor dims must be positive");
  }
  if (shape_numel(shape) != values.size()) {
    throw ConfigError("value count " + std::to_string(values.size()) +
                      " does not match shape " + shape_to_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::xavier_uniform(Shape shape, std::size_t fan_in,
                              std::size_t fan_out, std::mt19937_64& rng) {
  const double bound =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = dist(rng);
  return from(std::move(shape), std::move(values), true);
}

const Shape& Tensor::shape() const {
  require_defined(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw UsageError("axis out of range");
  return s[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

std::span<const double> Tensor::values() const {
  require_defined(*this, "values");
  return node_->value;
}

std::span<double> Tensor::mutable_values() {
  require_defined(*this, "mutable_values");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on non-scalar tensor");
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  require_defined(*this, "set_requires_grad");
  if (!node_->leaf) throw UsageError("requires_grad can only be set on leaves");
  node_->requires_grad = value;
}

bool Tensor::is_leaf() const { return node_ && node_->leaf; }

bool Tensor::frozen() const { return node_ && node_->frozen; }

void Tensor::set_frozen(bool value) {
  require_defined(*this, "set_frozen");
  node_->frozen = value;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  require_defined(*this, "grad");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  require_defined(*this, "mutable_grad");
  return node_->grad_buffer();
}

void Tensor::zero_grad() {
  require_defined(*this, "zero_grad");
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::clear_grad() {
  require_defined(*this, "clear_grad");
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

void Tensor::backward() const {
  require_defined(*this, "backward");
  if (numel() != 1) {
    throw UsageError("backward() requires a scalar output, got shape " +
                     shape_to_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->leaf || !n->backward_fn || n->grad.empty()) continue;
    n->backward_fn(*n);
  }
  // Interior gradients are only needed during this pass.
  for (detail::Node* n : order) {
    if (!n->leaf) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

Tensor Tensor::detach() const {
  require_defined(*this, "detach");
  return from(node_->shape, node_->value, false);
}

Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->leaf = false;
  for (const Tensor& p : parents) {
    if (p.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (Tensor& p : parents) node->parents.push_back(std::move(p.node_));
    node->backward_fn = std::move(backward);
  }
  return Tensor(std::move(node));
}

// --- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  require(a.rank() == 2 && b.rank() == 2, "matmul expects rank-2 operands");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dimensions differ " +
                             shape_to_string(a.shape()) + " x " +
                             shape_to_string(b.shape()));
  std::vector<double> out(m * n);
  ConstMap am(a.values().data(), m, k);
  ConstMap bm(b.values().data(), k, n);
  MutMap(out.data(), m, n).noalias() = am * bm;
  return make_result({m, n}, std::move(out), {a, b},
                     [m, k, n](detail::Node& self) {
                       ConstMap g(self.grad.data(), m, n);
                       detail::Node& pa = parent(self, 0);
                       detail::Node& pb = parent(self, 1);
                       if (pa.requires_grad) {
                         MutMap(pa.grad_buffer().data(), m, k).noalias() +=
                             g * ConstMap(pb.value.data(), k, n).transpose();
                       }
                       if (pb.requires_grad) {
                         MutMap(pb.grad_buffer().data(), k, n).noalias() +=
                             ConstMap(pa.value.data(), m, k).transpose() * g;
                       }
                     });
}

namespace {

template <typename Fwd, typename DA, typename DB>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* op,
                          Fwd fwd, DA da, DB db) {
  require_same_shape(a, b, op);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return make_result(a.shape(), std::move(out), {a, b},
                     [da, db](detail::Node& self) {
                       detail::Node& pa = parent(self, 0);
                       detail::Node& pb = parent(self, 1);
                       const std::size_t n = self.grad.size();
                       if (pa.requires_grad) {
                         auto& g = pa.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i)
                           g[i] += self.grad[i] * da(pa.value[i], pb.value[i]);
                       }
                       if (pb.requires_grad) {
                         auto& g = pb.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i)
                           g[i] += self.grad[i] * db(pa.value[i], pb.value[i]);
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor squared_difference(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "squared_difference",
      [](double x, double y) { return (x - y) * (x - y); },
      [](double x, double y) { return 2.0 * (x - y); },
      [](double x, double y) { return -2.0 * (x - y); });
}

Tensor scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a},
                     [factor](detail::Node& self) {
                       auto& g = parent(self, 0).grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += factor * self.grad[i];
                     });
}

Tensor square(const Tensor& a) {
  require_defined(a, "square");
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= v;
  return make_result(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    detail::Node& p = parent(self, 0);
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += 2.0 * p.value[i] * self.grad[i];
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_defined(a, "add_bias");
  require_defined(bias, "add_bias");
  require(a.rank() == 2, "add_bias expects a rank-2 input");
  const std::size_t m = a.dim(0), n = a.dim(1);
  require(bias.numel() == n, "add_bias: bias length " +
                                 std::to_string(bias.numel()) +
                                 " != columns " + std::to_string(n));
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = bias.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return make_result(a.shape(), std::move(out), {a, bias},
                     [m, n](detail::Node& self) {
                       detail::Node& pa = parent(self, 0);
                       detail::Node& pb = parent(self, 1);
                       if (pa.requires_grad) {
                         auto& g = pa.grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i];
                       }
                       if (pb.requires_grad) {
                         auto& g = pb.grad_buffer();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j)
                             g[j] += self.grad[i * n + j];
                       }
                     });
}

Tensor relu(const Tensor& a) {
  require_defined(a, "relu");
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return make_result(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    detail::Node& p = parent(self, 0);
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (p.value[i] > 0.0) g[i] += self.grad[i];
  });
}

Tensor max_over_axis(const Tensor& a, std::size_t axis) {
  require_defined(a, "max_over_axis");
  const Shape& s = a.shape();
  require(axis < s.size(), "max_over_axis: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t reduce = s[axis];

  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape.push_back(1);

  const auto v = a.values();
  std::vector<double> out(outer * inner);
  std::vector<std::size_t> argmax(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      std::size_t best = o * reduce * inner + i;
      for (std::size_t r = 1; r < reduce; ++r) {
        const std::size_t flat = (o * reduce + r) * inner + i;
        if (v[flat] > v[best]) best = flat;  // strict: ties keep lowest
      }
      out[o * inner + i] = v[best];
      argmax[o * inner + i] = best;
    }
  }
  return make_result(std::move(out_shape), std::move(out), {a},
                     [argmax = std::move(argmax)](detail::Node& self) {
                       auto& g = parent(self, 0).grad_buffer();
                       for (std::size_t i = 0; i < argmax.size(); ++i)
                         g[argmax[i]] += self.grad[i];
                     });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double total = 0.0;
  for (double v : a.values()) total += v;
  return make_result({1}, {total}, {a}, [](detail::Node& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (double& x : g) x += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  require(shape_numel(shape) == a.numel(),
          "reshape: " + shape_to_string(a.shape()) + " -> " +
              shape_to_string(shape));
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(out), {a},
                     [](detail::Node& self) {
                       auto& g = parent(self, 0).grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += self.grad[i];
                     });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> idx) {
  require_defined(a, "gather_rows");
  require(a.rank() == 2, "gather_rows expects rank-2 input");
  require(!idx.empty(), "gather_rows: empty index list");
  const std::size_t n = a.dim(0), c = a.dim(1);
  const auto v = a.values();
  std::vector<double> out(idx.size() * c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n) throw ConfigError("gather_rows: index out of range");
    std::copy_n(v.begin() + idx[i] * c, c, out.begin() + i * c);
  }
  return make_result({idx.size(), c}, std::move(out), {a},
                     [rows = std::vector<std::size_t>(idx.begin(), idx.end()),
                      c](detail::Node& self) {
                       auto& g = parent(self, 0).grad_buffer();
                       for (std::size_t i = 0; i < rows.size(); ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           g[rows[i] * c + j] += self.grad[i * c + j];
                     });
}

Tensor weighted_gather_rows(const Tensor& a, std::span<const std::size_t> idx,
                            std::span<const double> weights, std::size_t k) {
  require_defined(a, "weighted_gather_rows");
  require(a.rank() == 2, "weighted_gather_rows expects rank-2 input");
  require(k >= 1 && idx.size() == weights.size() && idx.size() % k == 0 &&
              !idx.empty(),
          "weighted_gather_rows: malformed index/weight table");
  const std::size_t n = a.dim(0), c = a.dim(1), rows = idx.size() / k;
  const auto v = a.values();
  std::vector<double> out(rows * c, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t src = idx[i * k + j];
      if (src >= n) throw ConfigError("weighted_gather_rows: index out of range");
      const double w = weights[i * k + j];
      for (std::size_t ch = 0; ch < c; ++ch)
        out[i * c + ch] += w * v[src * c + ch];
    }
  }
  return make_result(
      {rows, c}, std::move(out), {a},
      [ids = std::vector<std::size_t>(idx.begin(), idx.end()),
       ws = std::vector<double>(weights.begin(), weights.end()), k, c,
       rows](detail::Node& self) {
        auto& g = parent(self, 0).grad_buffer();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const std::size_t src = ids[i * k + j];
            const double w = ws[i * k + j];
            for (std::size_t ch = 0; ch < c; ++ch)
              g[src * c + ch] += w * self.grad[i * c + ch];
          }
      });
}

Tensor concat_cols(const std::vector<Tensor>& parts,
                   const std::vector<std::size_t>& widths, std::size_t rows) {
  require(parts.size() == widths.size() && !parts.empty(),
          "concat_cols: parts/widths mismatch");
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    offsets.push_back(total);
    total += widths[p];
    if (parts[p].defined()) {
      require(parts[p].rank() == 2 && parts[p].dim(0) == rows &&
                  parts[p].dim(1) == widths[p],
              "concat_cols: part shape " + shape_to_string(parts[p].shape()));
    }
  }
  std::vector<double> out(rows * total, 0.0);
  std::vector<Tensor> defined;
  std::vector<std::size_t> defined_offsets, defined_widths;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    if (!parts[p].defined()) continue;
    const auto v = parts[p].values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.begin() + r * widths[p], widths[p],
                  out.begin() + r * total + offsets[p]);
    defined.push_back(parts[p]);
    defined_offsets.push_back(offsets[p]);
    defined_widths.push_back(widths[p]);
  }
  return make_result({rows, total}, std::move(out), defined,
                     [defined_offsets, defined_widths, rows,
                      total](detail::Node& self) {
                       for (std::size_t p = 0; p < self.parents.size(); ++p) {
                         detail::Node& pn = parent(self, p);
                         if (!pn.requires_grad) continue;
                         auto& g = pn.grad_buffer();
                         const std::size_t w = defined_widths[p];
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < w; ++j)
                             g[r * w + j] +=
                                 self.grad[r * total + defined_offsets[p] + j];
                       }
                     });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  require_defined(a, "slice_cols");
  require(a.rank() == 2 && count >= 1 && start + count <= a.dim(1),
          "slice_cols: range out of bounds");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  const auto v = a.values();
  std::vector<double> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(v.begin() + r * cols + start, count, out.begin() + r * count);
  return make_result({rows, count}, std::move(out), {a},
                     [rows, cols, start, count](detail::Node& self) {
                       auto& g = parent(self, 0).grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < count; ++j)
                           g[r * cols + start + j] += self.grad[r * count + j];
                     });
}

Tensor add_n(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "add_n: no operands");
  for (const Tensor& p : parts) require_same_shape(parts.front(), p, "add_n");
  std::vector<double> out(parts.front().numel(), 0.0);
  for (const Tensor& p : parts) {
    const auto v = p.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  return make_result(parts.front().shape(), std::move(out), parts,
                     [](detail::Node& self) {
                       for (auto& pn : self.parents) {
                         if (!pn->requires_grad) continue;
                         auto& g = pn->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i];
                       }
                     });
}

Tensor mse_loss(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "mse_loss");
  return mean(squared_difference(x, y));
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  require_defined(logits, "cross_entropy");
  const auto z = logits.values();
  require(label < z.size(), "cross_entropy: label out of range");
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> prob(z.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    prob[i] = std::exp(z[i] - zmax);
    denom += prob[i];
  }
  for (double& p : prob) p /= denom;
  const double loss = -(z[label] - zmax - std::log(denom));
  return make_result({1}, {loss}, {logits},
                     [prob = std::move(prob), label](detail::Node& self) {
                       auto& g = parent(self, 0).grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += self.grad[0] *
                                 (prob[i] - (i == label ? 1.0 : 0.0));
                     });
}

// --- optimizer ------------------------------------------------------------

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0))
    throw ConfigError("decay_factor must lie in (0, 1]");
  if (decay_epoch < 1) throw ConfigError("decay_epoch must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

double SgdConfig::learning_rate_at(int epoch) const {
  return epoch >= decay_epoch ? learning_rate * decay_factor : learning_rate;
}

void sgd_step(std::span<Tensor> params, const SgdConfig& config, int epoch) {
  for (const Tensor& p : params) {
    if (!p.defined()) throw UsageError("sgd_step: undefined parameter");
    if (p.frozen()) throw UsageError("sgd_step: parameter is frozen");
    if (!p.has_grad()) throw UsageError("sgd_step: parameter has no gradient");
  }
  const double lr = config.learning_rate_at(epoch);
  for (Tensor& p : params) {
    auto v = p.mutable_values();
    const auto g = p.grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    p.clear_grad();
  }
}

// --- verification ---------------------------------------------------------

GradientCheckResult gradient_check(const std::function<Tensor()>& build,
                                   Tensor leaf, double epsilon) {
  require_defined(leaf, "gradient_check");
  if (!leaf.is_leaf()) throw UsageError("gradient_check: target is not a leaf");
  const bool had_rg = leaf.requires_grad();
  leaf.set_requires_grad(true);
  leaf.clear_grad();

  auto eval = [&]() {
    Tensor out = build();
    if (out.numel() != 1) throw UsageError("gradient_check: non-scalar output");
    const double v = out.item();
    if (!std::isfinite(v)) throw NumericError("gradient_check: non-finite output");
    return out;
  };

  Tensor out = eval();
  out.backward();
  std::vector<double> analytic(leaf.numel(), 0.0);
  if (leaf.has_grad()) {
    const auto g = leaf.grad();
    std::copy(g.begin(), g.end(), analytic.begin());
  }
  for (double g : analytic)
    if (!std::isfinite(g)) throw NumericError("gradient_check: non-finite gradient");
  leaf.clear_grad();

  GradientCheckResult result;
  auto values = leaf.mutable_values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + epsilon;
    const double plus = eval().item();
    values[i] = saved - epsilon;
    const double minus = eval().item();
    values[i] = saved;
    const double numeric = (plus - minus) / (2.0 * epsilon);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    result.max_relative_error = std::max(
        result.max_relative_error, std::abs(analytic[i] - numeric) / denom);
    ++result.entries_checked;
  }
  leaf.set_requires_grad(had_rg);
  return result;
}

// --- checkpoints ----------------------------------------------------------

namespace {

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(std::begin(bytes), std::end(bytes));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
bool read_le(std::istream& in, T& value) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) return false;
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(std::begin(bytes), std::end(bytes));
  std::memcpy(&value, bytes, sizeof(T));
  return true;
}

}  // namespace

void save_weights(const std::string& path,
                  const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write("PSTW", 4);
  write_le<std::uint32_t>(out, kWeightFormatVersion);
  for (const auto& [name, t] : tensors) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) write_le<std::uint64_t>(out, d);
    for (double v : t.values()) write_le<float>(out, static_cast<float>(v));
  }
  if (!out) throw FormatError("write failed: " + path);
}

std::vector<NamedTensor> load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "PSTW")
    throw FormatError(path + ": bad magic (expected PSTW)");
  std::uint32_t version = 0;
  if (!read_le(in, version)) throw FormatError(path + ": truncated header");
  if (version != kWeightFormatVersion)
    throw FormatError(path + ": unsupported PSTW version " +
                      std::to_string(version));
  std::vector<NamedTensor> tensors;
  std::uint32_t name_len = 0;
  while (read_le(in, name_len)) {
    std::string name(name_len, '\0');
    std::uint32_t rank = 0;
    if (!in.read(name.data(), name_len) || !read_le(in, rank) || rank == 0)
      throw FormatError(path + ": truncated tensor record");
    Shape shape(rank);
    for (auto& d : shape) {
      std::uint64_t v = 0;
      if (!read_le(in, v) || v == 0) throw FormatError(path + ": bad dims");
      d = static_cast<std::size_t>(v);
    }
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) {
      float f = 0.0F;
      if (!read_le(in, f)) throw FormatError(path + ": truncated values");
      v = f;
    }
    tensors.push_back({std::move(name), Tensor::from(std::move(shape),
                                                     std::move(values))});
  }
  return tensors;
}

}  // namespace pstae
