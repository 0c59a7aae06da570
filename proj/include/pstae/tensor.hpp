#pragma once

// Dense tensors with tape-free reverse-mode differentiation.
//
// A Tensor is a cheap handle to a graph node. Every op records its parents
// and a closure that pushes the node's gradient into them; `backward()` on a
// scalar walks the graph in reverse topological order. Nodes that do not
// depend on any requires_grad leaf keep no parents, so inference graphs are
// released as soon as intermediate handles go out of scope.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pstae/errors.hpp"

namespace pstae {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Uniform in +-sqrt(6 / (fan_in + fan_out)).
  static Tensor xavier_uniform(Shape shape, std::size_t fan_in,
                               std::size_t fan_out, std::mt19937_64& rng);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Direct write access; only meaningful for leaves (parameters, inputs).
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t flat) const { return values()[flat]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;

  /// Frozen parameters refuse optimizer updates.
  bool frozen() const;
  void set_frozen(bool value);

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad();

  /// Reverse pass from a scalar. Leaf gradients accumulate across calls.
  void backward() const;

  /// A new leaf holding a copy of the values, cut from the graph.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }

 private:
  friend struct detail::Node;
  friend Tensor make_result(Shape, std::vector<double>,
                            std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> backward);
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something is accumulated
  bool requires_grad = false;
  bool frozen = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};
}  // namespace detail

/// Builds an op result. `backward` receives the result node and must add its
/// contribution into `parents[i]->grad_buffer()` for parents that require grad.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward);

// --- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// a: [m, n] plus bias: [n], broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);
/// Subgradient at exactly 0 is 0.
Tensor relu(const Tensor& a);
/// Max over one axis. Ties route the gradient to the lowest index.
Tensor max_over_axis(const Tensor& a, std::size_t axis);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor square(const Tensor& a);
Tensor squared_difference(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& a, Shape shape);

/// Rows of a [n, c] picked by index; output [idx.size(), c].
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> idx);
/// out[i] = sum_j weights[i*k + j] * a[idx[i*k + j]] for a [n, c].
Tensor weighted_gather_rows(const Tensor& a,
                            std::span<const std::size_t> idx,
                            std::span<const double> weights, std::size_t k);
/// Concatenate [m, c_i] matrices along columns. Undefined tensors act as
/// zero blocks of width `widths[i]`.
Tensor concat_cols(const std::vector<Tensor>& parts,
                   const std::vector<std::size_t>& widths, std::size_t rows);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
/// Sum of a list of equally shaped tensors.
Tensor add_n(const std::vector<Tensor>& parts);

/// (1/N) * sum (x - y)^2 over all entries.
Tensor mse_loss(const Tensor& x, const Tensor& y);
/// Softmax cross-entropy of a logits vector [c] against a class index.
Tensor cross_entropy(const Tensor& logits, std::size_t label);

// --- optimizer ------------------------------------------------------------

struct SgdConfig {
  double learning_rate = 0.01;
  double decay_factor = 0.1;
  int decay_epoch = 10;
  int epochs = 15;
  int batch_size = 8;

  void validate() const;
  /// Single step decay: lr * decay_factor once epoch >= decay_epoch (1-based).
  double learning_rate_at(int epoch) const;
};

/// p <- p - lr(epoch) * grad, then clears grads.
void sgd_step(std::span<Tensor> params, const SgdConfig& config, int epoch);

// --- verification ---------------------------------------------------------

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t entries_checked = 0;
};

/// Central finite differences of `build()` with respect to every entry of
/// `leaf`, compared against reverse-mode gradients. Relative error uses the
/// denominator max(|analytic|, |numeric|, 1e-8).
GradientCheckResult gradient_check(const std::function<Tensor()>& build,
                                   Tensor leaf, double epsilon);

// --- checkpoints ----------------------------------------------------------

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

inline constexpr std::uint32_t kWeightFormatVersion = 1;

void save_weights(const std::string& path,
                  const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_weights(const std::string& path);

}  // namespace pstae
