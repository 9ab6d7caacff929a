#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tsarank {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a gradient is written
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// Tensor is a handle: copies share storage, and const applies to the handle,
/// not the buffers. Use `clone()` for a deep copy.
/// Tensors produced by ops are never mutated afterwards, so a tensor without
/// grad can be read from any number of threads.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->values.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return impl_->values; }
  std::span<double> mutable_values() const { return impl_->values; }
  double item() const;
  double at(std::size_t i) const { return impl_->values[i]; }
  double at(std::size_t r, std::size_t c) const { return impl_->values[r * cols() + c]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) const { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient view; zeros when none has been written yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad() const;
  void zero_grad() const;
  void clear_grad() const { impl_->grad.clear(); }

  /// Adds `delta` elementwise into the gradient buffer, allocating it on demand.
  void accumulate_grad(std::span<const double> delta) const;

  Tensor clone() const;
  bool same(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Record of differentiable operations in execution order. Execution order is
/// a valid topological order, since an op can only consume tensors that exist.
///
/// A graph in NoGrad mode records nothing; ops then only compute values.
class Graph {
 public:
  enum class Mode { Record, NoGrad };

  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  explicit Graph(Mode mode = Mode::Record) : mode_(mode) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  bool recording() const noexcept { return mode_ == Mode::Record; }

  /// True if an op over `inputs` must be recorded.
  bool needs_grad(std::initializer_list<const Tensor*> inputs) const;
  bool needs_grad(std::span<const Tensor> inputs) const;

  void record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn fn);

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Drops the gradients held by every intermediate result.
  void clear_intermediate_grads();

 private:
  friend void backward(Graph& graph, const Tensor& loss);

  struct Node {
    Tensor output;
    std::vector<Tensor> inputs;
    BackwardFn fn;
  };

  Mode mode_;
  std::vector<Node> nodes_;
};

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate
/// additively; intermediate gradients are reset first, so two calls on the
/// same graph with leaf grads zeroed in between produce identical results.
void backward(Graph& graph, const Tensor& loss);

}  // namespace tsarank
