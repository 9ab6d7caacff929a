#include "tsarank/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "tsarank/error.hpp"

namespace tsarank {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->values.assign(shape_size(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw Error(ErrorCode::ShapeMismatch, "shape " + shape_string(shape) + " holds " +
                                              std::to_string(shape_size(shape)) + " values, got " +
                                              std::to_string(values.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw Error(ErrorCode::ShapeMismatch, "rows() on non-matrix " + shape_string(shape()));
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw Error(ErrorCode::ShapeMismatch, "cols() on non-matrix " + shape_string(shape()));
  return impl_->shape[1];
}

double Tensor::item() const {
  if (size() != 1) throw Error(ErrorCode::NonScalarLoss, "item() on tensor of shape " + shape_string(shape()));
  return impl_->values[0];
}

std::span<const double> Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() const { impl_->grad.assign(impl_->values.size(), 0.0); }

void Tensor::accumulate_grad(std::span<const double> delta) const {
  auto& g = impl_->grad;
  if (g.empty()) g.assign(impl_->values.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<detail::TensorImpl>(*impl_);
  return Tensor(std::move(impl));
}

bool Graph::needs_grad(std::initializer_list<const Tensor*> inputs) const {
  if (!recording()) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

bool Graph::needs_grad(std::span<const Tensor> inputs) const {
  if (!recording()) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

void Graph::record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn fn) {
  Tensor out = output;
  out.set_requires_grad(true);
  nodes_.push_back(Node{std::move(out), std::move(inputs), std::move(fn)});
}

void Graph::clear_intermediate_grads() {
  for (auto& node : nodes_) node.output.clear_grad();
}

void backward(Graph& graph, const Tensor& loss) {
  if (loss.size() != 1) {
    throw Error(ErrorCode::NonScalarLoss, "backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  graph.clear_intermediate_grads();
  Tensor seed = loss;
  const double one = 1.0;
  seed.accumulate_grad(std::span<const double>(&one, 1));
  for (auto it = graph.nodes_.rbegin(); it != graph.nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->fn(it->output.grad());
  }
}

}  // namespace tsarank
