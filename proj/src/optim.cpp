#include "tsarank/optim.hpp"

#include <cmath>
#include <string>

#include "tsarank/error.hpp"

namespace tsarank {

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  if (!(options_.learning_rate >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "Adam learning rate must be >= 0");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::update(std::size_t index, Tensor& param, std::span<const double> grad, double c1, double c2) {
  auto values = param.mutable_values();
  auto& m = m_[index];
  auto& v = v_[index];
  const double lr = options_.learning_rate;
  for (std::size_t i = 0; i < values.size(); ++i) {
    m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * grad[i];
    v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    values[i] -= lr * mhat / (std::sqrt(vhat) + options_.epsilon);
  }
}

void Adam::step() {
  ++step_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    update(i, params_[i], params_[i].grad(), c1, c2);
  }
}

void Adam::step(std::span<Tensor> params, std::span<const std::vector<double>> grads) {
  if (params.size() != params_.size() || grads.size() != params_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "Adam: expected " + std::to_string(params_.size()) + " parameters, got " +
                                              std::to_string(params.size()) + " params and " +
                                              std::to_string(grads.size()) + " grads");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != m_[i].size() || grads[i].size() != m_[i].size()) {
      throw Error(ErrorCode::ShapeMismatch, "Adam: parameter " + std::to_string(i) + " has shape " +
                                                shape_string(params[i].shape()) + " but state holds " +
                                                std::to_string(m_[i].size()) + " values");
    }
  }
  ++step_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) update(i, params[i], grads[i], c1, c2);
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& p : params)
      for (double& g : p.mutable_grad()) g *= factor;
  }
  return norm;
}

}  // namespace tsarank
