#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tsarank/tensor.hpp"

namespace tsarank {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed list of parameters.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  /// Applies one update from each parameter's current grad.
  void step();

  /// Explicit form: updates `params` in place from `grads`.
  void step(std::span<Tensor> params, std::span<const std::vector<double>> grads);

  std::size_t step_count() const noexcept { return step_; }
  const AdamOptions& options() const noexcept { return options_; }
  std::span<const std::vector<double>> first_moments() const { return m_; }
  std::span<const std::vector<double>> second_moments() const { return v_; }

 private:
  void update(std::size_t index, Tensor& param, std::span<const double> grad, double c1, double c2);

  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t step_ = 0;
};

/// Scales every grad so that the global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

}  // namespace tsarank
