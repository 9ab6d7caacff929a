#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "tsarank/error.hpp"
#include "tsarank/optim.hpp"

namespace tsarank {
namespace {

TEST(Adam, MatchesHandRecurrence) {
  Tensor p = Tensor::from({3}, {0.5, -1.0, 2.0}, true);
  Adam adam({p}, AdamOptions{0.01, 0.9, 0.999, 1e-8});
  std::vector<double> x = {0.5, -1.0, 2.0}, m(3, 0.0), v(3, 0.0);
  const std::vector<std::vector<double>> grads = {{0.1, -0.2, 0.3}, {1.0, 0.0, -0.5}, {-0.3, 0.4, 0.05}};
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    p.zero_grad();
    p.accumulate_grad(grads[t - 1]);
    adam.step();
    for (std::size_t i = 0; i < 3; ++i) {
      const double g = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      x[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_DOUBLE_EQ(p.at(i), x[i]);
    }
  }
  EXPECT_EQ(adam.step_count(), 3u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::from({2}, {0.0, 0.0}, true);
  Adam adam({p}, AdamOptions{0.1});
  p.accumulate_grad(std::vector<double>{5.0, -0.01});
  adam.step();
  EXPECT_NEAR(p.at(0), -0.1, 1e-8);
  EXPECT_NEAR(p.at(1), 0.1, 1e-5);
}

TEST(Adam, ZeroLearningRateLeavesParameters) {
  Tensor p = Tensor::from({2}, {1.5, -2.5}, true);
  Adam adam({p}, AdamOptions{0.0});
  p.accumulate_grad(std::vector<double>{3.0, 4.0});
  adam.step();
  EXPECT_EQ(p.at(0), 1.5);
  EXPECT_EQ(p.at(1), -2.5);
}

TEST(Adam, ExplicitStepChecksShapes) {
  Tensor p = Tensor::from({2}, {1.0, 2.0});
  Adam adam({p}, AdamOptions{});
  std::vector<Tensor> params = {p};
  std::vector<std::vector<double>> grads = {{1.0}};
  EXPECT_THROW(adam.step(params, grads), Error);
  EXPECT_THROW(Adam({p}, AdamOptions{-1.0}), Error);
}

TEST(ClipGradNorm, ScalesOnlyAboveThreshold) {
  Tensor a = Tensor::from({2}, {0, 0}, true), b = Tensor::from({1}, {0}, true);
  a.accumulate_grad(std::vector<double>{3.0, 0.0});
  b.accumulate_grad(std::vector<double>{4.0});
  std::vector<Tensor> params = {a, b};
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(a.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(a.grad()[0], 0.6);
  EXPECT_DOUBLE_EQ(b.grad()[0], 0.8);
}

}  // namespace
}  // namespace tsarank
