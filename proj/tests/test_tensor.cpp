#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "tsarank/error.hpp"
#include "tsarank/kernels.hpp"
#include "tsarank/ops.hpp"
#include "tsarank/rng.hpp"
#include "tsarank/tensor.hpp"

namespace tsarank {
namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = scale * standard_normal(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Checks d(loss)/d(input) for every entry of every input by central differences.
void expect_gradients(std::vector<Tensor> inputs, const std::function<Tensor(Graph&, std::vector<Tensor>&)>& f,
                      double tol = 1e-6) {
  for (auto& t : inputs) t.zero_grad();
  {
    Graph g(Graph::Mode::Record);
    backward(g, f(g, inputs));
  }
  const double h = 1e-5;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    const std::vector<double> analytic(inputs[ti].grad().begin(), inputs[ti].grad().end());
    auto values = inputs[ti].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      Graph g(Graph::Mode::NoGrad);
      values[i] = orig + h;
      const double up = f(g, inputs).item();
      values[i] = orig - h;
      const double down = f(g, inputs).item();
      values[i] = orig;
      const double numeric = (up - down) / (2 * h);
      EXPECT_NEAR(analytic[i], numeric, tol * std::max(1.0, std::abs(numeric))) << "input " << ti << " entry " << i;
    }
  }
}

TEST(Tensor, ConstructorsAndShape) {
  const Tensor t = Tensor::full({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_DOUBLE_EQ(t.at(1, 2), 1.5);
  EXPECT_THROW(Tensor::from({2, 2}, {1.0, 2.0}), Error);
  EXPECT_EQ(shape_string({2, 3}), "[2, 3]");
}

TEST(Tensor, CloneIsDeep) {
  Tensor a = Tensor::from({2}, {1.0, 2.0});
  Tensor b = a.clone();
  b.mutable_values()[0] = 5.0;
  EXPECT_DOUBLE_EQ(a.at(0), 1.0);
  Tensor c = a;
  c.mutable_values()[0] = 7.0;
  EXPECT_DOUBLE_EQ(a.at(0), 7.0);
}

TEST(Ops, MatmulMatchesNaiveLoops) {
  const Tensor a = random_tensor({5, 7}, 1);
  const Tensor b = random_tensor({7, 3}, 2);
  Graph g(Graph::Mode::NoGrad);
  const Tensor c = ops::matmul(g, a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 7; ++k) s += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(c.at(i, j), s, 1e-12);
    }
}

TEST(Ops, MatmulShapeMismatchThrows) {
  Graph g(Graph::Mode::NoGrad);
  try {
    ops::matmul(g, Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Ops, LogSoftmaxKnownValues) {
  Graph g(Graph::Mode::NoGrad);
  const Tensor lp = ops::log_softmax(g, Tensor::from({1, 2}, {0.0, std::log(3.0)}), 1);
  EXPECT_NEAR(lp.at(0), std::log(0.25), 1e-15);
  EXPECT_NEAR(lp.at(1), std::log(0.75), 1e-15);
}

TEST(Ops, LogSoftmaxIsShiftInvariantAndStable) {
  Graph g(Graph::Mode::NoGrad);
  const Tensor a = ops::log_softmax(g, Tensor::from({1, 3}, {1.0, 2.0, 3.0}), 1);
  const Tensor b = ops::log_softmax(g, Tensor::from({1, 3}, {1001.0, 1002.0, 1003.0}), 1);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.at(i), b.at(i), 1e-12);
}

TEST(Ops, LogSoftmaxAxisZeroAndInvalidAxis) {
  Graph g(Graph::Mode::NoGrad);
  const Tensor x = Tensor::from({2, 2}, {0.0, 1.0, std::log(3.0), 1.0});
  const Tensor lp = ops::log_softmax(g, x, 0);
  EXPECT_NEAR(lp.at(0, 0), std::log(0.25), 1e-15);
  EXPECT_NEAR(lp.at(1, 0), std::log(0.75), 1e-15);
  EXPECT_NEAR(lp.at(0, 1), std::log(0.5), 1e-15);
  try {
    ops::log_softmax(g, x, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidAxis);
  }
}

TEST(Ops, NonFiniteIsReported) {
  Graph g(Graph::Mode::NoGrad);
  try {
    ops::log(g, Tensor::from({1}, {-1.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFinite);
  }
}

TEST(Autodiff, NonScalarLossThrows) {
  Graph g(Graph::Mode::Record);
  const Tensor x = random_tensor({2, 2}, 3);
  try {
    backward(g, ops::scale(g, x, 2.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonScalarLoss);
  }
}

TEST(Autodiff, LeafGradientsAccumulateAcrossBackwardCalls) {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  for (int i = 0; i < 2; ++i) {
    Graph g(Graph::Mode::Record);
    backward(g, ops::sum(g, ops::mul(g, x, x)));
  }
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 8.0);
  x.zero_grad();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
}

TEST(Autodiff, RepeatedBackwardOnOneGraphIsStable) {
  Tensor x = Tensor::from({3}, {0.5, -1.0, 2.0}, true);
  Graph g(Graph::Mode::Record);
  const Tensor loss = ops::sum(g, ops::exp(g, ops::scale(g, x, 0.5)));
  backward(g, loss);
  const std::vector<double> first(x.grad().begin(), x.grad().end());
  x.zero_grad();
  backward(g, loss);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], first[i]);
}

TEST(Autodiff, NoGradModeRecordsNothing) {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  Graph g(Graph::Mode::NoGrad);
  const Tensor y = ops::sum(g, ops::mul(g, x, x));
  EXPECT_FALSE(y.requires_grad());
}

TEST(Gradients, ElementwiseAndReductions) {
  expect_gradients({random_tensor({2, 3}, 4), random_tensor({2, 3}, 5)}, [](Graph& g, std::vector<Tensor>& in) {
    Tensor a = ops::add(g, ops::mul(g, in[0], in[1]), ops::sub(g, in[0], ops::scale(g, in[1], 0.3)));
    a = ops::gelu(g, ops::add_scalar(g, a, 0.1));
    return ops::mean(g, ops::exp(g, ops::scale(g, a, 0.2)));
  });
}

TEST(Gradients, LogOfPositive) {
  Tensor x = random_tensor({4}, 6);
  for (auto& v : x.mutable_values()) v = 0.5 + std::abs(v);
  expect_gradients({x}, [](Graph& g, std::vector<Tensor>& in) { return ops::sum(g, ops::log(g, in[0])); });
}

TEST(Gradients, MatmulTransposeBias) {
  expect_gradients({random_tensor({3, 4}, 7), random_tensor({2, 4}, 8), random_tensor({2}, 9)},
                   [](Graph& g, std::vector<Tensor>& in) {
                     const Tensor y = ops::add_row_bias(g, ops::matmul(g, in[0], ops::transpose(g, in[1])), in[2]);
                     return ops::sum(g, ops::mul(g, y, y));
                   });
}

TEST(Gradients, LayerNorm) {
  expect_gradients({random_tensor({3, 5}, 10), random_tensor({5}, 11), random_tensor({5}, 12)},
                   [](Graph& g, std::vector<Tensor>& in) {
                     const Tensor y = ops::layer_norm(g, in[0], in[1], in[2]);
                     return ops::sum(g, ops::mul(g, y, ops::exp(g, ops::scale(g, y, 0.1))));
                   });
}

TEST(Gradients, LogSoftmaxBothAxes) {
  const Tensor w = random_tensor({3, 4}, 13);
  for (std::size_t axis : {0u, 1u}) {
    expect_gradients({random_tensor({3, 4}, 14)}, [&](Graph& g, std::vector<Tensor>& in) {
      return ops::sum(g, ops::mul(g, ops::log_softmax(g, in[0], axis), w));
    });
  }
}

TEST(Gradients, CausalSoftmax) {
  const Tensor w = random_tensor({4, 4}, 15);
  expect_gradients({random_tensor({4, 4}, 16)}, [&](Graph& g, std::vector<Tensor>& in) {
    return ops::sum(g, ops::mul(g, ops::causal_softmax(g, in[0]), w));
  });
}

TEST(Ops, CausalSoftmaxMasksFuture) {
  Graph g(Graph::Mode::NoGrad);
  const Tensor p = ops::causal_softmax(g, random_tensor({3, 3}, 17));
  EXPECT_DOUBLE_EQ(p.at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(p.at(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(p.at(1, 2), 0.0);
  EXPECT_NEAR(p.at(2, 0) + p.at(2, 1) + p.at(2, 2), 1.0, 1e-15);
}

TEST(Gradients, SlicingGatherSelectStack) {
  expect_gradients({random_tensor({4, 6}, 18), random_tensor({5, 3}, 19)}, [](Graph& g, std::vector<Tensor>& in) {
    const Tensor a = ops::slice_rows(g, in[0], 1, 2);
    const Tensor b = ops::slice_cols(g, in[0], 2, 3);
    const Tensor parts[] = {a, ops::slice_rows(g, b, 0, 2)};
    const Tensor cat = ops::concat_cols(g, parts);
    const std::size_t ids[] = {4, 0, 4};
    const Tensor gathered = ops::gather_rows(g, in[1], ids);
    const std::size_t rows[] = {0, 2, 1};
    const std::size_t cols[] = {1, 0, 2};
    const Tensor sel = ops::select(g, gathered, rows, cols);
    const Tensor scalars[] = {ops::sum(g, ops::mul(g, cat, cat)), ops::element(g, sel, 1), ops::sum(g, sel)};
    return ops::sum(g, ops::mul(g, ops::stack(g, scalars), ops::stack(g, scalars)));
  });
}

TEST(Kernels, ParallelGemmMatchesReferenceBitForBit) {
  using kernels::Trans;
  for (auto [m, n, k] : {std::tuple{3ul, 5ul, 7ul}, std::tuple{64ul, 96ul, 80ul}}) {
    for (Trans ta : {Trans::No, Trans::Yes})
      for (Trans tb : {Trans::No, Trans::Yes}) {
        const Tensor a = random_tensor({m * k}, 20);
        const Tensor b = random_tensor({k * n}, 21);
        std::vector<double> c1(m * n, 0.5), c2(m * n, 0.5);
        kernels::gemm(m, n, k, a.values(), ta, b.values(), tb, c1, true);
        kernels::reference::gemm(m, n, k, a.values(), ta, b.values(), tb, c2, true);
        EXPECT_EQ(c1, c2);
      }
  }
}

TEST(Kernels, ParallelLogSoftmaxMatchesReference) {
  const Tensor x = random_tensor({300 * 260}, 22, 3.0);
  std::vector<double> a(x.size()), b(x.size());
  kernels::log_softmax_rows(300, 260, x.values(), a);
  kernels::reference::log_softmax_rows(300, 260, x.values(), b);
  EXPECT_EQ(a, b);
}

}  // namespace
}  // namespace tsarank
