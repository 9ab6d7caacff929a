#include "tsarank/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tsarank/error.hpp"
#include "tsarank/kernels.hpp"

namespace tsarank::ops {

namespace {

using kernels::Trans;

Tensor checked(Tensor t, const char* op) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, std::string(op) + " produced a non-finite value");
  }
  return t;
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
}

void push_grad(Tensor t, std::span<const double> delta) {
  if (t.requires_grad()) t.accumulate_grad(delta);
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw Error(ErrorCode::ShapeMismatch,
                "matmul: inner dimensions differ for " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  auto out = Tensor::zeros({m, n});
  kernels::gemm(m, n, k, a.values(), Trans::No, b.values(), Trans::No, out.mutable_values(), false);
  out = checked(out, "matmul");
  if (g.needs_grad({&a, &b})) {
    g.record(out, {a, b}, [a, b, m, n, k](std::span<const double> dc) mutable {
      if (a.requires_grad()) {
        std::vector<double> da(m * k);
        kernels::gemm(m, k, n, dc, Trans::No, b.values(), Trans::Yes, da, false);
        a.accumulate_grad(da);
      }
      if (b.requires_grad()) {
        std::vector<double> db(k * n);
        kernels::gemm(k, n, m, a.values(), Trans::Yes, dc, Trans::No, db, false);
        b.accumulate_grad(db);
      }
    });
  }
  return out;
}

Tensor transpose(Graph& g, const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  auto out = Tensor::zeros({n, m});
  auto o = out.mutable_values();
  auto x = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[j * m + i] = x[i * n + j];
  if (g.needs_grad({&a})) {
    g.record(out, {a}, [a, m, n](std::span<const double> d) mutable {
      std::vector<double> da(m * n);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) da[i * n + j] = d[j * m + i];
      a.accumulate_grad(da);
    });
  }
  return out;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto out = Tensor::zeros(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.at(i) + b.at(i);
  out = checked(out, "add");
  if (g.needs_grad({&a, &b})) {
    g.record(out, {a, b}, [a, b](std::span<const double> d) {
      push_grad(a, d);
      push_grad(b, d);
    });
  }
  return out;
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto out = Tensor::zeros(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.at(i) - b.at(i);
  out = checked(out, "sub");
  if (g.needs_grad({&a, &b})) {
    g.record(out, {a, b}, [a, b](std::span<const double> d) {
      push_grad(a, d);
      if (b.requires_grad()) {
        std::vector<double> nd(d.begin(), d.end());
        for (double& v : nd) v = -v;
        push_grad(b, nd);
      }
    });
  }
  return out;
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto out = Tensor::zeros(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.at(i) * b.at(i);
  out = checked(out, "mul");
  if (g.needs_grad({&a, &b})) {
    g.record(out, {a, b}, [a, b](std::span<const double> d) {
      const std::size_t n = d.size();
      if (a.requires_grad()) {
        std::vector<double> da(n);
        for (std::size_t i = 0; i < n; ++i) da[i] = d[i] * b.at(i);
        push_grad(a, da);
      }
      if (b.requires_grad()) {
        std::vector<double> db(n);
        for (std::size_t i = 0; i < n; ++i) db[i] = d[i] * a.at(i);
        push_grad(b, db);
      }
    });
  }
  return out;
}

Tensor scale(Graph& g, const Tensor& a, double factor) {
  auto out = Tensor::zeros(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.at(i) * factor;
  out = checked(out, "scale");
  if (g.needs_grad({&a})) {
    g.record(out, {a}, [a, factor](std::span<const double> d) {
      std::vector<double> da(d.begin(), d.end());
      for (double& v : da) v *= factor;
      push_grad(a, da);
    });
  }
  return out;
}

Tensor add_scalar(Graph& g, const Tensor& a, double value) {
  auto out = Tensor::zeros(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.at(i) + value;
  out = checked(out, "add_scalar");
  if (g.needs_grad({&a})) {
    g.record(out, {a}, [a](std::span<const double> d) { push_grad(a, d); });
  }
  return out;
}

Tensor add_row_bias(Graph& g, const Tensor& a, const Tensor& bias) {
  require_matrix(a, "add_row_bias");
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.size() != n) {
    throw Error(ErrorCode::ShapeMismatch,
                "add_row_bias: bias " + shape_string(bias.shape()) + " vs matrix " + shape_string(a.shape()));
  }
  auto out = Tensor::zeros(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = a.at(i * n + j) + bias.at(j);
  out = checked(out, "add_row_bias");
  if (g.needs_grad({&a, &bias})) {
    g.record(out, {a, bias}, [a, bias, m, n](std::span<const double> d) {
      push_grad(a, d);
      if (bias.requires_grad()) {
        std::vector<double> db(n, 0.0);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) db[j] += d[i * n + j];
        push_grad(bias, db);
      }
    });
  }
  return out;
}

Tensor exp(Graph& g, const Tensor& a) {
  auto out = Tensor::zeros(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::exp(a.at(i));
  out = checked(out, "exp");
  if (g.needs_grad({&a})) {
    g.record(out, {a}, [a, out](std::span<const double> d) {
      std::vector<double> da(d.size());
      for (std::size_t i = 0; i < d.size(); ++i) da[i] = d[i] * out.at(i);
      push_grad(a, da);
    });
  }
  return out;
}

Tensor log(Graph& g, const Tensor& a) {
  auto out = Tensor::zeros(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::log(a.at(i));
  out = checked(out, "log");
  if (g.needs_grad({&a})) {
    g.record(out, {a}, [a](std::span<const double> d) {
      std::vector<double> da(d.size());
      for (std::size_t i = 0; i < d.size(); ++i) da[i] = d[i] / a.at(i);
      push_grad(a, da);
    });
  }
  return out;
}

Tensor gelu(Graph& g, const Tensor& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double k = 0.044715;
  auto out = Tensor::zeros(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double x = a.at(i);
    o[i] = 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x)));
  }
  out = checked(out, "gelu");
  if (g.needs_grad({&a})) {
    g.record(out, {a}, [a](std::span<const double> d) {
      std::vector<double> da(d.size());
      for (std::size_t i = 0; i < d.size(); ++i) {
        const double x = a.at(i);
        const double t = std::tanh(c * (x + k * x * x * x));
        const double dt = (1.0 - t * t) * c * (1.0 + 3.0 * k * x * x);
        da[i] = d[i] * (0.5 * (1.0 + t) + 0.5 * x * dt);
      }
      push_grad(a, da);
    });
  }
  return out;
}

Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.size() != n || bias.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                                              shape_string(bias.shape()) + " vs input " + shape_string(x.shape()));
  }
  auto out = Tensor::zeros(x.shape());
  std::vector<double> xhat(m * n), inv_std(m);
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x.at(i * n + j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double c = x.at(i * n + j) - mu;
      var += c * c;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (x.at(i * n + j) - mu) * inv_std[i];
      o[i * n + j] = xhat[i * n + j] * gain.at(j) + bias.at(j);
    }
  }
  out = checked(out, "layer_norm");
  if (g.needs_grad({&x, &gain, &bias})) {
    g.record(out, {x, gain, bias},
             [x, gain, bias, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](std::span<const double> d) {
               if (gain.requires_grad() || bias.requires_grad()) {
                 std::vector<double> dg(n, 0.0), db(n, 0.0);
                 for (std::size_t i = 0; i < m; ++i)
                   for (std::size_t j = 0; j < n; ++j) {
                     dg[j] += d[i * n + j] * xhat[i * n + j];
                     db[j] += d[i * n + j];
                   }
                 push_grad(gain, dg);
                 push_grad(bias, db);
               }
               if (x.requires_grad()) {
                 std::vector<double> dx(m * n);
                 const double inv_n = 1.0 / static_cast<double>(n);
                 for (std::size_t i = 0; i < m; ++i) {
                   double sum_dy = 0.0, sum_dy_xhat = 0.0;
                   for (std::size_t j = 0; j < n; ++j) {
                     const double dy = d[i * n + j] * gain.at(j);
                     sum_dy += dy;
                     sum_dy_xhat += dy * xhat[i * n + j];
                   }
                   for (std::size_t j = 0; j < n; ++j) {
                     const double dy = d[i * n + j] * gain.at(j);
                     dx[i * n + j] = inv_std[i] * (dy - inv_n * sum_dy - xhat[i * n + j] * inv_n * sum_dy_xhat);
                   }
                 }
                 push_grad(x, dx);
               }
             });
  }
  return out;
}

Tensor log_softmax(Graph& g, const Tensor& logits, std::size_t axis) {
  const auto& shape = logits.shape();
  if (axis >= shape.size()) {
    throw Error(ErrorCode::InvalidAxis,
                "log_softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_string(shape));
  }
  // View as outer x len x inner; the axis runs with stride `inner`.
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];

  auto out = Tensor::zeros(shape);
  if (inner == 1) {
    kernels::log_softmax_rows(outer, len, logits.values(), out.mutable_values());
  } else {
    std::vector<double> line(len), res(len);
    auto o = out.mutable_values();
    for (std::size_t a = 0; a < outer; ++a)
      for (std::size_t b = 0; b < inner; ++b) {
        for (std::size_t l = 0; l < len; ++l) line[l] = logits.at((a * len + l) * inner + b);
        kernels::reference::log_softmax_rows(1, len, line, res);
        for (std::size_t l = 0; l < len; ++l) o[(a * len + l) * inner + b] = res[l];
      }
  }
  out = checked(out, "log_softmax");
  if (g.needs_grad({&logits})) {
    g.record(out, {logits}, [logits, out, outer, inner, len](std::span<const double> d) {
      // dx = dy - softmax * sum(dy) along the axis.
      std::vector<double> dx(d.size());
      for (std::size_t a = 0; a < outer; ++a)
        for (std::size_t b = 0; b < inner; ++b) {
          double total = 0.0;
          for (std::size_t l = 0; l < len; ++l) total += d[(a * len + l) * inner + b];
          for (std::size_t l = 0; l < len; ++l) {
            const std::size_t idx = (a * len + l) * inner + b;
            dx[idx] = d[idx] - std::exp(out.at(idx)) * total;
          }
        }
      push_grad(logits, dx);
    });
  }
  return out;
}

Tensor causal_softmax(Graph& g, const Tensor& scores) {
  require_matrix(scores, "causal_softmax");
  const std::size_t n = scores.rows();
  if (scores.cols() != n) {
    throw Error(ErrorCode::ShapeMismatch, "causal_softmax expects a square matrix, got " + shape_string(scores.shape()));
  }
  auto out = Tensor::zeros(scores.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < n; ++i) {
    double mx = scores.at(i * n);
    for (std::size_t j = 1; j <= i; ++j) mx = std::max(mx, scores.at(i * n + j));
    double total = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      o[i * n + j] = std::exp(scores.at(i * n + j) - mx);
      total += o[i * n + j];
    }
    for (std::size_t j = 0; j <= i; ++j) o[i * n + j] /= total;
  }
  out = checked(out, "causal_softmax");
  if (g.needs_grad({&scores})) {
    g.record(out, {scores}, [scores, out, n](std::span<const double> d) {
      std::vector<double> dx(n * n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j <= i; ++j) dot += d[i * n + j] * out.at(i * n + j);
        for (std::size_t j = 0; j <= i; ++j) dx[i * n + j] = out.at(i * n + j) * (d[i * n + j] - dot);
      }
      push_grad(scores, dx);
    });
  }
  return out;
}

Tensor slice_rows(Graph& g, const Tensor& a, std::size_t begin, std::size_t count) {
  require_matrix(a, "slice_rows");
  const std::size_t n = a.cols();
  if (begin + count > a.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "slice_rows [" + std::to_string(begin) + ", " +
                                              std::to_string(begin + count) + ") out of " + shape_string(a.shape()));
  }
  std::vector<double> v(a.values().begin() + static_cast<std::ptrdiff_t>(begin * n),
                        a.values().begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
  auto out = Tensor::from({count, n}, std::move(v));
  if (g.needs_grad({&a})) {
    g.record(out, {a}, [a, begin, n](std::span<const double> d) mutable {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < d.size(); ++i) ga[begin * n + i] += d[i];
    });
  }
  return out;
}

Tensor slice_cols(Graph& g, const Tensor& a, std::size_t begin, std::size_t count) {
  require_matrix(a, "slice_cols");
  const std::size_t m = a.rows(), n = a.cols();
  if (begin + count > n) {
    throw Error(ErrorCode::ShapeMismatch, "slice_cols [" + std::to_string(begin) + ", " +
                                              std::to_string(begin + count) + ") out of " + shape_string(a.shape()));
  }
  auto out = Tensor::zeros({m, count});
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) o[i * count + j] = a.at(i * n + begin + j);
  if (g.needs_grad({&a})) {
    g.record(out, {a}, [a, begin, count, m, n](std::span<const double> d) mutable {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) ga[i * n + begin + j] += d[i * count + j];
    });
  }
  return out;
}

Tensor concat_cols(Graph& g, std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorCode::InvalidArgument, "concat_cols of nothing");
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) {
      throw Error(ErrorCode::ShapeMismatch, "concat_cols: row counts differ, " + shape_string(parts.front().shape()) +
                                                " vs " + shape_string(p.shape()));
    }
    total += p.cols();
  }
  auto out = Tensor::zeros({m, total});
  auto o = out.mutable_values();
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) o[i * total + off + j] = p.at(i * w + j);
    off += w;
  }
  if (g.needs_grad(parts)) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    g.record(out, inputs, [inputs, m, total](std::span<const double> d) {
      std::size_t off = 0;
      for (const auto& p : inputs) {
        const std::size_t w = p.cols();
        if (p.requires_grad()) {
          std::vector<double> dp(m * w);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) dp[i * w + j] = d[i * total + off + j];
          push_grad(p, dp);
        }
        off += w;
      }
    });
  }
  return out;
}

Tensor gather_rows(Graph& g, const Tensor& table, std::span<const std::size_t> ids) {
  require_matrix(table, "gather_rows");
  const std::size_t n = table.cols();
  auto out = Tensor::zeros({ids.size(), n});
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= table.rows()) {
      throw Error(ErrorCode::ShapeMismatch, "gather_rows: id " + std::to_string(ids[i]) + " out of " +
                                                shape_string(table.shape()));
    }
    std::copy_n(table.values().begin() + static_cast<std::ptrdiff_t>(ids[i] * n), n,
                o.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  if (g.needs_grad({&table})) {
    g.record(out, {table}, [table, ids = std::vector<std::size_t>(ids.begin(), ids.end()), n](std::span<const double> d) mutable {
      auto gt = table.mutable_grad();
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) gt[ids[i] * n + j] += d[i * n + j];
    });
  }
  return out;
}

Tensor select(Graph& g, const Tensor& a, std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
  require_matrix(a, "select");
  if (rows.size() != cols.size()) {
    throw Error(ErrorCode::ShapeMismatch, "select: " + std::to_string(rows.size()) + " rows vs " +
                                              std::to_string(cols.size()) + " cols");
  }
  const std::size_t n = a.cols();
  auto out = Tensor::zeros({rows.size()});
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.rows() || cols[i] >= n) {
      throw Error(ErrorCode::ShapeMismatch, "select: (" + std::to_string(rows[i]) + ", " + std::to_string(cols[i]) +
                                                ") out of " + shape_string(a.shape()));
    }
    o[i] = a.at(rows[i] * n + cols[i]);
  }
  if (g.needs_grad({&a})) {
    std::vector<std::size_t> flat(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) flat[i] = rows[i] * n + cols[i];
    g.record(out, {a}, [a, flat = std::move(flat)](std::span<const double> d) mutable {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < flat.size(); ++i) ga[flat[i]] += d[i];
    });
  }
  return out;
}

Tensor stack(Graph& g, std::span<const Tensor> scalars) {
  std::vector<double> v;
  v.reserve(scalars.size());
  for (const auto& s : scalars) v.push_back(s.item());
  auto out = Tensor::from({scalars.size()}, std::move(v));
  if (g.needs_grad(scalars)) {
    std::vector<Tensor> inputs(scalars.begin(), scalars.end());
    g.record(out, inputs, [inputs](std::span<const double> d) {
      for (std::size_t i = 0; i < inputs.size(); ++i) push_grad(inputs[i], d.subspan(i, 1));
    });
  }
  return out;
}

Tensor element(Graph& g, const Tensor& a, std::size_t index) {
  if (index >= a.size()) {
    throw Error(ErrorCode::ShapeMismatch, "element " + std::to_string(index) + " out of " + shape_string(a.shape()));
  }
  auto out = Tensor::scalar(a.at(index));
  if (g.needs_grad({&a})) {
    g.record(out, {a}, [a, index](std::span<const double> d) mutable { a.mutable_grad()[index] += d[0]; });
  }
  return out;
}

Tensor sum(Graph& g, const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  auto out = checked(Tensor::scalar(total), "sum");
  if (g.needs_grad({&a})) {
    g.record(out, {a}, [a](std::span<const double> d) mutable {
      auto ga = a.mutable_grad();
      for (double& v : ga) v += d[0];
    });
  }
  return out;
}

Tensor mean(Graph& g, const Tensor& a) {
  if (a.size() == 0) throw Error(ErrorCode::EmptyInput, "mean of an empty tensor");
  return scale(g, sum(g, a), 1.0 / static_cast<double>(a.size()));
}

}  // namespace tsarank::ops
