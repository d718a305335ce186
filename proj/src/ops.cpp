#include "rmtbvqa/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>

#include "rmtbvqa/errors.hpp"

namespace rmtbvqa {

using detail::make_result;
using detail::Node;

namespace {

std::atomic<bool> g_matmul_fault{false};

void require_matrix(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
  if (t.ndim() != 2) {
    throw ShapeError(std::string(op) + ": expected matrix, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

bool wants(Node& n, std::size_t i) { return n.parents[i]->requires_grad; }

// Vectors may come as [n] or [1 x n].
std::size_t vector_length(const Tensor& t, const char* op) {
  if (t.ndim() == 1) return t.shape()[0];
  if (t.ndim() == 2 && t.shape()[0] == 1) return t.shape()[1];
  throw ShapeError(std::string(op) + ": expected vector, got " + shape_str(t.shape()));
}

template <class F, class DF>
Tensor unary(const char* op, const Tensor& a, F f, DF df) {
  std::vector<Real> out(a.numel());
  auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Real>(f(double(in[i])));
  return make_result(op, a.shape(), std::move(out), {a}, [df](Node& n) {
    Node& p = parent(n, 0);
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += static_cast<Real>(n.grad[i] * df(double(p.value[i]), double(n.value[i])));
    }
  });
}

}  // namespace

namespace testing_hooks {
void set_matmul_grad_fault(bool enabled) { g_matmul_fault = enabled; }
bool matmul_grad_fault() { return g_matmul_fault; }
}  // namespace testing_hooks

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dims differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<Real> out(m * n);
  std::vector<double> acc(n);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = 0; t < k; ++t) {
      const double av = A[i * k + t];
      const Real* brow = &B[t * n];
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = static_cast<Real>(acc[j]);
  }
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& node) {
    Node& pa = parent(node, 0);
    Node& pb = parent(node, 1);
    const auto& G = node.grad;
    if (wants(node, 0)) {
      const double fault = g_matmul_fault ? 1.1 : 1.0;
      auto& ga = pa.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t t = 0; t < k; ++t) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += double(G[i * n + j]) * pb.value[t * n + j];
          ga[i * k + t] += static_cast<Real>(s * fault);
        }
      }
    }
    if (wants(node, 1)) {
      auto& gb = pb.grad_buffer();
      std::vector<double> acc(n);
      for (std::size_t t = 0; t < k; ++t) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          const double av = pa.value[i * k + t];
          for (std::size_t j = 0; j < n; ++j) acc[j] += av * G[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) gb[t * n + j] += static_cast<Real>(acc[j]);
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<Real> out(m * n);
  auto A = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  return make_result("transpose", {n, m}, std::move(out), {a}, [m, n](Node& node) {
    auto& g = parent(node, 0).grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += node.grad[j * m + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return make_result("reshape", std::move(shape), a.to_vector(), {a}, [](Node& node) {
    auto& g = parent(node, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<Real> out(a.numel());
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& node) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!wants(node, p)) continue;
      auto& g = parent(node, p).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<Real> out(a.numel());
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& node) {
    if (wants(node, 0)) {
      auto& g = parent(node, 0).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
    }
    if (wants(node, 1)) {
      auto& g = parent(node, 1).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= node.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<Real> out(a.numel());
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& node) {
    Node& pa = parent(node, 0);
    Node& pb = parent(node, 1);
    if (wants(node, 0)) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i] * pb.value[i];
    }
    if (wants(node, 1)) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, Real s) {
  std::vector<Real> out(a.numel());
  auto A = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * s;
  return make_result("scale", a.shape(), std::move(out), {a}, [s](Node& node) {
    auto& g = parent(node, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i] * s;
  });
}

Tensor add_row(const Tensor& a, const Tensor& b) {
  require_matrix(a, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  if (vector_length(b, "add_row") != n) {
    throw ShapeError("add_row: bias " + shape_str(b.shape()) + " vs " + shape_str(a.shape()));
  }
  std::vector<Real> out(m * n);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = A[i * n + j] + B[j];
  return make_result("add_row", {m, n}, std::move(out), {a, b}, [m, n](Node& node) {
    if (wants(node, 0)) {
      auto& g = parent(node, 0).grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
    }
    if (wants(node, 1)) {
      auto& g = parent(node, 1).grad_buffer();
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += node.grad[i * n + j];
        g[j] += static_cast<Real>(s);
      }
    }
  });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [](double x, double) {
        return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
      });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (Real v : a.data()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input");
  }
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor logaddexp(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "logaddexp");
  std::vector<Real> out(a.numel());
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = A[i], y = B[i];
    out[i] = static_cast<Real>(std::max(x, y) + std::log1p(std::exp(-std::abs(x - y))));
  }
  return make_result("logaddexp", a.shape(), std::move(out), {a, b}, [](Node& node) {
    Node& pa = parent(node, 0);
    Node& pb = parent(node, 1);
    for (std::size_t i = 0; i < node.value.size(); ++i) {
      const double x = pa.value[i], y = pb.value[i];
      // d/dx = sigmoid(x - y)
      const double sx = 1.0 / (1.0 + std::exp(y - x));
      if (wants(node, 0)) pa.accumulate(i, static_cast<Real>(node.grad[i] * sx));
      if (wants(node, 1)) pb.accumulate(i, static_cast<Real>(node.grad[i] * (1.0 - sx)));
    }
  });
}

Tensor softmax_rows(const Tensor& a) {
  require_matrix(a, "softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<Real> out(m * n);
  auto A = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    const Real* row = &A[i * n];
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    std::vector<double> e(n);
    for (std::size_t j = 0; j < n; ++j) s += (e[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = static_cast<Real>(e[j] / s);
  }
  return make_result("softmax_rows", {m, n}, std::move(out), {a}, [m, n](Node& node) {
    auto& g = parent(node, 0).grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += double(node.grad[i * n + j]) * node.value[i * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        g[i * n + j] += static_cast<Real>(node.value[i * n + j] * (node.grad[i * n + j] - dot));
      }
    }
  });
}

Tensor logsumexp_rows(const Tensor& a, const std::vector<Real>& mask) {
  require_matrix(a, "logsumexp_rows");
  const std::size_t m = a.rows(), n = a.cols();
  if (mask.size() != m * n) throw ShapeError("logsumexp_rows: mask size mismatch");
  std::vector<Real> out(m, 0.0);
  auto A = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (mask[i * n + j] != 0.0) mx = std::max(mx, double(A[i * n + j]));
    if (!std::isfinite(mx)) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (mask[i * n + j] != 0.0) s += std::exp(A[i * n + j] - mx);
    out[i] = static_cast<Real>(mx + std::log(s));
  }
  return make_result("logsumexp_rows", {m, 1}, std::move(out), {a},
                     [m, n, mask](Node& node) {
                       Node& p = parent(node, 0);
                       auto& g = p.grad_buffer();
                       for (std::size_t i = 0; i < m; ++i) {
                         // Recompute weights against the stored lse in double.
                         double mx = -std::numeric_limits<double>::infinity();
                         for (std::size_t j = 0; j < n; ++j)
                           if (mask[i * n + j] != 0.0) mx = std::max(mx, double(p.value[i * n + j]));
                         if (!std::isfinite(mx)) continue;
                         double s = 0.0;
                         for (std::size_t j = 0; j < n; ++j)
                           if (mask[i * n + j] != 0.0) s += std::exp(p.value[i * n + j] - mx);
                         for (std::size_t j = 0; j < n; ++j) {
                           if (mask[i * n + j] == 0.0) continue;
                           const double w = std::exp(p.value[i * n + j] - mx) / s;
                           g[i * n + j] += static_cast<Real>(node.grad[i] * w);
                         }
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps) {
  require_matrix(x, "layer_norm");
  const std::size_t m = x.rows(), d = x.cols();
  if (vector_length(gain, "layer_norm") != d || vector_length(bias, "layer_norm") != d) {
    throw ShapeError("layer_norm: gain/bias length must equal " + std::to_string(d));
  }
  std::vector<Real> out(m * d);
  // Normalized values and inverse std kept for backward.
  std::vector<double> xhat(m * d), inv_std(m);
  auto X = x.data();
  auto G = gain.data();
  auto Bv = bias.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += X[i * d + j];
    mean /= double(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = X[i * d + j] - mean;
      var += c * c;
    }
    var /= double(d);
    inv_std[i] = 1.0 / std::sqrt(var + double(eps));
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (X[i * d + j] - mean) * inv_std[i];
      out[i * d + j] = static_cast<Real>(xhat[i * d + j] * G[j] + Bv[j]);
    }
  }
  return make_result(
      "layer_norm", {m, d}, std::move(out), {x, gain, bias},
      [m, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& node) {
        Node& px = parent(node, 0);
        Node& pg = parent(node, 1);
        const auto& dy = node.grad;
        if (wants(node, 1) || wants(node, 2)) {
          for (std::size_t j = 0; j < d; ++j) {
            double sg = 0.0, sb = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
              sg += dy[i * d + j] * xhat[i * d + j];
              sb += dy[i * d + j];
            }
            if (wants(node, 1)) pg.accumulate(j, static_cast<Real>(sg));
            if (wants(node, 2)) parent(node, 2).accumulate(j, static_cast<Real>(sb));
          }
        }
        if (wants(node, 0)) {
          auto& gx = px.grad_buffer();
          for (std::size_t i = 0; i < m; ++i) {
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = double(dy[i * d + j]) * pg.value[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xhat[i * d + j];
            }
            mean_dxh /= double(d);
            mean_dxh_xh /= double(d);
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = double(dy[i * d + j]) * pg.value[j];
              gx[i * d + j] += static_cast<Real>(
                  inv_std[i] * (dxh - mean_dxh - xhat[i * d + j] * mean_dxh_xh));
            }
          }
        }
      });
}

Tensor l2_normalize_rows(const Tensor& a, Real eps) {
  require_matrix(a, "l2_normalize_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<Real> out(m * n);
  std::vector<double> norms(m);
  auto A = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += double(A[i * n + j]) * A[i * n + j];
    norms[i] = std::sqrt(s);
    if (norms[i] <= eps) throw NumericError("l2_normalize_rows: zero-norm row");
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = static_cast<Real>(A[i * n + j] / norms[i]);
  }
  return make_result("l2_normalize_rows", {m, n}, std::move(out), {a},
                     [m, n, norms = std::move(norms)](Node& node) {
                       Node& p = parent(node, 0);
                       auto& g = p.grad_buffer();
                       for (std::size_t i = 0; i < m; ++i) {
                         double ydy = 0.0;
                         std::vector<double> y(n);
                         for (std::size_t j = 0; j < n; ++j) {
                           y[j] = p.value[i * n + j] / norms[i];
                           ydy += y[j] * node.grad[i * n + j];
                         }
                         for (std::size_t j = 0; j < n; ++j) {
                           g[i * n + j] += static_cast<Real>((node.grad[i * n + j] - y[j] * ydy) / norms[i]);
                         }
                       }
                     });
}

Tensor sum_rows(const Tensor& a) {
  require_matrix(a, "sum_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<Real> out(m);
  auto A = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += A[i * n + j];
    out[i] = static_cast<Real>(s);
  }
  return make_result("sum_rows", {m, 1}, std::move(out), {a}, [m, n](Node& node) {
    auto& g = parent(node, 0).grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += node.grad[i];
  });
}

Tensor mean_rows(const Tensor& a) {
  require_matrix(a, "mean_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<Real> out(n);
  auto A = a.data();
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += A[i * n + j];
    out[j] = static_cast<Real>(s / double(m));
  }
  return make_result("mean_rows", {1, n}, std::move(out), {a}, [m, n](Node& node) {
    auto& g = parent(node, 0).grad_buffer();
    const double inv = 1.0 / double(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += static_cast<Real>(node.grad[j] * inv);
  });
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (Real v : a.data()) s += v;
  return make_result("sum_all", {1}, {static_cast<Real>(s)}, {a}, [](Node& node) {
    auto& g = parent(node, 0).grad_buffer();
    for (auto& v : g) v += node.grad[0];
  });
}

Tensor mean_all(const Tensor& a) {
  double s = 0.0;
  for (Real v : a.data()) s += v;
  const double inv = 1.0 / double(a.numel());
  return make_result("mean_all", {1}, {static_cast<Real>(s * inv)}, {a}, [inv](Node& node) {
    auto& g = parent(node, 0).grad_buffer();
    for (auto& v : g) v += static_cast<Real>(node.grad[0] * inv);
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = (require_matrix(parts[0], "concat_rows"), parts[0].cols());
  std::size_t m = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != n) throw ShapeError("concat_rows: column mismatch");
    m += p.rows();
  }
  std::vector<Real> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result("concat_rows", {m, n}, std::move(out), parts, [](Node& node) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      Node& p = parent(node, k);
      if (p.requires_grad) {
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[offset + i];
      }
      offset += p.value.size();
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_rows");
  if (begin >= end || end > a.rows()) throw ShapeError("slice_rows: bad range");
  const std::size_t n = a.cols();
  std::vector<Real> out(a.data().begin() + begin * n, a.data().begin() + end * n);
  return make_result("slice_rows", {end - begin, n}, std::move(out), {a},
                     [begin, n](Node& node) {
                       auto& g = parent(node, 0).grad_buffer();
                       for (std::size_t i = 0; i < node.grad.size(); ++i) g[begin * n + i] += node.grad[i];
                     });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  require_matrix(parts[0], "concat_cols");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != m) throw ShapeError("concat_cols: row mismatch");
    n += p.cols();
  }
  std::vector<Real> out(m * n);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    auto P = p.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * n + offset + j] = P[i * c + j];
    offset += c;
  }
  return make_result("concat_cols", {m, n}, std::move(out), parts, [m, n](Node& node) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      Node& p = parent(node, k);
      const std::size_t c = p.shape[1];
      if (p.requires_grad) {
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) g[i * c + j] += node.grad[i * n + offset + j];
      }
      offset += c;
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_cols");
  if (begin >= end || end > a.cols()) throw ShapeError("slice_cols: bad range");
  const std::size_t m = a.rows(), n = a.cols(), c = end - begin;
  std::vector<Real> out(m * c);
  auto A = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = A[i * n + begin + j];
  return make_result("slice_cols", {m, c}, std::move(out), {a}, [m, n, c, begin](Node& node) {
    auto& g = parent(node, 0).grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * n + begin + j] += node.grad[i * c + j];
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_row(matmul(x, weight), bias);
}

Tensor multi_head_attention(const Tensor& x, const AttentionParams& p, std::size_t heads) {
  require_matrix(x, "multi_head_attention");
  const std::size_t d = x.cols();
  if (heads == 0 || d % heads != 0) {
    throw InvalidArgument("multi_head_attention: D=" + std::to_string(d) +
                          " not divisible by heads=" + std::to_string(heads));
  }
  const std::size_t dh = d / heads;
  const Real scale_factor = static_cast<Real>(1.0 / std::sqrt(double(dh)));
  Tensor q = linear(x, p.wq, p.bq);
  Tensor k = linear(x, p.wk, p.bk);
  Tensor v = linear(x, p.wv, p.bv);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    Tensor att = softmax_rows(scale(matmul(qh, transpose(kh)), scale_factor));
    outs.push_back(matmul(att, vh));
  }
  Tensor merged = heads == 1 ? outs[0] : concat_cols(outs);
  return linear(merged, p.wo, p.bo);
}

}  // namespace rmtbvqa
