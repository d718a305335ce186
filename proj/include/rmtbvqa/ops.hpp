#pragma once

#include <cstddef>
#include <vector>

#include "rmtbvqa/tensor.hpp"

namespace rmtbvqa {

// All ops below take and return 2-D tensors unless noted; a vector of length
// n is represented as [1 x n]. Internal accumulation is done in double.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, Real s);
/// a[m x n] + b broadcast over rows; b is [1 x n] or [n].
Tensor add_row(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
/// Stable elementwise log(exp(a) + exp(b)).
Tensor logaddexp(const Tensor& a, const Tensor& b);

/// Row-wise softmax with per-row max subtraction.
Tensor softmax_rows(const Tensor& a);
/// Row-wise log(sum_k exp(a[i,k])) over entries where mask[i,k] != 0.
/// Rows with an empty mask yield 0 and receive no gradient.
Tensor logsumexp_rows(const Tensor& a, const std::vector<Real>& mask);

/// Per-row normalization over the last dim, then gain*x + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  Real eps = 1e-5);
Tensor l2_normalize_rows(const Tensor& a, Real eps = 1e-12);

Tensor sum_rows(const Tensor& a);   // [m x n] -> [m x 1]
Tensor mean_rows(const Tensor& a);  // [m x n] -> [1 x n], mean over rows
Tensor sum_all(const Tensor& a);    // -> [1]
Tensor mean_all(const Tensor& a);   // -> [1]

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);

/// x[L x in] * W[in x out] + b[out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // W: [D x D], b: [1 x D]
};

/// Concatenated per-head softmax(Q K^T / sqrt(d_h)) V, then output projection.
Tensor multi_head_attention(const Tensor& x, const AttentionParams& p, std::size_t heads);

namespace testing_hooks {
// Scales the matmul gradient w.r.t. its left input by 1.01. Used by the
// self-check mutation run to prove that gradient checks can fail.
void set_matmul_grad_fault(bool enabled);
bool matmul_grad_fault();
}  // namespace testing_hooks

}  // namespace rmtbvqa
