#pragma once

#include <vector>

#include "dferclip/tensor.hpp"

namespace dfer {

// Differentiable operations. Every function computes its forward result and,
// when the active tape is recording and an input requires a gradient, records
// the reverse-mode rule. Shapes are strict: rank 2 means [rows x cols],
// rank 1 a vector, rank 0 a scalar. Broadcasting exists only where a
// dedicated op provides it (add_row).

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);            // same shape
Tensor add_row(const Tensor& x, const Tensor& bias);     // [r x c] + [c] per row
Tensor mul_scalar(const Tensor& x, double c);
Tensor mul_scalar_param(const Tensor& x, const Tensor& s);  // s is rank 0
Tensor reshape(const Tensor& x, std::vector<Index> shape);  // size-preserving

Tensor slice_rows(const Tensor& x, Index i0, Index n);
Tensor slice_cols(const Tensor& x, Index j0, Index n);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor stack_rows(const std::vector<Tensor>& rows);  // each rank 1, same length
Tensor take_row(const Tensor& x, Index i);           // -> rank 1
Tensor mean_rows(const Tensor& x);                   // -> rank 1
Tensor sum(const Tensor& x);                         // -> scalar

Tensor gelu(const Tensor& x);  // tanh approximation of x * Phi(x)
Tensor softmax(const Tensor& x);  // last axis; max-subtracted for stability
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor l2_normalize(const Tensor& v);  // rank 1; zero norm is a numeric error

/// Mean negative log-probability of the true class. Input is interpreted as
/// logits; a stable log-softmax is applied internally.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Per-head scaled dot-product attention over already-projected q, k, v of
/// shape [s x d], heads concatenated back to [s x d]. Scale is
/// 1/sqrt(d/heads). Surrounding layers own the qkv/output projections.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads);

}  // namespace dfer
