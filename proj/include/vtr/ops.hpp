#pragma once

#include <cstdint>
#include <vector>

#include "vtr/tensor.hpp"

// Differentiable dense ops. Every op validates shapes, computes the forward
// value, verifies the output is finite, and (when a tape is active and an
// input requires grad) records an adjoint step on the tape.
namespace vtr::core {

// Global switch for the per-op finite check. On by default; the finite
// check is part of the forward contract, tests may disable it to probe
// error paths.
bool finite_checks_enabled();
void set_finite_checks_enabled(bool on);
void check_finite(const Tensor& t, const char* op_name);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor elem_exp(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation

// out = a * s where s is a 1-element tensor (broadcast scalar with grad).
Tensor mul_scalar_tensor(const Tensor& a, const Tensor& s);

// ---- structure ----
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& perm);
Tensor transpose2d(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, std::int64_t from, std::int64_t to);
// Row gather on a 2D table; doubles as embedding lookup. Adjoint is a
// scatter-add in fixed index order.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
// [D] or [1,D] -> [n,D]
Tensor repeat_rows(const Tensor& row, std::int64_t n);
// p has x's shape minus the leading axis; added to every slice of x.
Tensor add_broadcast0(const Tensor& x, const Tensor& p);
// b has shape [x.shape.back()]; added to every trailing row of x.
Tensor add_bias(const Tensor& x, const Tensor& b);

// ---- contractions / normalization ----
// Batched matmul: [...,m,k] x [...,k,n] -> [...,m,n]. Batch extents must be
// equal, or one operand may omit them entirely (broadcast).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor softmax(const Tensor& a, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
// Rows scaled to unit L2 norm; a zero-norm row is a numeric error.
Tensor l2_normalize_rows(const Tensor& x);

// ---- reductions / losses ----
Tensor sum_all(const Tensor& a);
Tensor mean_rows(const Tensor& a);   // [n,D] -> [D]
Tensor rowwise_sum(const Tensor& a); // [n,D] -> [n]
// Per-row cross entropy -log softmax(row)[target], each multiplied by its
// weight. normalize_by_weight_sum=true divides by sum(weights) (weighted
// mean); false divides by the row count. A zero weight sum yields loss 0
// and sets *all_weights_zero.
Tensor weighted_cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                              const std::vector<double>& weights,
                              bool normalize_by_weight_sum,
                              bool* all_weights_zero = nullptr);

// ---- attention ----
struct MhaWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

// Boolean keep-mask [Nq,Nk] as a 0/1 tensor; a fully-masked query row is a
// contract violation.
Tensor causal_mask(std::int64_t n);
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const MhaWeights& w, int heads,
                            const Tensor* mask = nullptr);

}  // namespace vtr::core
