#pragma once
// Differentiable operators. Hot kernels carry OpenMP parallel loops with one
// writer per output element, so results are bit-identical for any thread
// count; serial counterparts for testing live in falldet/refkernels.hpp.

#include <vector>

#include "falldet/tensor.hpp"

namespace falldet::ops {

enum class ConvPad { same, causal };

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_rows(const Tensor& x, const Tensor& bias);  // [T,C] + [1,C]
Tensor mul_rows(const Tensor& x, const Tensor& s);     // [T,C] * [1,C]
Tensor mul_cols(const Tensor& x, const Tensor& g);     // [T,C] * [T,1]
Tensor scale_by_entry(const Tensor& x, const Tensor& s, int idx);  // x * s[0,idx]
Tensor concat_cols(const std::vector<Tensor>& xs);     // row-count preserved
Tensor concat_rows(const std::vector<Tensor>& xs);     // column-count preserved

Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_act(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor mean_over_rows(const Tensor& x);  // [T,C] -> [1,C]
Tensor sum_all(const Tensor& x);         // [1,1]
Tensor dot_const(const Tensor& x, const std::vector<double>& w);  // [1,N] -> [1,1]

Tensor matmul(const Tensor& a, const Tensor& b);
// x[T,in] * W[in,out] (+ bias[1,out]).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias = nullptr);

// Depthwise 1-D convolution on [T,C] with kernel [C,K]. `same` centers the
// taps, `causal` reaches only backwards; both zero-pad. Output has
// ceil(T/stride) rows.
Tensor dw_conv1d(const Tensor& x, const Tensor& kernel, int dilation, int stride,
                 ConvPad pad);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// Dense scaled dot-product attention, scale 1/sqrt(K cols). Optional boolean
// mask [Tq*Tk], nonzero = may attend; a fully masked query row yields a zero
// output row (and passes no gradient).
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const std::vector<uint8_t>* mask = nullptr);

// Banded self/cross attention: query t attends to [t-radius, t+radius]
// clamped to the sequence. O(T * radius * C); radius 0 degenerates to a
// one-hot copy of V.
Tensor local_attention(const Tensor& q, const Tensor& k, const Tensor& v, int radius);

// Gated diagonal state-space scan over x[T,Cd]:
//   s_t = Wg x_t + bg,  g_t = sigmoid(s_t)
//   h_t = g_t o (a o h_{t-1}) + (1 - g_t) o (B x_t),   h_0 prior = 0
//   y_t = C h_t + D o x_t
// a[1,S] is the (already squashed) diagonal transition, B[S,Cd], C[Cd,S],
// D[1,Cd], Wg[S,Cd], bg[1,S]. Backward is a hand-derived adjoint scan.
Tensor ssm_scan(const Tensor& x, const Tensor& a, const Tensor& b_in, const Tensor& c_out,
                const Tensor& d_skip, const Tensor& w_gate, const Tensor& b_gate);

// Streaming form of ssm_scan: consumes one input row, updates state (size S,
// zero-initialized before the first step), writes one output row. Matches the
// batch scan exactly; inference only (no autograd).
void ssm_step(const double* x_t, const double* a, const double* b_in, const double* c_out,
              const double* d_skip, const double* w_gate, const double* b_gate,
              double* state, double* y_t, int cd, int s);

// Gated linear recurrent unit over v[T,C]:
//   g_t = sigmoid(Wg v_t + Ug h_{t-1})
//   htil = tanh(Wh v_t + Uh (g_t o h_{t-1}))
//   alpha_t = sigmoid(Wa v_t + ba)
//   h_t = (1 - alpha_t) o h_{t-1} + alpha_t o htil
// All weight matrices are [C,C] applied as W * v per step; ba is [1,C].
Tensor glru_scan(const Tensor& v, const Tensor& wh, const Tensor& uh, const Tensor& wg,
                 const Tensor& ug, const Tensor& wa, const Tensor& ba);

// d = diag(P P^T) where P holds the top-`rank` eigenpairs (scaled by
// sqrt(eigenvalue)) of the shrunk covariance of H[T,C]:
//   Sigma = (1/T) sum_t (h_t - hbar)(h_t - hbar)^T + eps I,
//   eps = max(1e-3 * mean diag, 1e-6).
// Eigendecomposition is cyclic Jacobi with a deterministic sign convention
// (largest-magnitude component positive). Backward uses first-order
// eigenpair perturbation; eps is treated as constant and near-degenerate
// eigenvalue gaps are clamped.
Tensor cov_reweight_diag(const Tensor& h, int rank);

Tensor gather_rows(const Tensor& x, std::vector<int> idx);
Tensor scatter_rows(const Tensor& x, std::vector<int> idx, int rows);
// out[t,0] = probs[t, idx[t]].
Tensor select_cols(const Tensor& probs, std::vector<int> idx);

// sum_b weights[b] * bce(logits[b,0], targets[b]) / weight_norm, with the
// numerically stable log1p(exp(-|l|)) form.
Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& targets,
                       const std::vector<double>& weights, double weight_norm);

// ||U^T U - I||_F^2.
Tensor orth_penalty(const Tensor& u);

}  // namespace falldet::ops
