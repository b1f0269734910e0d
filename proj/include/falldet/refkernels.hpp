#pragma once

// Plain serial kernels, written as directly as possible from the math.
// They are the ground truth the parallel operators are tested against,
// and the baseline side of the kernel benchmark. No autograd, no OpenMP.

#include <cstdint>
#include <vector>

namespace falldet::ref {

// c[m,n] = a[m,k] * b[k,n]
void matmul(const double* a, const double* b, double* c, int m, int k, int n);

// Depthwise 1-d convolution, layout [T,C], kernel [C,K].
// same: tap j reads x[t + (j - K/2)*dil]; causal: x[t - j*dil]. Zero padding.
void dw_conv1d(const double* x, const double* kernel, double* out, int t_in, int channels,
               int k, int dilation, int stride, bool causal);

// Banded softmax attention, all inputs [T,C] / v [T,Cv], scale 1/sqrt(C).
void local_attention(const double* q, const double* k, const double* v, double* out, int t,
                     int c, int cv, int radius);

// Gated state-space recurrence over [T,Cd] input:
//   u_t = B x_t, g_t = sigmoid(Wg x_t + bg),
//   h_t = g_t o (a o h_{t-1}) + (1 - g_t) o u_t,
//   y_t = C h_t + d o x_t.
void ssm_scan(const double* x, const double* a, const double* b, const double* c,
              const double* d, const double* wg, const double* bg, double* y, int t, int cd,
              int s);

// Median filter companion used by the signal tests: out-of-place Hampel on one
// channel. half_window samples on each side, replacement when
// |x - median| > k * 1.4826 * MAD.
void hampel(const double* x, double* out, int n, int half_window, double k);

}  // namespace falldet::ref
