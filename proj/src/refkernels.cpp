#include "falldet/refkernels.hpp"

#include <algorithm>
#include <cmath>

namespace falldet::ref {

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += a[size_t(i) * k + p] * b[size_t(p) * n + j];
            c[size_t(i) * n + j] = acc;
        }
    }
}

void dw_conv1d(const double* x, const double* kernel, double* out, int t_in, int channels,
               int k, int dilation, int stride, bool causal) {
    const int t_out = (t_in - 1) / stride + 1;
    for (int to = 0; to < t_out; ++to) {
        const int t = to * stride;
        for (int c = 0; c < channels; ++c) {
            double acc = 0.0;
            for (int j = 0; j < k; ++j) {
                const int src = causal ? t - j * dilation : t + (j - k / 2) * dilation;
                if (src < 0 || src >= t_in) continue;
                acc += kernel[size_t(c) * k + j] * x[size_t(src) * channels + c];
            }
            out[size_t(to) * channels + c] = acc;
        }
    }
}

void local_attention(const double* q, const double* k, const double* v, double* out, int t,
                     int c, int cv, int radius) {
    const double sc = 1.0 / std::sqrt(double(c));
    std::vector<double> logits;
    for (int i = 0; i < t; ++i) {
        const int lo = std::max(0, i - radius), hi = std::min(t - 1, i + radius);
        logits.assign(static_cast<size_t>(hi - lo + 1), 0.0);
        double mx = -1e300;
        for (int j = lo; j <= hi; ++j) {
            double dot = 0.0;
            for (int d = 0; d < c; ++d) dot += q[size_t(i) * c + d] * k[size_t(j) * c + d];
            logits[size_t(j - lo)] = dot * sc;
            mx = std::max(mx, dot * sc);
        }
        double sum = 0.0;
        for (auto& l : logits) {
            l = std::exp(l - mx);
            sum += l;
        }
        for (int d = 0; d < cv; ++d) out[size_t(i) * cv + d] = 0.0;
        for (int j = lo; j <= hi; ++j) {
            const double w = logits[size_t(j - lo)] / sum;
            for (int d = 0; d < cv; ++d) out[size_t(i) * cv + d] += w * v[size_t(j) * cv + d];
        }
    }
}

void ssm_scan(const double* x, const double* a, const double* b, const double* c,
              const double* d, const double* wg, const double* bg, double* y, int t, int cd,
              int s) {
    std::vector<double> h(static_cast<size_t>(s), 0.0);
    for (int n = 0; n < t; ++n) {
        const double* xn = x + size_t(n) * cd;
        for (int i = 0; i < s; ++i) {
            double u = 0.0, pre = bg[i];
            for (int j = 0; j < cd; ++j) {
                u += b[size_t(i) * cd + j] * xn[j];
                pre += wg[size_t(i) * cd + j] * xn[j];
            }
            const double g = 1.0 / (1.0 + std::exp(-pre));
            h[size_t(i)] = g * (a[i] * h[size_t(i)]) + (1.0 - g) * u;
        }
        for (int j = 0; j < cd; ++j) {
            double acc = d[j] * xn[j];
            for (int i = 0; i < s; ++i) acc += c[size_t(j) * s + i] * h[size_t(i)];
            y[size_t(n) * cd + j] = acc;
        }
    }
}

void hampel(const double* x, double* out, int n, int half_window, double k) {
    std::vector<double> win;
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half_window), hi = std::min(n - 1, i + half_window);
        win.assign(x + lo, x + hi + 1);
        std::sort(win.begin(), win.end());
        const double med = win.size() % 2 ? win[win.size() / 2]
                                          : 0.5 * (win[win.size() / 2 - 1] + win[win.size() / 2]);
        for (auto& w : win) w = std::abs(w - med);
        std::sort(win.begin(), win.end());
        const double mad = win.size() % 2 ? win[win.size() / 2]
                                          : 0.5 * (win[win.size() / 2 - 1] + win[win.size() / 2]);
        out[i] = std::abs(x[i] - med) > k * 1.4826 * mad ? med : x[i];
    }
}

}  // namespace falldet::ref
