#include "falldet/ops.hpp"

#include <algorithm>
#include <cmath>

namespace falldet::ops {

namespace {

std::shared_ptr<TensorNode> blank(int rows, int cols) {
    auto n = std::make_shared<TensorNode>();
    n->rows = rows;
    n->cols = cols;
    n->value.assign(static_cast<size_t>(rows) * cols, 0.0);
    return n;
}

using Parents = std::vector<std::shared_ptr<TensorNode>>;

Tensor finish(const char* name, std::shared_ptr<TensorNode> out, Parents parents,
              std::function<void(TensorNode&)> backprop) {
    check_finite(name, out->value);
    if (grad_enabled()) {
        bool need = false;
        for (const auto& p : parents) need = need || p->requires_grad;
        if (need) {
            out->requires_grad = true;
            out->parents = std::move(parents);
            out->backprop = std::move(backprop);
        }
    }
    return Tensor(std::move(out));
}

void expect(bool cond, const char* msg) {
    if (!cond) throw ShapeMismatch(msg);
}

// C[m,n] += A[m,k] * B[k,n]
void mm_accum(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (int64_t(m) * k * n > (1 << 16))
    for (int i = 0; i < m; ++i) {
        double* crow = c + size_t(i) * n;
        const double* arow = a + size_t(i) * k;
        for (int p = 0; p < k; ++p) {
            double av = arow[p];
            const double* brow = b + size_t(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// dA[m,k] += dC[m,n] * B^T, dB[k,n] += A^T * dC
void mm_backward(const double* a, const double* b, const double* dc, double* da, double* db,
                 int m, int k, int n) {
    if (da) {
        for (int i = 0; i < m; ++i) {
            const double* dcrow = dc + size_t(i) * n;
            double* darow = da + size_t(i) * k;
            for (int p = 0; p < k; ++p) {
                const double* brow = b + size_t(p) * n;
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
                darow[p] += acc;
            }
        }
    }
    if (db) {
        for (int i = 0; i < m; ++i) {
            const double* arow = a + size_t(i) * k;
            const double* dcrow = dc + size_t(i) * n;
            for (int p = 0; p < k; ++p) {
                double av = arow[p];
                double* dbrow = db + size_t(p) * n;
                for (int j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
            }
        }
    }
}

double sigmoid_s(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    expect(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
    auto out = blank(a.rows(), a.cols());
    for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.value()[i] + b.value()[i];
    auto pa = a.node(), pb = b.node();
    return finish("add", out, {pa, pb}, [pa, pb](TensorNode& self) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    expect(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
    auto out = blank(a.rows(), a.cols());
    for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.value()[i] - b.value()[i];
    auto pa = a.node(), pb = b.node();
    return finish("sub", out, {pa, pb}, [pa, pb](TensorNode& self) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    expect(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
    auto out = blank(a.rows(), a.cols());
    for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.value()[i] * b.value()[i];
    auto pa = a.node(), pb = b.node();
    return finish("mul", out, {pa, pb}, [pa, pb](TensorNode& self) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                pa->grad[i] += self.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                pb->grad[i] += self.grad[i] * pa->value[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    auto out = blank(a.rows(), a.cols());
    for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.value()[i] * s;
    auto pa = a.node();
    return finish("scale", out, {pa}, [pa, s](TensorNode& self) {
        pa->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * s;
    });
}

Tensor add_rows(const Tensor& x, const Tensor& bias) {
    expect(bias.rows() == 1 && bias.cols() == x.cols(), "add_rows: bias must be [1,C]");
    auto out = blank(x.rows(), x.cols());
    const int T = x.rows(), C = x.cols();
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c)
            out->value[size_t(t) * C + c] = x.value()[size_t(t) * C + c] + bias.value()[size_t(c)];
    auto px = x.node(), pb = bias.node();
    return finish("add_rows", out, {px, pb}, [px, pb, T, C](TensorNode& self) {
        if (px->requires_grad) {
            px->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (int t = 0; t < T; ++t)
                for (int c = 0; c < C; ++c) pb->grad[size_t(c)] += self.grad[size_t(t) * C + c];
        }
    });
}

Tensor mul_rows(const Tensor& x, const Tensor& s) {
    expect(s.rows() == 1 && s.cols() == x.cols(), "mul_rows: scale must be [1,C]");
    auto out = blank(x.rows(), x.cols());
    const int T = x.rows(), C = x.cols();
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c)
            out->value[size_t(t) * C + c] = x.value()[size_t(t) * C + c] * s.value()[size_t(c)];
    auto px = x.node(), ps = s.node();
    return finish("mul_rows", out, {px, ps}, [px, ps, T, C](TensorNode& self) {
        if (px->requires_grad) {
            px->ensure_grad();
            for (int t = 0; t < T; ++t)
                for (int c = 0; c < C; ++c)
                    px->grad[size_t(t) * C + c] +=
                        self.grad[size_t(t) * C + c] * ps->value[size_t(c)];
        }
        if (ps->requires_grad) {
            ps->ensure_grad();
            for (int t = 0; t < T; ++t)
                for (int c = 0; c < C; ++c)
                    ps->grad[size_t(c)] +=
                        self.grad[size_t(t) * C + c] * px->value[size_t(t) * C + c];
        }
    });
}

Tensor mul_cols(const Tensor& x, const Tensor& g) {
    expect(g.cols() == 1 && g.rows() == x.rows(), "mul_cols: gate must be [T,1]");
    auto out = blank(x.rows(), x.cols());
    const int T = x.rows(), C = x.cols();
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c)
            out->value[size_t(t) * C + c] = x.value()[size_t(t) * C + c] * g.value()[size_t(t)];
    auto px = x.node(), pg = g.node();
    return finish("mul_cols", out, {px, pg}, [px, pg, T, C](TensorNode& self) {
        if (px->requires_grad) {
            px->ensure_grad();
            for (int t = 0; t < T; ++t)
                for (int c = 0; c < C; ++c)
                    px->grad[size_t(t) * C + c] +=
                        self.grad[size_t(t) * C + c] * pg->value[size_t(t)];
        }
        if (pg->requires_grad) {
            pg->ensure_grad();
            for (int t = 0; t < T; ++t) {
                double acc = 0.0;
                for (int c = 0; c < C; ++c)
                    acc += self.grad[size_t(t) * C + c] * px->value[size_t(t) * C + c];
                pg->grad[size_t(t)] += acc;
            }
        }
    });
}

Tensor scale_by_entry(const Tensor& x, const Tensor& s, int idx) {
    expect(s.rows() == 1 && idx >= 0 && idx < s.cols(), "scale_by_entry: bad index");
    const double sv = s.value()[size_t(idx)];
    auto out = blank(x.rows(), x.cols());
    for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = x.value()[i] * sv;
    auto px = x.node(), ps = s.node();
    return finish("scale_by_entry", out, {px, ps}, [px, ps, idx, sv](TensorNode& self) {
        if (px->requires_grad) {
            px->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i] * sv;
        }
        if (ps->requires_grad) {
            ps->ensure_grad();
            double acc = 0.0;
            for (size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * px->value[i];
            ps->grad[size_t(idx)] += acc;
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
    expect(!xs.empty(), "concat_cols: empty input");
    const int T = xs.front().rows();
    int total = 0;
    for (const auto& x : xs) {
        expect(x.rows() == T, "concat_cols: row mismatch");
        total += x.cols();
    }
    auto out = blank(T, total);
    Parents parents;
    std::vector<int> offs;
    int off = 0;
    for (const auto& x : xs) {
        offs.push_back(off);
        const int C = x.cols();
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < C; ++c)
                out->value[size_t(t) * total + off + c] = x.value()[size_t(t) * C + c];
        parents.push_back(x.node());
        off += C;
    }
    return finish("concat_cols", out, parents, [parents, offs, T, total](TensorNode& self) {
        for (size_t p = 0; p < parents.size(); ++p) {
            auto& par = parents[p];
            if (!par->requires_grad) continue;
            par->ensure_grad();
            const int C = par->cols;
            for (int t = 0; t < T; ++t)
                for (int c = 0; c < C; ++c)
                    par->grad[size_t(t) * C + c] +=
                        self.grad[size_t(t) * total + offs[p] + c];
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
    expect(!xs.empty(), "concat_rows: empty input");
    const int C = xs.front().cols();
    int total = 0;
    for (const auto& x : xs) {
        expect(x.cols() == C, "concat_rows: column mismatch");
        total += x.rows();
    }
    auto out = blank(total, C);
    Parents parents;
    std::vector<int> offs;
    int off = 0;
    for (const auto& x : xs) {
        offs.push_back(off);
        const int R = x.rows();
        for (int t = 0; t < R; ++t)
            for (int c = 0; c < C; ++c)
                out->value[size_t(off + t) * C + c] = x.value()[size_t(t) * C + c];
        parents.push_back(x.node());
        off += R;
    }
    return finish("concat_rows", out, parents, [parents, offs, C](TensorNode& self) {
        for (size_t p = 0; p < parents.size(); ++p) {
            auto& par = parents[p];
            if (!par->requires_grad) continue;
            par->ensure_grad();
            const int R = par->rows;
            for (int t = 0; t < R; ++t)
                for (int c = 0; c < C; ++c)
                    par->grad[size_t(t) * C + c] +=
                        self.grad[size_t(offs[p] + t) * C + c];
        }
    });
}

Tensor silu(const Tensor& x) {
    auto out = blank(x.rows(), x.cols());
    for (size_t i = 0; i < out->value.size(); ++i) {
        double v = x.value()[i];
        out->value[i] = v * sigmoid_s(v);
    }
    auto px = x.node();
    return finish("silu", out, {px}, [px](TensorNode& self) {
        px->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double v = px->value[i];
            double s = sigmoid_s(v);
            px->grad[i] += self.grad[i] * (s + v * s * (1.0 - s));
        }
    });
}

Tensor sigmoid(const Tensor& x) {
    auto out = blank(x.rows(), x.cols());
    for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = sigmoid_s(x.value()[i]);
    auto px = x.node();
    return finish("sigmoid", out, {px}, [px](TensorNode& self) {
        px->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double s = self.value[i];
            px->grad[i] += self.grad[i] * s * (1.0 - s);
        }
    });
}

Tensor tanh_act(const Tensor& x) {
    auto out = blank(x.rows(), x.cols());
    for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = std::tanh(x.value()[i]);
    auto px = x.node();
    return finish("tanh_act", out, {px}, [px](TensorNode& self) {
        px->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double t = self.value[i];
            px->grad[i] += self.grad[i] * (1.0 - t * t);
        }
    });
}

Tensor softmax_rows(const Tensor& x) {
    const int T = x.rows(), C = x.cols();
    auto out = blank(T, C);
    for (int t = 0; t < T; ++t) {
        const double* row = x.value().data() + size_t(t) * C;
        double* orow = out->value.data() + size_t(t) * C;
        double mx = row[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (int c = 0; c < C; ++c) {
            orow[c] = std::exp(row[c] - mx);
            sum += orow[c];
        }
        for (int c = 0; c < C; ++c) orow[c] /= sum;
    }
    auto px = x.node();
    return finish("softmax_rows", out, {px}, [px, T, C](TensorNode& self) {
        px->ensure_grad();
        for (int t = 0; t < T; ++t) {
            const double* p = self.value.data() + size_t(t) * C;
            const double* dp = self.grad.data() + size_t(t) * C;
            double dot = 0.0;
            for (int c = 0; c < C; ++c) dot += p[c] * dp[c];
            for (int c = 0; c < C; ++c) px->grad[size_t(t) * C + c] += p[c] * (dp[c] - dot);
        }
    });
}

Tensor mean_over_rows(const Tensor& x) {
    const int T = x.rows(), C = x.cols();
    auto out = blank(1, C);
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c) out->value[size_t(c)] += x.value()[size_t(t) * C + c];
    for (int c = 0; c < C; ++c) out->value[size_t(c)] /= double(T);
    auto px = x.node();
    return finish("mean_over_rows", out, {px}, [px, T, C](TensorNode& self) {
        px->ensure_grad();
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < C; ++c)
                px->grad[size_t(t) * C + c] += self.grad[size_t(c)] / double(T);
    });
}

Tensor sum_all(const Tensor& x) {
    auto out = blank(1, 1);
    double acc = 0.0;
    for (double v : x.value()) acc += v;
    out->value[0] = acc;
    auto px = x.node();
    return finish("sum_all", out, {px}, [px](TensorNode& self) {
        px->ensure_grad();
        for (auto& g : px->grad) g += self.grad[0];
    });
}

Tensor dot_const(const Tensor& x, const std::vector<double>& w) {
    expect(x.rows() == 1 && size_t(x.cols()) == w.size(), "dot_const: size mismatch");
    auto out = blank(1, 1);
    double acc = 0.0;
    for (size_t i = 0; i < w.size(); ++i) acc += x.value()[i] * w[i];
    out->value[0] = acc;
    auto px = x.node();
    return finish("dot_const", out, {px}, [px, w](TensorNode& self) {
        px->ensure_grad();
        for (size_t i = 0; i < w.size(); ++i) px->grad[i] += self.grad[0] * w[i];
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    expect(a.cols() == b.rows(), "matmul: inner dimensions differ");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    auto out = blank(m, n);
    mm_accum(a.value().data(), b.value().data(), out->value.data(), m, k, n);
    auto pa = a.node(), pb = b.node();
    return finish("matmul", out, {pa, pb}, [pa, pb, m, k, n](TensorNode& self) {
        double* da = nullptr;
        double* db = nullptr;
        if (pa->requires_grad) {
            pa->ensure_grad();
            da = pa->grad.data();
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            db = pb->grad.data();
        }
        mm_backward(pa->value.data(), pb->value.data(), self.grad.data(), da, db, m, k, n);
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias) {
    expect(x.cols() == w.rows(), "linear: inner dimensions differ");
    const int m = x.rows(), k = x.cols(), n = w.cols();
    auto out = blank(m, n);
    if (bias) {
        expect(bias->rows() == 1 && bias->cols() == n, "linear: bias must be [1,out]");
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out->value[size_t(i) * n + j] = bias->value()[size_t(j)];
    }
    mm_accum(x.value().data(), w.value().data(), out->value.data(), m, k, n);
    auto px = x.node(), pw = w.node();
    Parents parents{px, pw};
    std::shared_ptr<TensorNode> pb;
    if (bias) {
        pb = bias->node();
        parents.push_back(pb);
    }
    return finish("linear", out, parents, [px, pw, pb, m, k, n](TensorNode& self) {
        double* dx = nullptr;
        double* dw = nullptr;
        if (px->requires_grad) {
            px->ensure_grad();
            dx = px->grad.data();
        }
        if (pw->requires_grad) {
            pw->ensure_grad();
            dw = pw->grad.data();
        }
        mm_backward(px->value.data(), pw->value.data(), self.grad.data(), dx, dw, m, k, n);
        if (pb && pb->requires_grad) {
            pb->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) pb->grad[size_t(j)] += self.grad[size_t(i) * n + j];
        }
    });
}

Tensor dw_conv1d(const Tensor& x, const Tensor& kernel, int dilation, int stride,
                 ConvPad pad) {
    expect(kernel.rows() == x.cols(), "dw_conv1d: kernel rows must equal channels");
    if (dilation < 1 || stride < 1)
        throw DegenerateInput("dw_conv1d: dilation and stride must be >= 1");
    const int T = x.rows(), C = x.cols(), K = kernel.cols();
    const int T_out = (T - 1) / stride + 1;
    // Tap j reads x[t + (j - K/2)*dil] for `same`, x[t - j*dil] for `causal`.
    std::vector<int> off(static_cast<size_t>(K));
    for (int j = 0; j < K; ++j)
        off[size_t(j)] = pad == ConvPad::same ? (j - K / 2) * dilation : -j * dilation;

    // Kernel transposed to [K,C] so the channel loop is contiguous.
    std::vector<double> kt(static_cast<size_t>(K) * C);
    for (int c = 0; c < C; ++c)
        for (int j = 0; j < K; ++j) kt[size_t(j) * C + c] = kernel.value()[size_t(c) * K + j];

    auto out = blank(T_out, C);
#pragma omp parallel for schedule(static) if (int64_t(T_out) * K * C > (1 << 15))
    for (int to = 0; to < T_out; ++to) {
        double* orow = out->value.data() + size_t(to) * C;
        const int t = to * stride;
        for (int j = 0; j < K; ++j) {
            const int src = t + off[size_t(j)];
            if (src < 0 || src >= T) continue;
            const double* xrow = x.value().data() + size_t(src) * C;
            const double* krow = kt.data() + size_t(j) * C;
            for (int c = 0; c < C; ++c) orow[c] += krow[c] * xrow[c];
        }
    }
    auto px = x.node(), pk = kernel.node();
    return finish("dw_conv1d", out, {px, pk},
                  [px, pk, off, kt, T, C, K, T_out, stride](TensorNode& self) {
                      const bool need_x = px->requires_grad, need_k = pk->requires_grad;
                      if (need_x) px->ensure_grad();
                      if (need_k) pk->ensure_grad();
                      for (int to = 0; to < T_out; ++to) {
                          const double* grow = self.grad.data() + size_t(to) * C;
                          const int t = to * stride;
                          for (int j = 0; j < K; ++j) {
                              const int src = t + off[size_t(j)];
                              if (src < 0 || src >= T) continue;
                              if (need_x) {
                                  double* dxrow = px->grad.data() + size_t(src) * C;
                                  const double* krow = kt.data() + size_t(j) * C;
                                  for (int c = 0; c < C; ++c) dxrow[c] += krow[c] * grow[c];
                              }
                              if (need_k) {
                                  const double* xrow = px->value.data() + size_t(src) * C;
                                  for (int c = 0; c < C; ++c)
                                      pk->grad[size_t(c) * K + j] += xrow[c] * grow[c];
                              }
                          }
                      }
                  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const int T = x.rows(), C = x.cols();
    expect(gain.rows() == 1 && gain.cols() == C && bias.rows() == 1 && bias.cols() == C,
           "layer_norm: gain/bias must be [1,C]");
    auto out = blank(T, C);
    std::vector<double> xhat(static_cast<size_t>(T) * C), inv_std(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
        const double* row = x.value().data() + size_t(t) * C;
        double mean = 0.0;
        for (int c = 0; c < C; ++c) mean += row[c];
        mean /= double(C);
        double var = 0.0;
        for (int c = 0; c < C; ++c) var += (row[c] - mean) * (row[c] - mean);
        var /= double(C);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[size_t(t)] = is;
        for (int c = 0; c < C; ++c) {
            double xh = (row[c] - mean) * is;
            xhat[size_t(t) * C + c] = xh;
            out->value[size_t(t) * C + c] = xh * gain.value()[size_t(c)] + bias.value()[size_t(c)];
        }
    }
    auto px = x.node(), pg = gain.node(), pb = bias.node();
    return finish("layer_norm", out, {px, pg, pb},
                  [px, pg, pb, xhat, inv_std, T, C](TensorNode& self) {
                      if (pg->requires_grad) pg->ensure_grad();
                      if (pb->requires_grad) pb->ensure_grad();
                      if (px->requires_grad) px->ensure_grad();
                      for (int t = 0; t < T; ++t) {
                          const double* dy = self.grad.data() + size_t(t) * C;
                          const double* xh = xhat.data() + size_t(t) * C;
                          if (pg->requires_grad)
                              for (int c = 0; c < C; ++c) pg->grad[size_t(c)] += dy[c] * xh[c];
                          if (pb->requires_grad)
                              for (int c = 0; c < C; ++c) pb->grad[size_t(c)] += dy[c];
                          if (px->requires_grad) {
                              double m1 = 0.0, m2 = 0.0;
                              for (int c = 0; c < C; ++c) {
                                  double gdy = dy[c] * pg->value[size_t(c)];
                                  m1 += gdy;
                                  m2 += gdy * xh[c];
                              }
                              m1 /= double(C);
                              m2 /= double(C);
                              for (int c = 0; c < C; ++c) {
                                  double gdy = dy[c] * pg->value[size_t(c)];
                                  px->grad[size_t(t) * C + c] +=
                                      (gdy - m1 - xh[c] * m2) * inv_std[size_t(t)];
                              }
                          }
                      }
                  });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const std::vector<uint8_t>* mask) {
    expect(q.cols() == k.cols(), "attention: q/k width mismatch");
    expect(k.rows() == v.rows(), "attention: k/v length mismatch");
    const int tq = q.rows(), tk = k.rows(), C = q.cols(), cv = v.cols();
    if (mask) expect(int64_t(mask->size()) == int64_t(tq) * tk, "attention: mask size");
    const double sc = 1.0 / std::sqrt(double(C));

    std::vector<double> w(static_cast<size_t>(tq) * tk, 0.0);
    for (int i = 0; i < tq; ++i) {
        const double* qrow = q.value().data() + size_t(i) * C;
        double mx = -1e300;
        for (int j = 0; j < tk; ++j) {
            if (mask && !(*mask)[size_t(i) * tk + j]) continue;
            const double* krow = k.value().data() + size_t(j) * C;
            double dot = 0.0;
            for (int c = 0; c < C; ++c) dot += qrow[c] * krow[c];
            w[size_t(i) * tk + j] = dot * sc;
            mx = std::max(mx, dot * sc);
        }
        if (mx == -1e300) continue;  // fully masked row stays all-zero
        double sum = 0.0;
        for (int j = 0; j < tk; ++j) {
            if (mask && !(*mask)[size_t(i) * tk + j]) continue;
            double e = std::exp(w[size_t(i) * tk + j] - mx);
            w[size_t(i) * tk + j] = e;
            sum += e;
        }
        for (int j = 0; j < tk; ++j) {
            if (mask && !(*mask)[size_t(i) * tk + j]) {
                w[size_t(i) * tk + j] = 0.0;
                continue;
            }
            w[size_t(i) * tk + j] /= sum;
        }
    }

    auto out = blank(tq, cv);
    mm_accum(w.data(), v.value().data(), out->value.data(), tq, tk, cv);
    auto pq = q.node(), pk = k.node(), pv = v.node();
    std::vector<uint8_t> mask_copy = mask ? *mask : std::vector<uint8_t>();
    return finish(
        "attention", out, {pq, pk, pv},
        [pq, pk, pv, w, mask_copy, tq, tk, C, cv, sc](TensorNode& self) {
            const bool has_mask = !mask_copy.empty();
            if (pq->requires_grad) pq->ensure_grad();
            if (pk->requires_grad) pk->ensure_grad();
            if (pv->requires_grad) pv->ensure_grad();
            std::vector<double> dlog(static_cast<size_t>(tk));
            for (int i = 0; i < tq; ++i) {
                const double* dout = self.grad.data() + size_t(i) * cv;
                const double* wrow = w.data() + size_t(i) * tk;
                // dV and d(weights)
                double dot_wdw = 0.0;
                for (int j = 0; j < tk; ++j) {
                    if (has_mask && !mask_copy[size_t(i) * tk + j]) {
                        dlog[size_t(j)] = 0.0;
                        continue;
                    }
                    const double* vrow = pv->value.data() + size_t(j) * cv;
                    double dw = 0.0;
                    for (int c = 0; c < cv; ++c) dw += dout[c] * vrow[c];
                    dlog[size_t(j)] = dw;
                    dot_wdw += wrow[j] * dw;
                    if (pv->requires_grad) {
                        double* dvrow = pv->grad.data() + size_t(j) * cv;
                        for (int c = 0; c < cv; ++c) dvrow[c] += wrow[j] * dout[c];
                    }
                }
                for (int j = 0; j < tk; ++j) dlog[size_t(j)] = wrow[j] * (dlog[size_t(j)] - dot_wdw);
                const double* qrow = pq->value.data() + size_t(i) * C;
                for (int j = 0; j < tk; ++j) {
                    double dl = dlog[size_t(j)] * sc;
                    if (dl == 0.0) continue;
                    const double* krow = pk->value.data() + size_t(j) * C;
                    if (pq->requires_grad) {
                        double* dq = pq->grad.data() + size_t(i) * C;
                        for (int c = 0; c < C; ++c) dq[c] += dl * krow[c];
                    }
                    if (pk->requires_grad) {
                        double* dk = pk->grad.data() + size_t(j) * C;
                        for (int c = 0; c < C; ++c) dk[c] += dl * qrow[c];
                    }
                }
            }
        });
}

Tensor local_attention(const Tensor& q, const Tensor& k, const Tensor& v, int radius) {
    expect(q.cols() == k.cols(), "local_attention: q/k width mismatch");
    expect(q.rows() == k.rows() && k.rows() == v.rows(),
           "local_attention: sequence lengths must match");
    if (radius < 0) throw DegenerateInput("local_attention: negative radius");
    const int T = q.rows(), C = q.cols(), cv = v.cols();
    const int W = 2 * radius + 1;
    const double sc = 1.0 / std::sqrt(double(C));

    std::vector<double> w(static_cast<size_t>(T) * W, 0.0);
    auto out = blank(T, cv);
#pragma omp parallel for schedule(static) if (int64_t(T) * W * C > (1 << 15))
    for (int t = 0; t < T; ++t) {
        const int lo = std::max(0, t - radius), hi = std::min(T - 1, t + radius);
        const double* qrow = q.value().data() + size_t(t) * C;
        double mx = -1e300;
        for (int j = lo; j <= hi; ++j) {
            const double* krow = k.value().data() + size_t(j) * C;
            double dot = 0.0;
            for (int c = 0; c < C; ++c) dot += qrow[c] * krow[c];
            w[size_t(t) * W + (j - t + radius)] = dot * sc;
            mx = std::max(mx, dot * sc);
        }
        double sum = 0.0;
        for (int j = lo; j <= hi; ++j) {
            double e = std::exp(w[size_t(t) * W + (j - t + radius)] - mx);
            w[size_t(t) * W + (j - t + radius)] = e;
            sum += e;
        }
        double* orow = out->value.data() + size_t(t) * cv;
        for (int j = lo; j <= hi; ++j) {
            double wj = w[size_t(t) * W + (j - t + radius)] / sum;
            w[size_t(t) * W + (j - t + radius)] = wj;
            const double* vrow = v.value().data() + size_t(j) * cv;
            for (int c = 0; c < cv; ++c) orow[c] += wj * vrow[c];
        }
    }
    auto pq = q.node(), pk = k.node(), pv = v.node();
    return finish(
        "local_attention", out, {pq, pk, pv},
        [pq, pk, pv, w, T, C, cv, radius, sc](TensorNode& self) {
            const int W = 2 * radius + 1;
            if (pq->requires_grad) pq->ensure_grad();
            if (pk->requires_grad) pk->ensure_grad();
            if (pv->requires_grad) pv->ensure_grad();
            std::vector<double> dlog(static_cast<size_t>(W));
            for (int t = 0; t < T; ++t) {
                const int lo = std::max(0, t - radius), hi = std::min(T - 1, t + radius);
                const double* dout = self.grad.data() + size_t(t) * cv;
                const double* wrow = w.data() + size_t(t) * W;
                double dot_wdw = 0.0;
                for (int j = lo; j <= hi; ++j) {
                    const int b = j - t + radius;
                    const double* vrow = pv->value.data() + size_t(j) * cv;
                    double dw = 0.0;
                    for (int c = 0; c < cv; ++c) dw += dout[c] * vrow[c];
                    dlog[size_t(b)] = dw;
                    dot_wdw += wrow[b] * dw;
                    if (pv->requires_grad) {
                        double* dvrow = pv->grad.data() + size_t(j) * cv;
                        for (int c = 0; c < cv; ++c) dvrow[c] += wrow[b] * dout[c];
                    }
                }
                const double* qrow = pq->value.data() + size_t(t) * C;
                for (int j = lo; j <= hi; ++j) {
                    const int b = j - t + radius;
                    double dl = wrow[b] * (dlog[size_t(b)] - dot_wdw) * sc;
                    const double* krow = pk->value.data() + size_t(j) * C;
                    if (pq->requires_grad) {
                        double* dq = pq->grad.data() + size_t(t) * C;
                        for (int c = 0; c < C; ++c) dq[c] += dl * krow[c];
                    }
                    if (pk->requires_grad) {
                        double* dk = pk->grad.data() + size_t(j) * C;
                        for (int c = 0; c < C; ++c) dk[c] += dl * qrow[c];
                    }
                }
            }
        });
}

Tensor ssm_scan(const Tensor& x, const Tensor& a, const Tensor& b_in, const Tensor& c_out,
                const Tensor& d_skip, const Tensor& w_gate, const Tensor& b_gate) {
    const int T = x.rows(), cd = x.cols();
    const int S = a.cols();
    expect(a.rows() == 1, "ssm_scan: a must be [1,S]");
    expect(b_in.rows() == S && b_in.cols() == cd, "ssm_scan: B must be [S,Cd]");
    expect(c_out.rows() == cd && c_out.cols() == S, "ssm_scan: C must be [Cd,S]");
    expect(d_skip.rows() == 1 && d_skip.cols() == cd, "ssm_scan: D must be [1,Cd]");
    expect(w_gate.rows() == S && w_gate.cols() == cd, "ssm_scan: Wg must be [S,Cd]");
    expect(b_gate.rows() == 1 && b_gate.cols() == S, "ssm_scan: bg must be [1,S]");

    std::vector<double> hs(static_cast<size_t>(T) * S), gs(static_cast<size_t>(T) * S), us(static_cast<size_t>(T) * S);
    auto out = blank(T, cd);
    std::vector<double> h(static_cast<size_t>(S), 0.0);
    for (int t = 0; t < T; ++t) {
        const double* xt = x.value().data() + size_t(t) * cd;
        for (int s = 0; s < S; ++s) {
            const double* wg = w_gate.value().data() + size_t(s) * cd;
            const double* bi = b_in.value().data() + size_t(s) * cd;
            double pre = b_gate.value()[size_t(s)];
            double u = 0.0;
            for (int c = 0; c < cd; ++c) {
                pre += wg[c] * xt[c];
                u += bi[c] * xt[c];
            }
            double g = sigmoid_s(pre);
            double hv = g * (a.value()[size_t(s)] * h[size_t(s)]) + (1.0 - g) * u;
            gs[size_t(t) * S + s] = g;
            us[size_t(t) * S + s] = u;
            hs[size_t(t) * S + s] = hv;
            h[size_t(s)] = hv;
        }
        double* yrow = out->value.data() + size_t(t) * cd;
        const double* ht = hs.data() + size_t(t) * S;
        for (int c = 0; c < cd; ++c) {
            const double* crow = c_out.value().data() + size_t(c) * S;
            double acc = d_skip.value()[size_t(c)] * xt[c];
            for (int s = 0; s < S; ++s) acc += crow[s] * ht[s];
            yrow[c] = acc;
        }
    }

    auto px = x.node(), pa = a.node(), pb = b_in.node(), pc = c_out.node(), pd = d_skip.node(),
         pw = w_gate.node(), pbg = b_gate.node();
    return finish(
        "ssm_scan", out, {px, pa, pb, pc, pd, pw, pbg},
        [px, pa, pb, pc, pd, pw, pbg, hs, gs, us, T, cd, S](TensorNode& self) {
            px->ensure_grad();
            pa->ensure_grad();
            pb->ensure_grad();
            pc->ensure_grad();
            pd->ensure_grad();
            pw->ensure_grad();
            pbg->ensure_grad();
            std::vector<double> dh(static_cast<size_t>(S), 0.0);
            for (int t = T - 1; t >= 0; --t) {
                const double* dy = self.grad.data() + size_t(t) * cd;
                const double* xt = px->value.data() + size_t(t) * cd;
                const double* ht = hs.data() + size_t(t) * S;
                double* dx = px->grad.data() + size_t(t) * cd;
                // y_t = C h_t + D o x_t
                for (int c = 0; c < cd; ++c) {
                    const double* crow = pc->value.data() + size_t(c) * S;
                    double* dcrow = pc->grad.data() + size_t(c) * S;
                    for (int s = 0; s < S; ++s) {
                        dh[size_t(s)] += crow[s] * dy[c];
                        dcrow[s] += dy[c] * ht[s];
                    }
                    pd->grad[size_t(c)] += dy[c] * xt[c];
                    dx[c] += pd->value[size_t(c)] * dy[c];
                }
                // h_t = g o (a o h_prev) + (1-g) o u
                for (int s = 0; s < S; ++s) {
                    const double g = gs[size_t(t) * S + s];
                    const double u = us[size_t(t) * S + s];
                    const double hprev = t > 0 ? hs[size_t(t - 1) * S + s] : 0.0;
                    const double av = pa->value[size_t(s)];
                    const double dhv = dh[size_t(s)];
                    const double dgate = dhv * (av * hprev - u);
                    const double dpre = dgate * g * (1.0 - g);
                    const double du = dhv * (1.0 - g);
                    pa->grad[size_t(s)] += dhv * g * hprev;
                    pbg->grad[size_t(s)] += dpre;
                    const double* wg = pw->value.data() + size_t(s) * cd;
                    const double* bi = pb->value.data() + size_t(s) * cd;
                    double* dwg = pw->grad.data() + size_t(s) * cd;
                    double* dbi = pb->grad.data() + size_t(s) * cd;
                    for (int c = 0; c < cd; ++c) {
                        dwg[c] += dpre * xt[c];
                        dbi[c] += du * xt[c];
                        dx[c] += wg[c] * dpre + bi[c] * du;
                    }
                    dh[size_t(s)] = dhv * g * av;  // flows to h_{t-1}
                }
            }
        });
}

Tensor glru_scan(const Tensor& v, const Tensor& wh, const Tensor& uh, const Tensor& wg,
                 const Tensor& ug, const Tensor& wa, const Tensor& ba) {
    const int T = v.rows(), C = v.cols();
    auto sq = [&](const Tensor& m, const char* what) {
        expect(m.rows() == C && m.cols() == C, what);
    };
    sq(wh, "glru_scan: Wh must be [C,C]");
    sq(uh, "glru_scan: Uh must be [C,C]");
    sq(wg, "glru_scan: Wg must be [C,C]");
    sq(ug, "glru_scan: Ug must be [C,C]");
    sq(wa, "glru_scan: Wa must be [C,C]");
    expect(ba.rows() == 1 && ba.cols() == C, "glru_scan: ba must be [1,C]");

    auto matvec = [C](const double* m, const double* x, double* y) {
        for (int r = 0; r < C; ++r) {
            const double* row = m + size_t(r) * C;
            double acc = 0.0;
            for (int c = 0; c < C; ++c) acc += row[c] * x[c];
            y[r] = acc;
        }
    };

    std::vector<double> gs(static_cast<size_t>(T) * C), cs(static_cast<size_t>(T) * C), hts(static_cast<size_t>(T) * C),
        als(static_cast<size_t>(T) * C);
    auto out = blank(T, C);
    std::vector<double> hprev(static_cast<size_t>(C), 0.0), tmp1(static_cast<size_t>(C)), tmp2(static_cast<size_t>(C));
    for (int t = 0; t < T; ++t) {
        const double* vt = v.value().data() + size_t(t) * C;
        double* g = gs.data() + size_t(t) * C;
        double* cgh = cs.data() + size_t(t) * C;
        double* htil = hts.data() + size_t(t) * C;
        double* al = als.data() + size_t(t) * C;
        double* h = out->value.data() + size_t(t) * C;

        matvec(wg.value().data(), vt, tmp1.data());
        matvec(ug.value().data(), hprev.data(), tmp2.data());
        for (int c = 0; c < C; ++c) g[c] = sigmoid_s(tmp1[c] + tmp2[c]);
        for (int c = 0; c < C; ++c) cgh[c] = g[c] * hprev[size_t(c)];
        matvec(wh.value().data(), vt, tmp1.data());
        matvec(uh.value().data(), cgh, tmp2.data());
        for (int c = 0; c < C; ++c) htil[c] = std::tanh(tmp1[c] + tmp2[c]);
        matvec(wa.value().data(), vt, tmp1.data());
        for (int c = 0; c < C; ++c) al[c] = sigmoid_s(tmp1[c] + ba.value()[size_t(c)]);
        for (int c = 0; c < C; ++c) h[c] = (1.0 - al[c]) * hprev[size_t(c)] + al[c] * htil[c];
        std::copy(h, h + C, hprev.begin());
    }

    auto pv = v.node(), pwh = wh.node(), puh = uh.node(), pwg = wg.node(), pug = ug.node(),
         pwa = wa.node(), pba = ba.node();
    return finish(
        "glru_scan", out, {pv, pwh, puh, pwg, pug, pwa, pba},
        [pv, pwh, puh, pwg, pug, pwa, pba, gs, cs, hts, als, T, C](TensorNode& self) {
            for (auto& p : {pv, pwh, puh, pwg, pug, pwa, pba}) p->ensure_grad();
            auto matvec_t = [C](const double* m, const double* x, double* y) {
                // y += M^T x
                for (int r = 0; r < C; ++r) {
                    const double* row = m + size_t(r) * C;
                    const double xv = x[r];
                    for (int c = 0; c < C; ++c) y[c] += row[c] * xv;
                }
            };
            auto outer_acc = [C](double* m, const double* a, const double* b) {
                // M += a b^T
                for (int r = 0; r < C; ++r) {
                    double* row = m + size_t(r) * C;
                    const double av = a[r];
                    for (int c = 0; c < C; ++c) row[c] += av * b[c];
                }
            };
            std::vector<double> dh(static_cast<size_t>(C), 0.0), dpre(static_cast<size_t>(C)), dc(static_cast<size_t>(C));
            for (int t = T - 1; t >= 0; --t) {
                const double* vt = pv->value.data() + size_t(t) * C;
                const double* g = gs.data() + size_t(t) * C;
                const double* cgh = cs.data() + size_t(t) * C;
                const double* htil = hts.data() + size_t(t) * C;
                const double* al = als.data() + size_t(t) * C;
                const double* hprev =
                    t > 0 ? self.value.data() + size_t(t - 1) * C : nullptr;
                double* dv = pv->grad.data() + size_t(t) * C;

                for (int c = 0; c < C; ++c) dh[size_t(c)] += self.grad[size_t(t) * C + c];

                // alpha gate
                for (int c = 0; c < C; ++c) {
                    double hp = hprev ? hprev[c] : 0.0;
                    double dal = dh[size_t(c)] * (htil[c] - hp);
                    dpre[size_t(c)] = dal * al[c] * (1.0 - al[c]);
                    pba->grad[size_t(c)] += dpre[size_t(c)];
                }
                outer_acc(pwa->grad.data(), dpre.data(), vt);
                matvec_t(pwa->value.data(), dpre.data(), dv);

                // candidate
                for (int c = 0; c < C; ++c)
                    dpre[size_t(c)] = dh[size_t(c)] * al[c] * (1.0 - htil[c] * htil[c]);
                outer_acc(pwh->grad.data(), dpre.data(), vt);
                matvec_t(pwh->value.data(), dpre.data(), dv);
                outer_acc(puh->grad.data(), dpre.data(), cgh);
                std::fill(dc.begin(), dc.end(), 0.0);
                matvec_t(puh->value.data(), dpre.data(), dc.data());

                // recurrence gate; dc = dL/d(g o hprev)
                for (int c = 0; c < C; ++c) {
                    double hp = hprev ? hprev[c] : 0.0;
                    double dg = dc[size_t(c)] * hp;
                    dpre[size_t(c)] = dg * g[c] * (1.0 - g[c]);
                }
                outer_acc(pwg->grad.data(), dpre.data(), vt);
                matvec_t(pwg->value.data(), dpre.data(), dv);
                if (hprev) outer_acc(pug->grad.data(), dpre.data(), hprev);

                // carry to h_{t-1}
                if (t > 0) {
                    std::vector<double>& carry = dh;
                    std::vector<double> next(static_cast<size_t>(C), 0.0);
                    for (int c = 0; c < C; ++c)
                        next[size_t(c)] = carry[size_t(c)] * (1.0 - al[c]) + dc[size_t(c)] * g[c];
                    matvec_t(pug->value.data(), dpre.data(), next.data());
                    dh = std::move(next);
                } else {
                    std::fill(dh.begin(), dh.end(), 0.0);
                }
            }
        });
}

namespace {

// Cyclic Jacobi on a symmetric matrix; vals descending, vecs in columns,
// each column's largest-magnitude entry made positive.
void jacobi_eigh_impl(std::vector<double> a, int n, std::vector<double>& vals,
                      std::vector<double>& vecs) {
    std::vector<double> v(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[size_t(i) * n + i] = 1.0;

    double norm = 0.0;
    for (double x : a) norm += x * x;
    norm = std::sqrt(norm);
    const double tol = std::max(1e-14 * norm, 1e-300);

    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a[size_t(p) * n + q] * a[size_t(p) * n + q];
        if (std::sqrt(off) <= tol) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = a[size_t(p) * n + q];
                if (std::abs(apq) <= tol / double(n)) continue;
                double theta = (a[size_t(q) * n + q] - a[size_t(p) * n + p]) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < n; ++i) {
                    double aip = a[size_t(i) * n + p], aiq = a[size_t(i) * n + q];
                    a[size_t(i) * n + p] = c * aip - s * aiq;
                    a[size_t(i) * n + q] = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    double api = a[size_t(p) * n + i], aqi = a[size_t(q) * n + i];
                    a[size_t(p) * n + i] = c * api - s * aqi;
                    a[size_t(q) * n + i] = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    double vip = v[size_t(i) * n + p], viq = v[size_t(i) * n + q];
                    v[size_t(i) * n + p] = c * vip - s * viq;
                    v[size_t(i) * n + q] = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[size_t(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
        return a[size_t(x) * n + x] > a[size_t(y) * n + y];
    });
    vals.resize(static_cast<size_t>(n));
    vecs.assign(static_cast<size_t>(n) * n, 0.0);
    for (int j = 0; j < n; ++j) {
        int src = order[size_t(j)];
        vals[size_t(j)] = a[size_t(src) * n + src];
        int arg = 0;
        double best = 0.0;
        for (int i = 0; i < n; ++i) {
            double x = std::abs(v[size_t(i) * n + src]);
            if (x > best) {
                best = x;
                arg = i;
            }
        }
        double sgn = v[size_t(arg) * n + src] < 0.0 ? -1.0 : 1.0;
        for (int i = 0; i < n; ++i) vecs[size_t(i) * n + j] = sgn * v[size_t(i) * n + src];
    }
}

}  // namespace

Tensor cov_reweight_diag(const Tensor& h, int rank) {
    const int T = h.rows(), C = h.cols();
    if (T < 2) throw DegenerateInput("cov_reweight_diag: need at least 2 rows");
    if (rank < 1 || rank > C) throw DegenerateInput("cov_reweight_diag: rank outside [1,C]");

    std::vector<double> mean(static_cast<size_t>(C), 0.0);
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c) mean[size_t(c)] += h.value()[size_t(t) * C + c];
    for (auto& m : mean) m /= double(T);

    std::vector<double> sigma(static_cast<size_t>(C) * C, 0.0);
    for (int t = 0; t < T; ++t) {
        const double* row = h.value().data() + size_t(t) * C;
        for (int i = 0; i < C; ++i) {
            double zi = row[i] - mean[size_t(i)];
            for (int j = i; j < C; ++j)
                sigma[size_t(i) * C + j] += zi * (row[j] - mean[size_t(j)]);
        }
    }
    double diag_mean = 0.0;
    for (int i = 0; i < C; ++i) {
        for (int j = i; j < C; ++j) {
            sigma[size_t(i) * C + j] /= double(T);
            sigma[size_t(j) * C + i] = sigma[size_t(i) * C + j];
        }
        diag_mean += sigma[size_t(i) * C + i];
    }
    diag_mean /= double(C);
    const double eps = std::max(1e-3 * diag_mean, 1e-6);  // constant in backward
    for (int i = 0; i < C; ++i) sigma[size_t(i) * C + i] += eps;

    std::vector<double> vals, vecs;
    jacobi_eigh_impl(sigma, C, vals, vecs);

    auto out = blank(1, C);
    for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int i = 0; i < rank; ++i) {
            double u = vecs[size_t(c) * C + i];
            acc += vals[size_t(i)] * u * u;
        }
        out->value[size_t(c)] = acc;
    }

    auto ph = h.node();
    return finish(
        "cov_reweight_diag", out, {ph},
        [ph, mean, vals, vecs, rank, T, C](TensorNode& self) {
            ph->ensure_grad();
            const double* gd = self.grad.data();
            // G = sum_i dL/dlambda_i u_i u_i^T + cross eigenvector terms.
            std::vector<double> g(static_cast<size_t>(C) * C, 0.0);
            for (int i = 0; i < rank; ++i) {
                double dli = 0.0;
                for (int c = 0; c < C; ++c) {
                    double u = vecs[size_t(c) * C + i];
                    dli += gd[c] * u * u;
                }
                // v_i = dL/du_i = 2 lambda_i (gd o u_i)
                std::vector<double> vi(static_cast<size_t>(C));
                for (int c = 0; c < C; ++c)
                    vi[size_t(c)] = 2.0 * vals[size_t(i)] * gd[c] * vecs[size_t(c) * C + i];
                for (int j = 0; j < C; ++j) {
                    if (j == i) {
                        for (int a = 0; a < C; ++a)
                            for (int b = 0; b < C; ++b)
                                g[size_t(a) * C + b] +=
                                    dli * vecs[size_t(a) * C + i] * vecs[size_t(b) * C + i];
                        continue;
                    }
                    double dot = 0.0;
                    for (int c = 0; c < C; ++c) dot += vi[size_t(c)] * vecs[size_t(c) * C + j];
                    double gap = vals[size_t(i)] - vals[size_t(j)];
                    double scale_gap =
                        std::abs(gap) < 1e-8 ? 0.0 : dot / gap;  // clamp near-degenerate
                    if (scale_gap == 0.0) continue;
                    for (int a = 0; a < C; ++a)
                        for (int b = 0; b < C; ++b)
                            g[size_t(a) * C + b] += scale_gap * vecs[size_t(a) * C + j] *
                                                    vecs[size_t(b) * C + i];
                }
            }
            // Symmetrize, then chain through Sigma = (1/T) sum z z^T.
            for (int a = 0; a < C; ++a)
                for (int b = a + 1; b < C; ++b) {
                    double s = 0.5 * (g[size_t(a) * C + b] + g[size_t(b) * C + a]);
                    g[size_t(a) * C + b] = s;
                    g[size_t(b) * C + a] = s;
                }
            for (int t = 0; t < T; ++t) {
                const double* row = ph->value.data() + size_t(t) * C;
                double* drow = ph->grad.data() + size_t(t) * C;
                for (int a = 0; a < C; ++a) {
                    double acc = 0.0;
                    for (int b = 0; b < C; ++b)
                        acc += g[size_t(a) * C + b] * (row[b] - mean[size_t(b)]);
                    drow[a] += 2.0 / double(T) * acc;
                }
            }
        });
}

Tensor gather_rows(const Tensor& x, std::vector<int> idx) {
    const int C = x.cols();
    for (int i : idx) expect(i >= 0 && i < x.rows(), "gather_rows: index out of range");
    expect(!idx.empty(), "gather_rows: empty index list");
    auto out = blank(int(idx.size()), C);
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy_n(x.value().data() + size_t(idx[r]) * C, C, out->value.data() + r * C);
    auto px = x.node();
    return finish("gather_rows", out, {px}, [px, idx, C](TensorNode& self) {
        px->ensure_grad();
        for (size_t r = 0; r < idx.size(); ++r)
            for (int c = 0; c < C; ++c)
                px->grad[size_t(idx[r]) * C + c] += self.grad[r * size_t(C) + c];
    });
}

Tensor scatter_rows(const Tensor& x, std::vector<int> idx, int rows) {
    expect(int(idx.size()) == x.rows(), "scatter_rows: index count mismatch");
    const int C = x.cols();
    for (int i : idx) expect(i >= 0 && i < rows, "scatter_rows: index out of range");
    auto out = blank(rows, C);
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy_n(x.value().data() + r * size_t(C), C, out->value.data() + size_t(idx[r]) * C);
    auto px = x.node();
    return finish("scatter_rows", out, {px}, [px, idx, C](TensorNode& self) {
        px->ensure_grad();
        for (size_t r = 0; r < idx.size(); ++r)
            for (int c = 0; c < C; ++c)
                px->grad[r * size_t(C) + c] += self.grad[size_t(idx[r]) * C + c];
    });
}

Tensor select_cols(const Tensor& probs, std::vector<int> idx) {
    expect(int(idx.size()) == probs.rows(), "select_cols: index count mismatch");
    const int E = probs.cols();
    for (int i : idx) expect(i >= 0 && i < E, "select_cols: index out of range");
    auto out = blank(probs.rows(), 1);
    for (size_t t = 0; t < idx.size(); ++t)
        out->value[t] = probs.value()[t * size_t(E) + size_t(idx[t])];
    auto pp = probs.node();
    return finish("select_cols", out, {pp}, [pp, idx, E](TensorNode& self) {
        pp->ensure_grad();
        for (size_t t = 0; t < idx.size(); ++t)
            pp->grad[t * size_t(E) + size_t(idx[t])] += self.grad[t];
    });
}

Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& targets,
                       const std::vector<double>& weights, double weight_norm) {
    expect(logits.cols() == 1, "bce_with_logits: logits must be [B,1]");
    expect(static_cast<size_t>(logits.rows()) == targets.size() && targets.size() == weights.size(),
           "bce_with_logits: size mismatch");
    if (!(weight_norm > 0.0)) throw DegenerateInput("bce_with_logits: weight_norm must be > 0");
    auto out = blank(1, 1);
    double acc = 0.0;
    for (size_t b = 0; b < targets.size(); ++b) {
        double l = logits.value()[b];
        acc += weights[b] *
               (std::max(l, 0.0) - l * targets[b] + std::log1p(std::exp(-std::abs(l))));
    }
    out->value[0] = acc / weight_norm;
    auto pl = logits.node();
    return finish("bce_with_logits", out, {pl},
                  [pl, targets, weights, weight_norm](TensorNode& self) {
                      pl->ensure_grad();
                      for (size_t b = 0; b < targets.size(); ++b) {
                          double l = pl->value[b];
                          pl->grad[b] += self.grad[0] * weights[b] *
                                         (sigmoid_s(l) - targets[b]) / weight_norm;
                      }
                  });
}

Tensor orth_penalty(const Tensor& u) {
    const int C = u.rows(), d = u.cols();
    std::vector<double> g(static_cast<size_t>(d) * d, 0.0);  // U^T U - I
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int c = 0; c < C; ++c)
                acc += u.value()[size_t(c) * d + i] * u.value()[size_t(c) * d + j];
            g[size_t(i) * d + j] = acc - (i == j ? 1.0 : 0.0);
        }
    auto out = blank(1, 1);
    double val = 0.0;
    for (double x : g) val += x * x;
    out->value[0] = val;
    auto pu = u.node();
    return finish("orth_penalty", out, {pu}, [pu, g, C, d](TensorNode& self) {
        pu->ensure_grad();
        // d/dU ||U^T U - I||_F^2 = 4 U G with symmetric G.
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < d; ++i) {
                double acc = 0.0;
                for (int j = 0; j < d; ++j)
                    acc += pu->value[size_t(c) * d + j] * g[size_t(j) * d + i];
                pu->grad[size_t(c) * d + i] += self.grad[0] * 4.0 * acc;
            }
    });
}

void jacobi_eigh(std::vector<double> sym, int n, std::vector<double>& vals,
                 std::vector<double>& vecs) {
    jacobi_eigh_impl(std::move(sym), n, vals, vecs);
}

void ssm_step(const double* x_t, const double* a, const double* b_in, const double* c_out,
              const double* d_skip, const double* w_gate, const double* b_gate,
              double* state, double* y_t, int cd, int s) {
    for (int i = 0; i < s; ++i) {
        double u = 0.0, pre = b_gate[i];
        const double* bi = b_in + size_t(i) * cd;
        const double* wg = w_gate + size_t(i) * cd;
        for (int c = 0; c < cd; ++c) {
            u += bi[c] * x_t[c];
            pre += wg[c] * x_t[c];
        }
        const double g = sigmoid_s(pre);
        state[i] = g * (a[i] * state[i]) + (1.0 - g) * u;
    }
    for (int c = 0; c < cd; ++c) {
        const double* crow = c_out + size_t(c) * s;
        double acc = d_skip[c] * x_t[c];
        for (int i = 0; i < s; ++i) acc += crow[i] * state[i];
        y_t[c] = acc;
    }
}

}  // namespace falldet::ops
