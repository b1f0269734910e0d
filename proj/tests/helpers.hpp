#pragma once

// Shared fixtures for the unit suites: random tensors/series, brute-force
// oracles written straight from the math (naive DFT, explicit softmax,
// textbook statistics), and a central finite-difference gradient checker.
// The oracles deliberately avoid the library's own kernels.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "falldet/common.hpp"
#include "falldet/nn.hpp"
#include "falldet/series.hpp"
#include "falldet/tensor.hpp"

namespace testutil {

using falldet::Envelope;
using falldet::Rng;
using falldet::SampleSeries;
using falldet::Tensor;

inline Tensor rand_tensor(Rng& rng, int rows, int cols, double scale = 1.0) {
    std::vector<double> v(size_t(rows) * cols);
    for (auto& x : v) x = rng.uniform(-scale, scale);
    return Tensor::from_vector(rows, cols, std::move(v));
}

inline std::vector<double> rand_vec(Rng& rng, size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-scale, scale);
    return v;
}

inline SampleSeries rand_series(Rng& rng, double rate, int channels, int64_t frames,
                                double scale = 1.0) {
    SampleSeries s(rate, 0.0, channels);
    s.data = rand_vec(rng, size_t(frames) * channels, scale);
    return s;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size() && i < b.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    if (a.size() != b.size()) return 1e300;
    return m;
}

inline double max_abs_diff(const Tensor& a, const std::vector<double>& b) {
    return max_abs_diff(a.value(), std::span<const double>(b));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return 1e300;
    return max_abs_diff(a.value(), b.value());
}

// Textbook Pearson correlation.
inline double pearson(std::span<const double> a, std::span<const double> b) {
    const size_t n = a.size();
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= double(n);
    mb /= double(n);
    double sab = 0, saa = 0, sbb = 0;
    for (size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

// Naive O(N^2) DFT, forward sign convention e^{-i 2 pi k n / N}.
inline std::vector<std::complex<double>> naive_dft(std::span<const double> x) {
    const size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (size_t k = 0; k < n; ++k) {
        std::complex<double> acc{0.0, 0.0};
        for (size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * M_PI * double(k) * double(t) / double(n);
            acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

// Brute-force PHAT delay: whiten the cross-spectrum, evaluate the inverse
// transform at every integer lag in [-max_lag, max_lag], return the argmax.
// Positive delay means b lags a.
inline int brute_phat_delay_samples(std::span<const double> a, std::span<const double> b,
                                    int max_lag) {
    auto xa = naive_dft(a);
    auto xb = naive_dft(b);
    const size_t n = xa.size();
    std::vector<std::complex<double>> g(n);
    for (size_t k = 0; k < n; ++k) {
        std::complex<double> c = xb[k] * std::conj(xa[k]);
        double mag = std::abs(c);
        g[k] = mag < 1e-12 ? std::complex<double>{0.0, 0.0} : c / mag;
    }
    int best_lag = 0;
    double best = -1e300;
    for (int lag = -max_lag; lag <= max_lag; ++lag) {
        std::complex<double> acc{0.0, 0.0};
        for (size_t k = 0; k < n; ++k) {
            const double ang = 2.0 * M_PI * double(k) * double(lag) / double(n);
            acc += g[k] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        if (acc.real() > best) {
            best = acc.real();
            best_lag = lag;
        }
    }
    return best_lag;
}

// Explicit softmax over one logit row.
inline std::vector<double> softmax(std::vector<double> row) {
    double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (auto& v : row) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : row) v /= sum;
    return row;
}

// Central finite-difference check of d(make_loss())/d(leaf) against the
// autograd gradient. Samples up to max_entries coordinates per leaf. The
// loss closure must rebuild the graph from the current leaf values.
template <typename LossFn>
inline double fd_check(LossFn&& make_loss, std::vector<Tensor> leaves, Rng& rng,
                       int max_entries = 4, double h = 1e-4) {
    for (auto& l : leaves) l.zero_grad();
    Tensor loss = make_loss();
    loss.backward();
    double worst = 0.0;
    for (auto& leaf : leaves) {
        auto grad = leaf.grad();
        auto vals = leaf.value_mut();
        const int64_t n = leaf.numel();
        for (int e = 0; e < max_entries; ++e) {
            const size_t i = n <= max_entries ? size_t(e) : size_t(rng.below(uint64_t(n)));
            if (int64_t(i) >= n) break;
            const double keep = vals[i];
            vals[i] = keep + h;
            const double up = make_loss().item();
            vals[i] = keep - h;
            const double dn = make_loss().item();
            vals[i] = keep;
            const double fd = (up - dn) / (2.0 * h);
            const double g = grad.empty() ? 0.0 : grad[i];
            const double err = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-3});
            worst = std::max(worst, err);
            if (n <= max_entries && e + 1 >= n) break;
        }
    }
    return worst;
}

inline std::vector<Tensor> store_tensors(const falldet::nn::ParamStore& ps) {
    std::vector<Tensor> out;
    for (const auto& [_, t] : ps.items) out.push_back(t);
    return out;
}

// Self-deleting scratch directory under the system temp root.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(next_id()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
    std::string sub(const std::string& name) const { return (path / name).string(); }

   private:
    static int next_id() {
        static int id = 0;
        return id++;
    }
};

}  // namespace testutil
