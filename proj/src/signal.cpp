#include "falldet/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>

namespace falldet {

namespace {

// FFTW plan creation/destruction is not thread-safe; execution on distinct
// plans is. FFTW_ESTIMATE keeps planning deterministic.
std::mutex g_fftw_mutex;

void dft_inplace(std::vector<std::complex<double>>& buf, int sign) {
    auto* raw = reinterpret_cast<fftw_complex*>(buf.data());
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        plan = fftw_plan_dft_1d(int(buf.size()), raw, raw, sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        fftw_destroy_plan(plan);
    }
}

size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace

SampleSeries resample_linear(const SampleSeries& in, double target_hz) {
    in.validate();
    if (!(target_hz > 0.0) || !std::isfinite(target_hz))
        throw DegenerateInput("resample_linear: target rate must be positive");
    int64_t n_in = in.frames();
    if (n_in < 2) throw DegenerateInput("resample_linear: need at least 2 frames");

    // Covers [t0, t0 + (n_in-1)/rate]; the tiny slack absorbs fp error in
    // rational rate ratios so exact ratios keep their exact output length.
    int64_t n_out = int64_t(std::floor(double(n_in - 1) * target_hz / in.rate_hz + 1e-9)) + 1;
    SampleSeries out(target_hz, in.t0_s, in.channels);
    out.data.resize(static_cast<size_t>(n_out) * in.channels);

    const double step = in.rate_hz / target_hz;
    const int C = in.channels;
#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < n_out; ++n) {
        double pos = double(n) * step;
        int64_t i = int64_t(pos);
        if (i >= n_in - 1) {
            i = n_in - 2;
            pos = double(n_in - 1);
        }
        double frac = pos - double(i);
        if (frac < 1e-12) {
            for (int c = 0; c < C; ++c) out.data[size_t(n) * C + c] = in.at(i, c);
        } else if (frac > 1.0 - 1e-12) {
            for (int c = 0; c < C; ++c) out.data[size_t(n) * C + c] = in.at(i + 1, c);
        } else {
            for (int c = 0; c < C; ++c)
                out.data[size_t(n) * C + c] =
                    in.at(i, c) * (1.0 - frac) + in.at(i + 1, c) * frac;
        }
    }
    return out;
}

Envelope energy_envelope(const SampleSeries& in) {
    in.validate();
    Envelope e;
    e.rate_hz = in.rate_hz;
    e.t0_s = in.t0_s;
    e.values.resize(static_cast<size_t>(in.frames()));
    const int C = in.channels;
#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < in.frames(); ++n) {
        double acc = 0.0;
        for (int c = 0; c < C; ++c) {
            double v = in.at(n, c);
            acc += v * v;
        }
        e.values[size_t(n)] = std::sqrt(acc);
    }
    return e;
}

DelayEstimate gcc_phat_delay(const Envelope& a, const Envelope& b, double max_lag_s) {
    a.validate();
    b.validate();
    if (a.rate_hz != b.rate_hz) throw ShapeMismatch("gcc_phat_delay: rates differ");
    const int64_t na = a.frames(), nb = b.frames();
    if (na < 8 || nb < 8) throw DegenerateInput("gcc_phat_delay: inputs shorter than 8");
    const double rate = a.rate_hz;
    const int64_t lag_max = int64_t(std::llround(max_lag_s * rate));
    if (lag_max < 1 || lag_max > std::min(na, nb) / 2)
        throw DegenerateInput("gcc_phat_delay: max lag outside (0, N/2]");

    auto all_zero = [](const std::vector<double>& v) {
        for (double x : v)
            if (x != 0.0) return false;
        return true;
    };
    if (all_zero(a.values) || all_zero(b.values))
        throw NoSignal("gcc_phat_delay: all-zero input");

    // Zero-pad to at least na+nb-1 so circular correlation equals linear.
    const size_t M = next_pow2(static_cast<size_t>(na + nb - 1));
    std::vector<std::complex<double>> fa(M, {0.0, 0.0}), fb(M, {0.0, 0.0});
    double mean_a = 0.0, mean_b = 0.0;
    for (double v : a.values) mean_a += v;
    for (double v : b.values) mean_b += v;
    mean_a /= double(na);
    mean_b /= double(nb);
    for (int64_t i = 0; i < na; ++i) fa[size_t(i)] = a.values[size_t(i)] - mean_a;
    for (int64_t i = 0; i < nb; ++i) fb[size_t(i)] = b.values[size_t(i)] - mean_b;
    dft_inplace(fa, FFTW_FORWARD);
    dft_inplace(fb, FFTW_FORWARD);

    // PHAT whitening: keep phase only, drop bins with negligible energy.
    constexpr double kPhatFloor = 1e-12;
    size_t live_bins = 0;
    for (size_t k = 0; k < M; ++k) {
        std::complex<double> g = fa[k] * std::conj(fb[k]);
        double mag = std::abs(g);
        if (mag > kPhatFloor) {
            fa[k] = g / mag;
            ++live_bins;
        } else {
            fa[k] = {0.0, 0.0};
        }
    }
    if (live_bins == 0) throw NoSignal("gcc_phat_delay: no spectral overlap");
    dft_inplace(fa, FFTW_BACKWARD);

    // With G = Xa * conj(Xb), a content delay of d in b peaks at lag -d, so
    // the reported delay negates the arg max (positive = b lags a).
    auto corr = [&](int64_t lag) {
        size_t idx = lag >= 0 ? size_t(lag) : M - size_t(-lag);
        return fa[idx].real() / double(M);
    };
    int64_t best = -lag_max;
    double best_val = corr(best);
    for (int64_t lag = -lag_max + 1; lag <= lag_max; ++lag) {
        double v = corr(lag);
        if (v > best_val) {
            best_val = v;
            best = lag;
        }
    }
    double y1 = corr(best - 1), y2 = best_val, y3 = corr(best + 1);
    double denom = y1 - 2.0 * y2 + y3;
    double shift = 0.0;
    if (denom < 0.0) shift = std::clamp(0.5 * (y1 - y3) / denom, -1.0, 1.0);

    DelayEstimate est;
    est.delay_s = -(double(best) + shift) / rate;
    est.peak_coherence = std::clamp(y2 * double(M) / double(live_bins), 0.0, 1.0);
    return est;
}

std::vector<LocalLag> local_lags(const Envelope& a, const Envelope& b, double max_lag_s,
                                 double seg_s, double min_coherence) {
    a.validate();
    b.validate();
    if (a.rate_hz != b.rate_hz) throw ShapeMismatch("local_lags: rates differ");
    const double rate = a.rate_hz;
    const int64_t n = std::min(a.frames(), b.frames());
    const int64_t seg = int64_t(std::llround(seg_s * rate));
    if (seg < 16) throw DegenerateInput("local_lags: segment too short");
    const int64_t stride = seg / 2;

    std::vector<LocalLag> out;
    for (int64_t s = 0; s + seg <= n; s += stride) {
        Envelope ea, eb;
        ea.rate_hz = eb.rate_hz = rate;
        ea.values.assign(a.values.begin() + s, a.values.begin() + s + seg);
        eb.values.assign(b.values.begin() + s, b.values.begin() + s + seg);
        DelayEstimate est;
        try {
            est = gcc_phat_delay(ea, eb, max_lag_s);
        } catch (const NoSignal&) {
            continue;
        }
        if (est.peak_coherence > min_coherence)
            out.push_back({(double(s) + double(seg) / 2.0) / rate, est.delay_s});
    }
    return out;
}

DriftModel fit_clock_drift(const std::vector<LocalLag>& lags) {
    if (lags.size() < 2) throw InsufficientData("fit_clock_drift: need >= 2 lags");
    double st = 0.0, sl = 0.0;
    for (const auto& l : lags) {
        st += l.t_s;
        sl += l.lag_s;
    }
    const double n = double(lags.size());
    const double mt = st / n, ml = sl / n;
    double var = 0.0, cov = 0.0;
    for (const auto& l : lags) {
        var += (l.t_s - mt) * (l.t_s - mt);
        cov += (l.t_s - mt) * (l.lag_s - ml);
    }
    if (var <= 0.0) throw InsufficientData("fit_clock_drift: need >= 2 distinct times");
    DriftModel m;
    m.alpha = cov / var;
    m.beta = ml - m.alpha * mt;
    if (!(std::abs(m.alpha) < 0.01))
        throw DegenerateInput("fit_clock_drift: slope outside sane clock skew");
    return m;
}

SampleSeries affine_warp(const SampleSeries& in, const DriftModel& model) {
    in.validate();
    const int64_t n_in = in.frames();
    if (n_in < 2) throw DegenerateInput("affine_warp: need at least 2 frames");
    SampleSeries out(in.rate_hz, in.t0_s, in.channels);
    out.data.resize(in.data.size());
    const int C = in.channels;
#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < n_in; ++n) {
        double idx = double(n) * (1.0 + model.alpha) + model.beta * in.rate_hz;
        idx = std::clamp(idx, 0.0, double(n_in - 1));
        int64_t i = std::min(int64_t(idx), n_in - 2);
        double frac = idx - double(i);
        if (frac < 1e-12) {
            for (int c = 0; c < C; ++c) out.data[size_t(n) * C + c] = in.at(i, c);
        } else {
            for (int c = 0; c < C; ++c)
                out.data[size_t(n) * C + c] =
                    in.at(i, c) * (1.0 - frac) + in.at(i + 1, c) * frac;
        }
    }
    return out;
}

SampleSeries hampel_filter(const SampleSeries& in, int half_window, double k) {
    in.validate();
    if (half_window < 1) throw DegenerateInput("hampel_filter: half_window must be >= 1");
    if (!(k >= 0.0)) throw DegenerateInput("hampel_filter: k must be >= 0");
    const int64_t N = in.frames();
    const int C = in.channels;
    SampleSeries out = in;

#pragma omp parallel for schedule(static) collapse(2)
    for (int c = 0; c < C; ++c) {
        for (int64_t n = 0; n < N; ++n) {
            static thread_local std::vector<double> win;
            int64_t lo = std::max<int64_t>(0, n - half_window);
            int64_t hi = std::min<int64_t>(N - 1, n + half_window);
            win.clear();
            for (int64_t i = lo; i <= hi; ++i) win.push_back(in.at(i, c));
            size_t m = win.size();
            std::sort(win.begin(), win.end());
            double med = (m & 1) ? win[m / 2] : 0.5 * (win[m / 2 - 1] + win[m / 2]);
            for (auto& v : win) v = std::abs(v - med);
            std::sort(win.begin(), win.end());
            double mad = (m & 1) ? win[m / 2] : 0.5 * (win[m / 2 - 1] + win[m / 2]);
            // Strict inequality: zero MAD replaces anything off the median.
            if (std::abs(in.at(n, c) - med) > k * 1.4826 * mad) out.at(n, c) = med;
        }
    }
    return out;
}

namespace {

constexpr double kSqrt3 = 1.7320508075688772935;
constexpr double kSqrt2 = 1.4142135623730950488;

// One Daubechies-4 analysis level, factored into lifting steps. Every step
// writes one parity band from the other, so the inverse replays the steps
// backwards exactly, replicate boundary included: reconstruction is exact
// for any length and any boundary rule.
void d4_forward(std::vector<double>& x, std::vector<double>& approx,
                std::vector<double>& detail) {
    const int64_t n = int64_t(x.size());
    const int64_t ns = (n + 1) / 2, nd = n / 2;
    approx.resize(static_cast<size_t>(ns));
    detail.resize(static_cast<size_t>(nd));
    for (int64_t i = 0; i < ns; ++i) approx[size_t(i)] = x[size_t(2 * i)];
    for (int64_t i = 0; i < nd; ++i) detail[size_t(i)] = x[size_t(2 * i + 1)];

    for (int64_t i = 0; i < ns; ++i)
        approx[size_t(i)] += kSqrt3 * detail[size_t(std::min(i, nd - 1))];
    for (int64_t i = 0; i < nd; ++i)
        detail[size_t(i)] -= (kSqrt3 / 4.0) * approx[size_t(i)] +
                             ((kSqrt3 - 2.0) / 4.0) * approx[size_t(std::max<int64_t>(i - 1, 0))];
    for (int64_t i = 0; i < ns; ++i)
        approx[size_t(i)] -= detail[size_t(std::min(i + 1, nd - 1))];
    for (int64_t i = 0; i < ns; ++i) approx[size_t(i)] *= (kSqrt3 - 1.0) / kSqrt2;
    for (int64_t i = 0; i < nd; ++i) detail[size_t(i)] *= (kSqrt3 + 1.0) / kSqrt2;
}

void d4_inverse(const std::vector<double>& approx_in, const std::vector<double>& detail_in,
                std::vector<double>& x, int64_t n) {
    const int64_t ns = (n + 1) / 2, nd = n / 2;
    std::vector<double> approx = approx_in, detail = detail_in;
    for (int64_t i = 0; i < nd; ++i) detail[size_t(i)] /= (kSqrt3 + 1.0) / kSqrt2;
    for (int64_t i = 0; i < ns; ++i) approx[size_t(i)] /= (kSqrt3 - 1.0) / kSqrt2;
    for (int64_t i = 0; i < ns; ++i)
        approx[size_t(i)] += detail[size_t(std::min(i + 1, nd - 1))];
    for (int64_t i = 0; i < nd; ++i)
        detail[size_t(i)] += (kSqrt3 / 4.0) * approx[size_t(i)] +
                             ((kSqrt3 - 2.0) / 4.0) * approx[size_t(std::max<int64_t>(i - 1, 0))];
    for (int64_t i = 0; i < ns; ++i)
        approx[size_t(i)] -= kSqrt3 * detail[size_t(std::min(i, nd - 1))];
    x.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < ns; ++i) x[size_t(2 * i)] = approx[size_t(i)];
    for (int64_t i = 0; i < nd; ++i) x[size_t(2 * i + 1)] = detail[size_t(i)];
}

}  // namespace

SampleSeries wavelet_shrink(const SampleSeries& in, int levels, double threshold_mult) {
    in.validate();
    if (levels < 1) throw DegenerateInput("wavelet_shrink: levels must be >= 1");
    if (threshold_mult < 0.0) throw DegenerateInput("wavelet_shrink: negative threshold");
    const int64_t N = in.frames();
    if (N < 16) throw DegenerateInput("wavelet_shrink: need at least 16 frames");
    const int C = in.channels;
    SampleSeries out = in;

#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        std::vector<double> cur(static_cast<size_t>(N));
        for (int64_t n = 0; n < N; ++n) cur[size_t(n)] = in.at(n, c);

        std::vector<std::vector<double>> details(static_cast<size_t>(levels));
        std::vector<int64_t> lens(static_cast<size_t>(levels));
        for (int lev = 0; lev < levels; ++lev) {
            lens[size_t(lev)] = int64_t(cur.size());
            std::vector<double> approx, detail;
            d4_forward(cur, approx, detail);
            details[size_t(lev)] = std::move(detail);
            cur = std::move(approx);
        }

        if (threshold_mult > 0.0) {
            // Universal threshold from the finest band's noise estimate.
            std::vector<double> d0 = details[0];
            double med = median(d0);
            for (auto& v : d0) v = std::abs(v - med);
            double sigma = median(std::move(d0)) / 0.6745;
            double thr = threshold_mult * sigma * std::sqrt(2.0 * std::log(double(N)));
            for (auto& band : details)
                for (auto& v : band)
                    v = v > thr ? v - thr : (v < -thr ? v + thr : 0.0);
        }

        for (int lev = levels - 1; lev >= 0; --lev) {
            std::vector<double> rec;
            d4_inverse(cur, details[size_t(lev)], rec, lens[size_t(lev)]);
            cur = std::move(rec);
        }
        for (int64_t n = 0; n < N; ++n) out.at(n, c) = cur[size_t(n)];
    }
    return out;
}

SampleSeries robust_normalize(const SampleSeries& in, const ChannelStats& stats) {
    in.validate();
    if (int(stats.median.size()) != in.channels || int(stats.iqr.size()) != in.channels)
        throw ShapeMismatch("robust_normalize: stats do not match channel count");
    SampleSeries out = in;
    const int C = in.channels;
    for (int c = 0; c < C; ++c) {
        double scale = 1.0 / std::max(stats.iqr[size_t(c)], 1e-6);
        double shift = stats.median[size_t(c)];
        for (int64_t n = 0; n < in.frames(); ++n) out.at(n, c) = (in.at(n, c) - shift) * scale;
    }
    return out;
}

Envelope consistency_weight(const Envelope& e_v, const Envelope& e_r) {
    e_v.validate();
    e_r.validate();
    if (e_v.rate_hz != e_r.rate_hz) throw ShapeMismatch("consistency_weight: rates differ");
    if (e_v.frames() != e_r.frames())
        throw ShapeMismatch("consistency_weight: lengths differ");
    const int64_t N = e_v.frames();
    const int64_t half = int64_t(std::llround(0.5 * e_v.rate_hz));
    Envelope gamma;
    gamma.rate_hz = e_v.rate_hz;
    gamma.t0_s = e_v.t0_s;
    gamma.values.resize(static_cast<size_t>(N));

#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < N; ++n) {
        int64_t lo = std::max<int64_t>(0, n - half);
        int64_t hi = std::min<int64_t>(N - 1, n + half);
        int64_t m = hi - lo + 1;
        double sa = 0.0, sb = 0.0;
        for (int64_t i = lo; i <= hi; ++i) {
            sa += e_v.values[size_t(i)];
            sb += e_r.values[size_t(i)];
        }
        double ma = sa / double(m), mb = sb / double(m);
        double va = 0.0, vb = 0.0, cov = 0.0;
        for (int64_t i = lo; i <= hi; ++i) {
            double da = e_v.values[size_t(i)] - ma;
            double db = e_r.values[size_t(i)] - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
        }
        gamma.values[size_t(n)] =
            (va <= 0.0 || vb <= 0.0) ? 0.0 : std::clamp(cov / std::sqrt(va * vb), 0.0, 1.0);
    }
    return gamma;
}

}  // namespace falldet
