#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "falldet/signal.hpp"
#include "helpers.hpp"

using namespace falldet;
using testutil::rand_series;

namespace {

Envelope make_env(double rate, std::vector<double> vals) {
    Envelope e;
    e.rate_hz = rate;
    e.values = std::move(vals);
    return e;
}

// Smooth nonnegative test envelope: a noise floor plus Gaussian bumps.
Envelope bumpy_envelope(Rng& rng, double rate, double dur_s, int bumps) {
    const int64_t n = int64_t(dur_s * rate);
    std::vector<double> v(size_t(n), 0.0);
    for (int b = 0; b < bumps; ++b) {
        const double tc = rng.uniform(2.0, dur_s - 2.0);
        const double w = rng.uniform(0.15, 0.8);
        const double a = rng.uniform(0.4, 1.5);
        for (int64_t i = 0; i < n; ++i) {
            const double t = double(i) / rate;
            v[size_t(i)] += a * std::exp(-0.5 * (t - tc) * (t - tc) / (w * w));
        }
    }
    for (auto& x : v) x += 0.01;
    return make_env(rate, std::move(v));
}

// Linear interpolation of an envelope at time t, clamped to its span.
double env_at(const Envelope& e, double t) {
    const double pos = std::clamp(t * e.rate_hz, 0.0, double(e.frames() - 1));
    const int64_t i = int64_t(pos);
    const int64_t j = std::min(i + 1, e.frames() - 1);
    const double f = pos - double(i);
    return e.values[size_t(i)] * (1.0 - f) + e.values[size_t(j)] * f;
}

}  // namespace

TEST_SUITE("signal") {

TEST_CASE("resample_linear: constant series survives a rate change exactly") {
    SampleSeries in(200.0, 0.0, 2);
    for (int i = 0; i < 100; ++i) {
        in.data.push_back(3.25);
        in.data.push_back(-1.5);
    }
    SampleSeries out = resample_linear(in, 100.0);
    CHECK(out.rate_hz == 100.0);
    CHECK(out.channels == 2);
    for (int64_t i = 0; i < out.frames(); ++i) {
        CHECK(out.at(i, 0) == 3.25);
        CHECK(out.at(i, 1) == -1.5);
    }
}

TEST_CASE("resample_linear: ramp values match closed-form interpolation") {
    SampleSeries in(200.0, 0.0, 1, {0.0, 1.0, 2.0, 3.0});
    SampleSeries out = resample_linear(in, 100.0);
    // Output sample k sits at t0 + k/100 s; the ramp is value = 200 * t.
    for (int64_t k = 0; k < out.frames(); ++k) {
        const double t = double(k) / 100.0;
        CHECK(out.at(k, 0) == doctest::Approx(200.0 * t).epsilon(1e-12));
    }
    CHECK(out.at(0, 0) == 0.0);  // first sample is a bit-exact copy
}

TEST_CASE("resample_linear: single-sample input is rejected") {
    SampleSeries in(200.0, 0.0, 1, {1.0});
    CHECK_THROWS_AS(resample_linear(in, 100.0), DegenerateInput);
}

TEST_CASE("resample_linear: resampling at the source rate is the identity") {
    Rng rng(11);
    SampleSeries in = rand_series(rng, 100.0, 3, 257);
    SampleSeries out = resample_linear(in, 100.0);
    REQUIRE(out.frames() == in.frames());
    CHECK(testutil::max_abs_diff(out.data, in.data) <= 1e-12);
}

TEST_CASE("energy_envelope: zero input, pythagorean triple, oracle window") {
    SampleSeries z(100.0, 0.0, 3, std::vector<double>(30, 0.0));
    Envelope ez = energy_envelope(z);
    for (double v : ez.values) CHECK(v == 0.0);

    SampleSeries one(100.0, 0.0, 3, {3.0, 4.0, 0.0});
    CHECK(energy_envelope(one).values[0] == doctest::Approx(5.0));

    Rng rng(5);
    SampleSeries r = rand_series(rng, 100.0, 3, 64);
    Envelope er = energy_envelope(r);
    for (int64_t i = 0; i < 64; ++i) {
        const double want = std::sqrt(r.at(i, 0) * r.at(i, 0) + r.at(i, 1) * r.at(i, 1) +
                                      r.at(i, 2) * r.at(i, 2));
        CHECK(er.values[size_t(i)] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("energy_envelope: invariant to axis sign flips and permutations") {
    Rng rng(6);
    SampleSeries r = rand_series(rng, 100.0, 3, 48);
    SampleSeries flipped = r;
    for (int64_t i = 0; i < 48; ++i) {
        const double x = r.at(i, 0), y = r.at(i, 1), z = r.at(i, 2);
        flipped.at(i, 0) = -z;
        flipped.at(i, 1) = x;
        flipped.at(i, 2) = -y;
    }
    Envelope a = energy_envelope(r), b = energy_envelope(flipped);
    CHECK(testutil::max_abs_diff(a.values, b.values) <= 1e-12);
}

TEST_CASE("energy_envelope: wrong channel count is rejected") {
    SampleSeries two(100.0, 0.0, 2, {1.0, 2.0});
    CHECK_THROWS_AS(energy_envelope(two), ShapeMismatch);
}

TEST_CASE("gcc_phat_delay: self-delay is zero with full coherence") {
    Rng rng(21);
    Envelope a = bumpy_envelope(rng, 100.0, 12.0, 6);
    DelayEstimate d = gcc_phat_delay(a, a, 0.5);
    CHECK(std::abs(d.delay_s) <= 0.5 / 100.0);
    CHECK(d.peak_coherence > 0.8);
}

TEST_CASE("gcc_phat_delay: 12-sample shift against the brute-force oracle") {
    Rng rng(22);
    Envelope a = bumpy_envelope(rng, 100.0, 10.0, 5);
    const int shift = 12;
    Envelope b = a;
    // b lags a: b[n] = a[n - shift].
    for (int64_t n = a.frames() - 1; n >= 0; --n)
        b.values[size_t(n)] = n >= shift ? a.values[size_t(n - shift)] : a.values[0];
    DelayEstimate d = gcc_phat_delay(a, b, 0.5);
    CHECK(std::abs(d.delay_s - 0.12) <= 0.5 / 100.0);

    // Independent argmax over integer lags of the whitened cross-spectrum.
    const int oracle = testutil::brute_phat_delay_samples(a.values, b.values, 50);
    CHECK(oracle == shift);
    CHECK(std::abs(d.delay_s * 100.0 - double(oracle)) <= 0.5);
}

TEST_CASE("gcc_phat_delay: robust to a 0.5-amplitude echo") {
    Rng rng(23);
    Envelope a = bumpy_envelope(rng, 100.0, 10.0, 5);
    const int shift = 12, echo = 40;
    Envelope b = a;
    for (int64_t n = a.frames() - 1; n >= 0; --n) {
        double v = n >= shift ? a.values[size_t(n - shift)] : a.values[0];
        if (n >= shift + echo) v += 0.5 * a.values[size_t(n - shift - echo)];
        b.values[size_t(n)] = v;
    }
    DelayEstimate d = gcc_phat_delay(a, b, 0.6);
    CHECK(std::abs(d.delay_s - 0.12) <= 1.0 / 100.0);
    const int oracle = testutil::brute_phat_delay_samples(a.values, b.values, 60);
    CHECK(std::abs(double(oracle) - 12.0) <= 1.0);
}

TEST_CASE("gcc_phat_delay: antisymmetric in its arguments") {
    Rng rng(24);
    for (int trial = 0; trial < 4; ++trial) {
        Envelope a = bumpy_envelope(rng, 100.0, 8.0, 4);
        Envelope b = bumpy_envelope(rng, 100.0, 8.0, 4);
        DelayEstimate ab = gcc_phat_delay(a, b, 0.4);
        DelayEstimate ba = gcc_phat_delay(b, a, 0.4);
        CHECK(ab.delay_s == doctest::Approx(-ba.delay_s).epsilon(1e-6).scale(0.01));
    }
}

TEST_CASE("gcc_phat_delay: all-zero input raises NoSignal") {
    Envelope z = make_env(100.0, std::vector<double>(256, 0.0));
    Rng rng(25);
    Envelope a = bumpy_envelope(rng, 100.0, 4.0, 3);
    CHECK_THROWS_AS(gcc_phat_delay(a, z, 0.2), NoSignal);
    CHECK_THROWS_AS(gcc_phat_delay(z, a, 0.2), NoSignal);
}

TEST_CASE("fit_clock_drift: constant lags, exact line, degenerate inputs") {
    std::vector<LocalLag> flat{{0.0, 0.05}, {10.0, 0.05}, {20.0, 0.05}};
    DriftModel m = fit_clock_drift(flat);
    CHECK(m.alpha == doctest::Approx(0.0).scale(1.0));
    CHECK(m.beta == doctest::Approx(0.05));

    std::vector<LocalLag> line;
    for (int i = 0; i < 8; ++i) {
        double t = 5.0 * i;
        line.push_back({t, 1e-4 * t + 0.02});
    }
    DriftModel m2 = fit_clock_drift(line);
    CHECK(std::abs(m2.alpha - 1e-4) <= 1e-9);
    CHECK(std::abs(m2.beta - 0.02) <= 1e-9);

    CHECK_THROWS_AS(fit_clock_drift({{1.0, 0.1}}), InsufficientData);
    CHECK_THROWS_AS(fit_clock_drift({{1.0, 0.1}, {1.0, 0.2}}), DegenerateInput);
}

TEST_CASE("affine_warp: identity model reproduces the input exactly") {
    Rng rng(31);
    SampleSeries in = rand_series(rng, 100.0, 2, 300);
    SampleSeries out = affine_warp(in, DriftModel{0.0, 0.0});
    CHECK(testutil::max_abs_diff(out.data, in.data) == 0.0);
}

TEST_CASE("affine_warp: integer beta shifts a ramp with endpoint clamping") {
    const int n = 64, k = 5;
    SampleSeries in(100.0, 0.0, 1);
    for (int i = 0; i < n; ++i) in.data.push_back(double(i));
    SampleSeries out = affine_warp(in, DriftModel{0.0, double(k) / 100.0});
    REQUIRE(out.frames() == n);
    for (int i = 0; i < n; ++i) {
        const int src = std::min(i + k, n - 1);  // query at t + k/rate, clamped
        CHECK(out.at(i, 0) == doctest::Approx(double(src)).epsilon(1e-12));
    }
}

TEST_CASE("affine_warp: tiny alpha on a sine matches the interpolation oracle") {
    const int n = 400;
    const double rate = 100.0;
    SampleSeries in(rate, 0.0, 1);
    for (int i = 0; i < n; ++i) in.data.push_back(std::sin(2.0 * M_PI * 1.7 * i / rate));
    DriftModel m{3e-4, 0.013};
    SampleSeries out = affine_warp(in, m);
    for (int i = 0; i < n; ++i) {
        const double tq = (double(i) + m.alpha * double(i)) / rate + m.beta;
        double pos = std::clamp(tq * rate, 0.0, double(n - 1));
        const int lo = int(pos);
        const int hi = std::min(lo + 1, n - 1);
        const double f = pos - lo;
        const double want = in.at(lo, 0) * (1.0 - f) + in.at(hi, 0) * f;
        CHECK(std::abs(out.at(i, 0) - want) <= 1e-9);
    }
}

TEST_CASE("hampel_filter: constant series is untouched") {
    SampleSeries in(100.0, 0.0, 1, std::vector<double>(50, 2.5));
    SampleSeries out = hampel_filter(in);
    CHECK(testutil::max_abs_diff(out.data, in.data) == 0.0);
}

TEST_CASE("hampel_filter: a lone spike is replaced, everything else kept") {
    Rng rng(41);
    const int n = 200;
    SampleSeries in(100.0, 0.0, 1);
    for (int i = 0; i < n; ++i) in.data.push_back(rng.normal());
    const int spike = 77;
    in.data[spike] = 100.0;
    SampleSeries out = hampel_filter(in, 3, 3.0);

    // Sample-by-sample oracle: direct median/MAD over each truncated window.
    for (int i = 0; i < n; ++i) {
        std::vector<double> win;
        for (int j = std::max(0, i - 3); j <= std::min(n - 1, i + 3); ++j)
            win.push_back(in.data[size_t(j)]);
        const double med = median(win);
        std::vector<double> dev;
        for (double v : win) dev.push_back(std::abs(v - med));
        const double mad = median(dev);
        const bool replace = std::abs(in.data[size_t(i)] - med) > 3.0 * 1.4826 * mad;
        const double want = replace ? med : in.data[size_t(i)];
        CHECK(out.data[size_t(i)] == doctest::Approx(want).epsilon(1e-12));
    }
    CHECK(out.data[spike] != 100.0);
}

TEST_CASE("hampel_filter: zero MAD replaces any differing sample") {
    SampleSeries in(100.0, 0.0, 1, {1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0});
    SampleSeries out = hampel_filter(in, 3, 3.0);
    CHECK(out.data[4] == doctest::Approx(1.0));
}

TEST_CASE("hampel_filter: channelwise independent (permutation commutes)") {
    Rng rng(42);
    SampleSeries in = rand_series(rng, 100.0, 3, 120);
    in.data[30] = 50.0;
    in.data[91 * 3 + 2] = -40.0;
    SampleSeries perm = in;
    for (int64_t i = 0; i < in.frames(); ++i) {
        perm.at(i, 0) = in.at(i, 2);
        perm.at(i, 1) = in.at(i, 0);
        perm.at(i, 2) = in.at(i, 1);
    }
    SampleSeries f_then_p = hampel_filter(in);
    SampleSeries p_then_f = hampel_filter(perm);
    for (int64_t i = 0; i < in.frames(); ++i) {
        CHECK(p_then_f.at(i, 0) == doctest::Approx(f_then_p.at(i, 2)).epsilon(1e-12));
        CHECK(p_then_f.at(i, 1) == doctest::Approx(f_then_p.at(i, 0)).epsilon(1e-12));
        CHECK(p_then_f.at(i, 2) == doctest::Approx(f_then_p.at(i, 1)).epsilon(1e-12));
    }
}

TEST_CASE("wavelet_shrink: zero threshold reconstructs the input") {
    Rng rng(51);
    SampleSeries in = rand_series(rng, 100.0, 2, 300);
    SampleSeries out = wavelet_shrink(in, 4, 0.0);
    CHECK(testutil::max_abs_diff(out.data, in.data) <= 1e-8);
}

TEST_CASE("wavelet_shrink: zero input gives zero output") {
    SampleSeries in(100.0, 0.0, 1, std::vector<double>(128, 0.0));
    SampleSeries out = wavelet_shrink(in);
    for (double v : out.data) CHECK(v == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("wavelet_shrink: denoising strictly improves RMSE on sine + noise") {
    Rng rng(52);
    const int n = 512;
    SampleSeries clean(100.0, 0.0, 1), noisy(100.0, 0.0, 1);
    for (int i = 0; i < n; ++i) {
        const double s = std::sin(2.0 * M_PI * 2.0 * i / 100.0);
        clean.data.push_back(s);
        noisy.data.push_back(s + 0.15 * rng.normal());
    }
    SampleSeries den = wavelet_shrink(noisy);
    double rmse_in = 0.0, rmse_out = 0.0;
    for (int i = 0; i < n; ++i) {
        rmse_in += std::pow(noisy.data[size_t(i)] - clean.data[size_t(i)], 2);
        rmse_out += std::pow(den.data[size_t(i)] - clean.data[size_t(i)], 2);
    }
    CHECK(rmse_out < rmse_in);
}

TEST_CASE("wavelet_shrink: short input is rejected") {
    SampleSeries in(100.0, 0.0, 1, std::vector<double>(15, 1.0));
    CHECK_THROWS_AS(wavelet_shrink(in), DegenerateInput);
}

TEST_CASE("consistency_weight: identical envelopes score 1 in the interior") {
    Rng rng(61);
    Envelope e = bumpy_envelope(rng, 100.0, 6.0, 4);
    Envelope g = consistency_weight(e, e);
    for (int64_t i = 60; i < g.frames() - 60; ++i)
        CHECK(g.values[size_t(i)] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("consistency_weight: negated envelope clamps to 0") {
    Rng rng(62);
    Envelope e = bumpy_envelope(rng, 100.0, 6.0, 4);
    Envelope neg = e;
    const double mx = *std::max_element(e.values.begin(), e.values.end());
    for (auto& v : neg.values) v = mx - v;  // -e + const, still nonnegative
    Envelope g = consistency_weight(e, neg);
    for (double v : g.values) CHECK(v == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("consistency_weight: matches a direct Pearson oracle on noise") {
    Rng rng(63);
    const int64_t n = 500;
    const double rate = 100.0;
    Envelope a = make_env(rate, {}), b = make_env(rate, {});
    for (int64_t i = 0; i < n; ++i) {
        a.values.push_back(std::abs(rng.normal()));
        b.values.push_back(std::abs(rng.normal()));
    }
    Envelope g = consistency_weight(a, b);
    REQUIRE(g.frames() == n);
    double mean = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        // 1 s window centered at i, clamped at the edges (>= 0.5 s kept).
        const int64_t half = int64_t(rate / 2.0);
        const int64_t lo = std::max<int64_t>(0, i - half);
        const int64_t hi = std::min<int64_t>(n - 1, i + half);
        std::vector<double> wa(a.values.begin() + lo, a.values.begin() + hi + 1);
        std::vector<double> wb(b.values.begin() + lo, b.values.begin() + hi + 1);
        const double want = std::max(0.0, testutil::pearson(wa, wb));
        CHECK(std::abs(g.values[size_t(i)] - want) <= 1e-9);
        CHECK(g.values[size_t(i)] >= 0.0);
        CHECK(g.values[size_t(i)] <= 1.0);
        mean += g.values[size_t(i)];
    }
    CHECK(mean / double(n) < 0.25);  // independent noise: near-zero agreement
}

TEST_CASE("robust_normalize: median channel, endpoints, zero-iqr guard") {
    // Channel pinned at its median maps to all zeros.
    SampleSeries con(100.0, 0.0, 1, std::vector<double>(40, 7.0));
    ChannelStats st;
    st.median = {7.0};
    st.iqr = {2.0};
    SampleSeries z = robust_normalize(con, st);
    for (double v : z.data) CHECK(v == 0.0);

    // 0..100 with median 50, iqr 50: endpoints map to -1 and +1.
    SampleSeries ramp(100.0, 0.0, 1);
    for (int i = 0; i <= 100; ++i) ramp.data.push_back(double(i));
    ChannelStats st2;
    st2.median = {50.0};
    st2.iqr = {50.0};
    SampleSeries nr = robust_normalize(ramp, st2);
    CHECK(nr.data.front() == doctest::Approx(-1.0));
    CHECK(nr.data.back() == doctest::Approx(1.0));

    // Zero IQR divides by the epsilon floor and stays finite.
    ChannelStats st3;
    st3.median = {7.0};
    st3.iqr = {0.0};
    SampleSeries fz = robust_normalize(ramp, st3);
    for (double v : fz.data) CHECK(std::isfinite(v));
    CHECK(fz.data.back() == doctest::Approx((100.0 - 7.0) / 1e-6));
}

TEST_CASE("local_lags + drift fit recover an injected warp end to end") {
    Rng rng(71);
    Envelope a = bumpy_envelope(rng, 100.0, 90.0, 40);
    // b lags a by tau(t) = alpha*t + beta.
    const double alpha = 3e-4, beta = 0.21;
    Envelope b = a;
    for (int64_t n = 0; n < a.frames(); ++n) {
        const double t = double(n) / a.rate_hz;
        b.values[size_t(n)] = env_at(a, t - (alpha * t + beta));
    }
    auto lags = local_lags(a, b, 0.6);
    REQUIRE(lags.size() >= 2);
    DriftModel m = fit_clock_drift(lags);
    CHECK(std::abs(m.alpha - alpha) <= 1e-4);
    CHECK(std::abs(m.beta - beta) <= 0.03);

    SampleSeries bs(100.0, 0.0, 1, b.values);
    SampleSeries warped = affine_warp(bs, m);
    Envelope bw = make_env(100.0, warped.data);
    DelayEstimate resid = gcc_phat_delay(a, bw, 0.6);
    CHECK(std::abs(resid.delay_s) <= 0.01);  // <= 1 sample at 100 Hz
}

}  // TEST_SUITE
