#pragma once
// Vibration conditioning and cross-stream alignment operators.

#include <vector>

#include "falldet/series.hpp"

namespace falldet {

// Linear-interpolation resampler. The output covers the same time interval,
// sample k sits at t0 + k/target_hz, and samples that land exactly on input
// sample times (the first one always does) are copied bit-exactly.
SampleSeries resample_linear(const SampleSeries& in, double target_hz);

// Per-frame L2 norm across channels.
Envelope energy_envelope(const SampleSeries& in);

// GCC-PHAT time delay between two equally sampled envelopes. Positive delay
// means b lags a. The integer-lag peak is refined by parabolic interpolation
// of the three correlation samples around it. peak_coherence is the peak
// height normalized so a pure delay between identical signals scores 1.
// Throws NoSignal if either input is all zero.
DelayEstimate gcc_phat_delay(const Envelope& a, const Envelope& b, double max_lag_s);

// GCC-PHAT on sliding segments (seg_s long, 50% overlap); keeps segments
// whose peak coherence exceeds min_coherence. Segment times are centers
// relative to the stream start.
std::vector<LocalLag> local_lags(const Envelope& a, const Envelope& b, double max_lag_s,
                                 double seg_s = 10.0, double min_coherence = 0.2);

// Least squares line through (t_s, lag_s): lag = alpha * t + beta.
// Needs >= 2 distinct times; a fit with |alpha| >= 0.01 is rejected as
// degenerate (sane clocks drift by much less).
DriftModel fit_clock_drift(const std::vector<LocalLag>& lags);

// Output sample n is the input linearly interpolated at
// t_n + alpha * n / rate + beta (clamped to the input span). Identity model
// reproduces the input exactly.
SampleSeries affine_warp(const SampleSeries& in, const DriftModel& model);

// Sliding-window median outlier rejection, window [n-half, n+half] truncated
// at the edges. A sample is replaced by the window median when it deviates
// by more than k * 1.4826 * MAD; a zero MAD therefore replaces any sample
// that differs from the median at all.
SampleSeries hampel_filter(const SampleSeries& in, int half_window = 3, double k = 3.0);

// Daubechies-4 wavelet denoising: `levels` decomposition levels, soft
// thresholding of all detail bands at threshold_mult * sigma * sqrt(2 ln N)
// with sigma = MAD(finest detail)/0.6745, then reconstruction. The transform
// is factored into lifting steps with replicate boundary handling, so
// threshold_mult = 0 reconstructs the input to machine precision.
// Requires N >= 16.
SampleSeries wavelet_shrink(const SampleSeries& in, int levels = 4,
                            double threshold_mult = 1.0);

// Per-channel robust location/scale, computed on the training split only.
struct ChannelStats {
    std::vector<double> median;
    std::vector<double> iqr;
};

// (x - median) / max(iqr, 1e-6), per channel.
SampleSeries robust_normalize(const SampleSeries& in, const ChannelStats& stats);

// Pearson correlation between the two envelopes over a 1 s window centered
// at each sample (clamped at the edges, so every window keeps >= 0.5 s),
// clamped to [0, 1]. Zero variance on either side gives 0.
Envelope consistency_weight(const Envelope& e_v, const Envelope& e_r);

}  // namespace falldet
