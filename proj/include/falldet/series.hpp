#pragma once
// Time-series containers shared by the vibration and radar pipelines.

#include <cstdint>
#include <vector>

#include "falldet/common.hpp"

namespace falldet {

// Uniformly sampled multichannel series, row-major frame x channel.
struct SampleSeries {
    double rate_hz = 0.0;
    double t0_s = 0.0;
    int channels = 0;
    std::vector<double> data;

    SampleSeries() = default;
    SampleSeries(double rate, double t0, int ch, std::vector<double> d = {})
        : rate_hz(rate), t0_s(t0), channels(ch), data(std::move(d)) {}

    int64_t frames() const { return channels > 0 ? int64_t(data.size()) / channels : 0; }
    double duration_s() const { return frames() > 1 ? double(frames() - 1) / rate_hz : 0.0; }
    double at(int64_t n, int c) const { return data[size_t(n) * channels + c]; }
    double& at(int64_t n, int c) { return data[size_t(n) * channels + c]; }
    double time_of(int64_t n) const { return t0_s + double(n) / rate_hz; }

    // rate > 0, channels >= 1, data a whole number of frames, all finite.
    void validate() const;
};

// Nonnegative scalar envelope on the same clock as its source series.
struct Envelope {
    double rate_hz = 0.0;
    double t0_s = 0.0;
    std::vector<double> values;

    int64_t frames() const { return int64_t(values.size()); }
    void validate() const;
};

struct RadarPoint {
    double range_m = 0.0;
    double radial_vel_mps = 0.0;
    double intensity = 0.0;
};

struct RadarFrame {
    double t_s = 0.0;
    std::vector<RadarPoint> points;
};

// Frames sorted by strictly increasing timestamp.
struct RadarFrameSet {
    std::vector<RadarFrame> frames;
    void validate() const;
};

// Per-frame kinematic summary of the dominant cluster:
// [r_mean, vr_absmean, r_std, vr_std, energy]; zeros when no cluster.
struct KinematicVector {
    double t_s = 0.0;
    double r_mean = 0.0;
    double vr_absmean = 0.0;
    double r_std = 0.0;
    double vr_std = 0.0;
    double energy = 0.0;
};

inline constexpr int kKinematicChannels = 5;

// tau(n) = alpha * n / rate + beta, times relative to the stream start.
// alpha is dimensionless clock skew (seconds of lag per second of elapsed
// time); |alpha| >= 0.01 is treated as a degenerate fit upstream.
struct DriftModel {
    double alpha = 0.0;
    double beta = 0.0;
};

struct DelayEstimate {
    double delay_s = 0.0;       // positive: second input lags the first
    double peak_coherence = 0.0;  // normalized peak height in [0, 1]
};

struct LocalLag {
    double t_s = 0.0;    // segment center, relative to stream start
    double lag_s = 0.0;  // estimated delay at that time
};

}  // namespace falldet
