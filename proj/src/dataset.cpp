#include "falldet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace falldet::ds {

namespace {

constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------- alignment

// Condition an envelope for coarse cross-modal lag search. Rare huge
// transients (a fall dwarfs a footstep by ~300x in energy) would otherwise
// dominate the correlation with their own internal timing, so amplitudes are
// capped at an upper quantile; decimation to the radar's native rate throws
// away the vibration-only part of the band, which PHAT would otherwise weight
// equally with the shared part.
Envelope condition_for_alignment(const Envelope& e, double out_hz, double clip_q) {
    Envelope c = e;
    std::vector<double> sorted = c.values;
    double cap = quantile(std::move(sorted), clip_q);
    if (cap > 0.0)
        for (double& x : c.values) x = std::min(x, cap);
    int64_t dec = std::max<int64_t>(1, int64_t(std::llround(e.rate_hz / out_hz)));
    if (dec == 1) return c;
    Envelope out;
    out.rate_hz = e.rate_hz / double(dec);
    out.t0_s = e.t0_s;
    out.values.reserve(size_t(c.frames() / dec));
    for (int64_t s = 0; s + dec <= c.frames(); s += dec) {
        double acc = 0.0;  // boxcar over the decimation span doubles as anti-alias
        for (int64_t i = 0; i < dec; ++i) acc += c.values[size_t(s + i)];
        out.values.push_back(acc / double(dec));
    }
    return out;
}

DriftModel recover_drift(const Envelope& e_v, const Envelope& e_r, const PipelineConfig& cfg) {
    Envelope av = condition_for_alignment(e_v, cfg.align_hz, cfg.align_clip_q);
    Envelope ar = condition_for_alignment(e_r, cfg.align_hz, cfg.align_clip_q);

    // Whole-stream estimate first: gait is quasi-periodic, so a 10 s segment
    // can lock onto a lag one step period off, but over a full session the
    // cadence wanders enough that only the true lag stays coherent.
    bool anchored = false;
    double b0 = 0.0;
    try {
        b0 = gcc_phat_delay(av, ar, cfg.max_lag_s).delay_s;
        anchored = true;
    } catch (const Error&) {
    }

    std::vector<LocalLag> lags;
    try {
        lags = local_lags(av, ar, cfg.max_lag_s, cfg.seg_s, cfg.min_coherence);
    } catch (const Error&) {
    }
    if (!anchored && !lags.empty()) {
        std::vector<double> ls;
        for (const auto& l : lags) ls.push_back(l.lag_s);
        b0 = median(std::move(ls));
        anchored = true;
    }
    if (!anchored) return {};  // nothing to correlate: pass the radar through unwarped

    // Segments that agree with the anchor to within half a step period carry
    // the drift information; the rest are alias captures.
    std::vector<LocalLag> in;
    for (const auto& l : lags)
        if (std::abs(l.lag_s - b0) <= 0.12) in.push_back(l);
    if (in.size() < 3) return {0.0, b0};
    try {
        DriftModel m = fit_clock_drift(in);
        // Keep the slope only if it is statistically distinguishable from
        // zero; coarse per-segment lags are noisy enough that an
        // insignificant slope extrapolates into worse misalignment at the
        // session edges than assuming a constant offset does.
        double tm = 0.0;
        for (const auto& l : in) tm += l.t_s;
        tm /= double(in.size());
        double sxx = 0.0, rss = 0.0;
        for (const auto& l : in) {
            double dt = l.t_s - tm;
            sxx += dt * dt;
            double r = l.lag_s - (m.beta + m.alpha * l.t_s);
            rss += r * r;
        }
        double se2 = rss / double(in.size() - 2) / std::max(sxx, 1e-12);
        if (m.alpha * m.alpha < 4.0 * se2) {
            std::vector<double> il;
            for (const auto& l : in) il.push_back(l.lag_s);
            return {0.0, median(std::move(il))};
        }
        return m;
    } catch (const Error&) {
        return {0.0, b0};
    }
}

// ------------------------------------------------------------ window pieces

struct FallInterval {
    int64_t s = 0, e = 0;  // half-open sample range
    int64_t peak = 0;      // argmax of e_v inside
};

std::vector<FallInterval> fall_intervals(const std::vector<synth::LabelSpan>& labels,
                                         const Envelope& e_v, double t0_s, double rate,
                                         int64_t n) {
    std::vector<FallInterval> out;
    for (const auto& l : labels) {
        if (l.cls != "fall") continue;
        FallInterval iv;
        iv.s = std::clamp<int64_t>(int64_t(std::llround((l.start_s - t0_s) * rate)), 0, n - 1);
        iv.e = std::clamp<int64_t>(int64_t(std::llround((l.end_s - t0_s) * rate)), iv.s + 1, n);
        iv.peak = iv.s;
        for (int64_t i = iv.s; i < iv.e; ++i)
            if (e_v.values[size_t(i)] > e_v.values[size_t(iv.peak)]) iv.peak = i;
        out.push_back(iv);
    }
    return out;
}

// -------------------------------------------------------------- augment bits

double channel_iqr(const std::vector<float>& data, int channels, int c) {
    std::vector<double> vals;
    vals.reserve(data.size() / size_t(channels));
    for (size_t i = size_t(c); i < data.size(); i += size_t(channels)) vals.push_back(data[i]);
    return quantile(vals, 0.75) - quantile(vals, 0.25);
}

void jitter_stream(std::vector<float>& data, int channels, double frac, Rng& rng) {
    for (int c = 0; c < channels; ++c) {
        double sigma = frac * channel_iqr(data, channels, c);
        if (sigma <= 0.0) sigma = 0.0;  // flat channel: draws keep the stream intact
        for (size_t i = size_t(c); i < data.size(); i += size_t(channels)) {
            double n = rng.normal(0.0, 1.0);
            data[i] = float(double(data[i]) + sigma * n);
        }
    }
}

void stretch_stream(std::vector<float>& data, int channels, double factor) {
    const int n = int(data.size()) / channels;
    std::vector<float> src = data;
    const double off = double(n - 1) * (1.0 - 1.0 / factor) / 2.0;  // keep the center fixed
    for (int i = 0; i < n; ++i) {
        double x = std::clamp(double(i) / factor + off, 0.0, double(n - 1));
        int i0 = int(x);
        int i1 = std::min(i0 + 1, n - 1);
        double f = x - double(i0);
        for (int c = 0; c < channels; ++c) {
            double v = (1.0 - f) * double(src[size_t(i0) * channels + c]) +
                       f * double(src[size_t(i1) * channels + c]);
            data[size_t(i) * channels + c] = float(v);
        }
    }
}

// Strongest bin of the summed-over-channels power spectrum, as a frequency.
double dominant_freq(const std::vector<float>& data, int channels, double rate) {
    const int n = int(data.size()) / channels;
    int best = 1;
    double best_p = -1.0;
    for (int k = 1; k < n / 2; ++k) {
        double p = 0.0;
        for (int c = 0; c < channels; ++c) {
            double re = 0.0, im = 0.0;
            for (int i = 0; i < n; ++i) {
                double ang = -2.0 * kPi * double(k) * double(i) / double(n);
                double v = data[size_t(i) * channels + c];
                re += v * std::cos(ang);
                im += v * std::sin(ang);
            }
            p += re * re + im * im;
        }
        if (p > best_p) {
            best_p = p;
            best = k;
        }
    }
    return double(best) * rate / double(n);
}

void notch_stream(std::vector<float>& data, int channels, double freq_hz, double q, double rate) {
    double w0 = 2.0 * kPi * std::clamp(freq_hz, 0.5, rate * 0.49) / rate;
    double alpha = std::sin(w0) / (2.0 * q);
    double b0 = 1.0, b1 = -2.0 * std::cos(w0), b2 = 1.0;
    double a0 = 1.0 + alpha, a1 = b1, a2 = 1.0 - alpha;
    b0 /= a0;
    b1 /= a0;
    b2 /= a0;
    a1 /= a0;
    a2 /= a0;
    const int n = int(data.size()) / channels;
    for (int c = 0; c < channels; ++c) {
        double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
        for (int i = 0; i < n; ++i) {
            double x = data[size_t(i) * channels + c];
            double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = x;
            y2 = y1;
            y1 = y;
            data[size_t(i) * channels + c] = float(y);
        }
    }
}

// ------------------------------------------------------------------ file io

void put_u16(std::string& out, uint16_t v) {
    char b[2] = {char(v & 0xff), char(v >> 8)};
    out.append(b, 2);
}
void put_u32(std::string& out, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xff);
    out.append(b, 4);
}
void put_u64(std::string& out, uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xff);
    out.append(b, 8);
}
void put_f32(std::string& out, float v) {
    static_assert(sizeof(float) == 4);
    out.append(reinterpret_cast<const char*>(&v), 4);
}

struct Reader {
    const unsigned char* p;
    size_t n, at = 0;
    void need(size_t k) const {
        if (at + k > n) throw IoError("window file truncated");
    }
    uint16_t u16() {
        need(2);
        uint16_t v = uint16_t(p[at]) | uint16_t(p[at + 1]) << 8;
        at += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(p[at + size_t(i)]) << (8 * i);
        at += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(p[at + size_t(i)]) << (8 * i);
        at += 8;
        return v;
    }
    uint8_t u8() {
        need(1);
        return p[at++];
    }
    float f32() {
        need(4);
        float v;
        std::memcpy(&v, p + at, 4);
        at += 4;
        return v;
    }
};

}  // namespace

AlignedStreams preprocess(const SampleSeries& vib_raw, const RadarFrameSet& radar,
                          const PipelineConfig& cfg) {
    vib_raw.validate();

    SampleSeries v = hampel_filter(vib_raw, cfg.hampel_half, cfg.hampel_k);
    v = wavelet_shrink(v, cfg.wavelet_levels, cfg.wavelet_mult);
    AlignedStreams out;
    out.vib = resample_linear(v, cfg.target_hz);
    out.e_v = energy_envelope(out.vib);

    std::vector<KinematicVector> ks = kinematic_stream(radar, cfg.bg_history, cfg.k_sigma,
                                                       cfg.eps_r, cfg.eps_v, cfg.min_pts);
    SampleSeries phi = interp_kinematics(ks, cfg.target_hz, out.vib.t0_s, out.vib.frames());
    Envelope e_r0 = radar_envelope(phi);

    out.drift = recover_drift(out.e_v, e_r0, cfg);
    out.radar = affine_warp(phi, out.drift);
    out.e_r = radar_envelope(out.radar);

    // One residual pass: the drift fit works on 10 s segments, whose own
    // quantization can leave a fraction of a sample on the table.
    try {
        DelayEstimate resid = gcc_phat_delay(out.e_v, out.e_r, 0.15);
        if (std::abs(resid.delay_s) > 0.5 / cfg.target_hz &&
            resid.peak_coherence > cfg.min_coherence) {
            out.radar = affine_warp(out.radar, DriftModel{0.0, resid.delay_s});
            out.e_r = radar_envelope(out.radar);
            out.drift.beta += resid.delay_s;
        }
    } catch (const Error&) {
    }

    out.gamma = consistency_weight(out.e_v, out.e_r);
    return out;
}

std::vector<WindowRecord> slice_windows(const SampleSeries& vib, const SampleSeries& radar_phi,
                                        const std::vector<synth::LabelSpan>& labels,
                                        const Envelope& gamma, uint8_t scenario,
                                        uint16_t subject) {
    vib.validate();
    radar_phi.validate();
    if (vib.channels != kVibChannels || radar_phi.channels != kRadarChannels)
        throw ShapeMismatch("slice_windows: unexpected channel counts");
    if (vib.rate_hz != radar_phi.rate_hz)
        throw ShapeMismatch("slice_windows: streams on different clocks");
    if (vib.frames() != radar_phi.frames() || int64_t(gamma.values.size()) != vib.frames())
        throw ShapeMismatch("slice_windows: stream lengths differ");
    const int64_t n = vib.frames();
    if (n < kWindowLen) throw DegenerateInput("slice_windows: shorter than one window");

    Envelope e_v = energy_envelope(vib);
    const auto ivs = fall_intervals(labels, e_v, vib.t0_s, vib.rate_hz, n);

    struct Slot {
        int64_t start;
        bool fall;
    };
    std::vector<Slot> slots;
    const int64_t count = (n - kWindowLen) / kWindowStride + 1;
    for (int64_t k = 0; k < count; ++k) {
        int64_t start = k * kWindowStride;
        const FallInterval* hit = nullptr;
        for (const auto& iv : ivs) {
            int64_t ov = std::min(start + kWindowLen, iv.e) - std::max(start, iv.s);
            bool has_peak = iv.peak >= start && iv.peak < start + kWindowLen;
            if (has_peak || 2 * ov >= iv.e - iv.s) {
                hit = &iv;
                break;
            }
        }
        if (!hit) {
            slots.push_back({start, false});
            continue;
        }
        // Re-center on the interval's peak. The +-16 slack is spread
        // deterministically so that adjacent grid windows hitting the same
        // fall stay distinct instead of collapsing onto one start.
        int64_t jitter = (k * 37) % 33 - 16;
        int64_t s2 = std::clamp<int64_t>(hit->peak - kWindowLen / 2 + jitter, 0, n - kWindowLen);
        slots.push_back({s2, true});
    }
    std::vector<Slot> uniq;
    for (const auto& s : slots) {
        bool dup = false;
        for (const auto& u : uniq) dup = dup || (u.start == s.start && u.fall == s.fall);
        if (!dup) uniq.push_back(s);
    }

    std::vector<WindowRecord> out;
    out.reserve(uniq.size());
    for (const auto& s : uniq) {
        WindowRecord w;
        w.label = s.fall ? 1 : 0;
        w.scenario = scenario;
        w.subject = subject;
        double g = 0.0;
        for (int64_t i = 0; i < kWindowLen; ++i) g += gamma.values[size_t(s.start + i)];
        w.weight = float(std::clamp(g / double(kWindowLen), 0.0, 1.0));
        w.t0_us = uint64_t(std::llround((vib.time_of(s.start)) * 1e6));
        w.vib.resize(size_t(kWindowLen) * kVibChannels);
        w.radar.resize(size_t(kWindowLen) * kRadarChannels);
        for (int64_t i = 0; i < kWindowLen; ++i) {
            for (int c = 0; c < kVibChannels; ++c)
                w.vib[size_t(i) * kVibChannels + size_t(c)] = float(vib.at(s.start + i, c));
            for (int c = 0; c < kRadarChannels; ++c)
                w.radar[size_t(i) * kRadarChannels + size_t(c)] =
                    float(radar_phi.at(s.start + i, c));
        }
        out.push_back(std::move(w));
    }
    return out;
}

WindowRecord augment(const WindowRecord& w, uint64_t rng_seed, const AugmentConfig& cfg) {
    Rng rng(rng_seed);
    bool do_jitter = rng.uniform() < cfg.p_jitter;
    bool do_stretch = rng.uniform() < cfg.p_stretch;
    bool do_notch = rng.uniform() < cfg.p_notch;

    WindowRecord out = w;
    if (!do_jitter && !do_stretch && !do_notch) return out;

    if (do_jitter) {
        jitter_stream(out.vib, kVibChannels, cfg.jitter_frac, rng);
        jitter_stream(out.radar, kRadarChannels, cfg.jitter_frac, rng);
    }
    if (do_stretch) {
        double f = cfg.stretch_lo + (cfg.stretch_hi - cfg.stretch_lo) * rng.uniform();
        stretch_stream(out.vib, kVibChannels, f);
        stretch_stream(out.radar, kRadarChannels, f);
    }
    if (do_notch) {
        double f0 = dominant_freq(out.vib, kVibChannels, 100.0);
        double fn = f0 * (1.0 + cfg.notch_detune * (2.0 * rng.uniform() - 1.0));
        notch_stream(out.vib, kVibChannels, fn, cfg.notch_q, 100.0);
    }
    return out;
}

std::vector<WindowRecord> perturb_windows(const std::vector<WindowRecord>& set, Perturbation kind,
                                          double magnitude, uint64_t rng_seed) {
    if (kind == Perturbation::time_shift_ms) {
        if (magnitude < 0) throw DegenerateInput("perturb: negative shift magnitude");
    } else if (!(magnitude >= 0.0 && magnitude <= 1.0)) {
        throw DegenerateInput("perturb: dropout fraction outside [0, 1]");
    }

    Rng rng(rng_seed);
    std::vector<WindowRecord> out = set;
    for (auto& w : out) {
        switch (kind) {
            case Perturbation::time_shift_ms: {
                double off_ms = rng.uniform(-magnitude, magnitude);
                // 100 Hz: one sample per 10 ms
                int64_t k = int64_t(std::llround(off_ms / 10.0));
                std::vector<float> src = w.radar;
                for (int64_t i = 0; i < kWindowLen; ++i) {
                    int64_t j = std::clamp<int64_t>(i - k, 0, kWindowLen - 1);
                    for (int c = 0; c < kRadarChannels; ++c)
                        w.radar[size_t(i) * kRadarChannels + size_t(c)] =
                            src[size_t(j) * kRadarChannels + size_t(c)];
                }
                break;
            }
            case Perturbation::radar_dropout_frac: {
                for (int64_t i = 0; i < kWindowLen; ++i) {
                    if (rng.uniform() < magnitude)
                        for (int c = 0; c < kRadarChannels; ++c)
                            w.radar[size_t(i) * kRadarChannels + size_t(c)] = 0.0f;
                }
                break;
            }
            case Perturbation::vib_dropout_frac: {
                if (rng.uniform() < magnitude)
                    std::fill(w.vib.begin(), w.vib.end(), 0.0f);
                break;
            }
        }
    }
    return out;
}

int SplitManifest::split_of(uint16_t subject) const {
    for (auto s : train)
        if (s == subject) return 0;
    for (auto s : val)
        if (s == subject) return 1;
    for (auto s : test)
        if (s == subject) return 2;
    return -1;
}

SplitManifest split_subjects(const std::vector<WindowRecord>& records, double train_ratio,
                             double val_ratio, double test_ratio, uint64_t rng_seed) {
    if (train_ratio < 0 || val_ratio < 0 || test_ratio < 0 ||
        train_ratio + val_ratio + test_ratio <= 0)
        throw DegenerateInput("split_subjects: bad ratios");
    std::vector<uint16_t> subjects;
    for (const auto& w : records)
        if (std::find(subjects.begin(), subjects.end(), w.subject) == subjects.end())
            subjects.push_back(w.subject);
    if (subjects.size() < 3)
        throw InsufficientData("split_subjects: need at least 3 subjects");
    std::sort(subjects.begin(), subjects.end());
    Rng rng(rng_seed);
    rng.shuffle(subjects);

    const double total = train_ratio + val_ratio + test_ratio;
    const size_t s = subjects.size();
    size_t counts[3];
    double exact[3] = {train_ratio / total * double(s), val_ratio / total * double(s),
                       test_ratio / total * double(s)};
    size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        counts[i] = size_t(exact[i]);
        assigned += counts[i];
    }
    // Distribute the remainder by largest fractional part (ties favor the
    // earlier split), then guarantee each requested split at least 1 subject.
    while (assigned < s) {
        int best = -1;
        double best_frac = -1.0;
        for (int i = 0; i < 3; ++i) {
            double frac = exact[i] - double(counts[i]);
            if (frac > best_frac + 1e-12) {
                best_frac = frac;
                best = i;
            }
        }
        ++counts[best >= 0 ? best : 0];
        exact[best >= 0 ? best : 0] = double(counts[best >= 0 ? best : 0]);
        ++assigned;
    }
    double ratios[3] = {train_ratio, val_ratio, test_ratio};
    for (int i = 0; i < 3; ++i) {
        if (ratios[i] > 0 && counts[i] == 0) {
            int donor = 0;
            for (int j = 1; j < 3; ++j)
                if (counts[j] > counts[donor]) donor = j;
            --counts[donor];
            ++counts[i];
        }
    }

    SplitManifest m;
    size_t at = 0;
    for (size_t i = 0; i < counts[0]; ++i) m.train.push_back(subjects[at++]);
    for (size_t i = 0; i < counts[1]; ++i) m.val.push_back(subjects[at++]);
    for (size_t i = 0; i < counts[2]; ++i) m.test.push_back(subjects[at++]);
    std::sort(m.train.begin(), m.train.end());
    std::sort(m.val.begin(), m.val.end());
    std::sort(m.test.begin(), m.test.end());
    return m;
}

std::vector<WindowRecord> filter_split(const std::vector<WindowRecord>& records,
                                       const std::vector<uint16_t>& subjects) {
    std::vector<WindowRecord> out;
    for (const auto& w : records)
        if (std::find(subjects.begin(), subjects.end(), w.subject) != subjects.end())
            out.push_back(w);
    return out;
}

NormStats compute_stats(const std::vector<WindowRecord>& train) {
    if (train.empty()) throw InsufficientData("compute_stats: no windows");
    NormStats st;
    auto per_channel = [&](int channels, bool vib_stream, ChannelStats& cs) {
        cs.median.resize(size_t(channels));
        cs.iqr.resize(size_t(channels));
        std::vector<double> vals;
        vals.reserve(train.size() * size_t(kWindowLen));
        for (int c = 0; c < channels; ++c) {
            vals.clear();
            for (const auto& w : train) {
                const auto& d = vib_stream ? w.vib : w.radar;
                for (size_t i = size_t(c); i < d.size(); i += size_t(channels))
                    vals.push_back(d[i]);
            }
            cs.median[size_t(c)] = quantile(vals, 0.5);
            cs.iqr[size_t(c)] = quantile(vals, 0.75) - quantile(vals, 0.25);
        }
    };
    per_channel(kVibChannels, true, st.vib);
    per_channel(kRadarChannels, false, st.radar);
    return st;
}

void window_tensors(const WindowRecord& w, const NormStats& st, Tensor& vib, Tensor& radar) {
    auto fill = [](const std::vector<float>& src, int channels, const ChannelStats& cs) {
        std::vector<double> d(src.size());
        for (size_t i = 0; i < src.size(); ++i) {
            int c = int(i % size_t(channels));
            double scale = std::max(cs.iqr[size_t(c)], 1e-6);
            d[i] = (double(src[i]) - cs.median[size_t(c)]) / scale;
        }
        return d;
    };
    vib = Tensor::from_vector(kWindowLen, kVibChannels, fill(w.vib, kVibChannels, st.vib));
    radar = Tensor::from_vector(kWindowLen, kRadarChannels, fill(w.radar, kRadarChannels, st.radar));
}

namespace {

// Shared tail of the per-window scoring path: residual micro-shift, window
// consistency weight, normalization. Both the raw-chunk and the on-grid entry
// points funnel through here so online and offline scoring cannot drift apart.
ds::PreparedWindow finish_window(const SampleSeries& vib100, SampleSeries phi,
                                 const ds::NormStats& stats, const ds::PipelineConfig& cfg) {
    ds::PreparedWindow out;
    Envelope e_v = energy_envelope(vib100);
    Envelope e_r = radar_envelope(phi);

    // residual micro-shift, same gate as the offline pipeline
    try {
        DelayEstimate resid = gcc_phat_delay(e_v, e_r, 0.15);
        if (std::abs(resid.delay_s) > 0.5 / cfg.target_hz &&
            resid.peak_coherence > cfg.min_coherence) {
            phi = affine_warp(phi, DriftModel{0.0, resid.delay_s});
            e_r = radar_envelope(phi);
            out.shift_s = resid.delay_s;
        }
    } catch (const Error&) {
    }

    Envelope g = consistency_weight(e_v, e_r);
    double acc = 0.0;
    for (double x : g.values) acc += x;
    out.gamma = g.values.empty() ? 0.0 : std::clamp(acc / double(g.values.size()), 0.0, 1.0);

    ds::WindowRecord w;
    w.vib.resize(size_t(ds::kWindowLen) * ds::kVibChannels);
    w.radar.resize(size_t(ds::kWindowLen) * ds::kRadarChannels);
    for (size_t i = 0; i < w.vib.size(); ++i) w.vib[i] = float(vib100.data[i]);
    for (size_t i = 0; i < w.radar.size(); ++i) w.radar[i] = float(phi.data[i]);
    ds::window_tensors(w, stats, out.vib, out.radar);
    return out;
}

}  // namespace

PreparedWindow prepare_window(const SampleSeries& vib_chunk, const RadarFrameSet& radar_chunk,
                              const NormStats& stats, const PipelineConfig& cfg) {
    SampleSeries vib100;
    if (vib_chunk.frames() > 0) {
        vib_chunk.validate();
        if (vib_chunk.channels != kVibChannels)
            throw ShapeMismatch("prepare_window: vibration channel count");
        SampleSeries v = hampel_filter(vib_chunk, cfg.hampel_half, cfg.hampel_k);
        v = wavelet_shrink(v, cfg.wavelet_levels, cfg.wavelet_mult);
        vib100 = resample_linear(v, cfg.target_hz);
    } else {
        double t0 = radar_chunk.frames.empty() ? 0.0 : radar_chunk.frames.front().t_s;
        vib100 = SampleSeries(cfg.target_hz, t0, kVibChannels);
    }
    // device chunks are nominally 2.56 s but may round to 255/257 samples;
    // the model wants exactly kWindowLen rows
    vib100.data.resize(size_t(kWindowLen) * kVibChannels, 0.0);

    SampleSeries phi;
    if (!radar_chunk.frames.empty()) {
        std::vector<KinematicVector> ks = kinematic_stream(radar_chunk, cfg.bg_history,
                                                           cfg.k_sigma, cfg.eps_r, cfg.eps_v,
                                                           cfg.min_pts);
        phi = interp_kinematics(ks, cfg.target_hz, vib100.t0_s, kWindowLen);
    } else {
        phi = SampleSeries(cfg.target_hz, vib100.t0_s, kRadarChannels);
        phi.data.assign(size_t(kWindowLen) * kRadarChannels, 0.0);
    }
    return finish_window(vib100, std::move(phi), stats, cfg);
}

PreparedWindow prepare_window(const WindowRecord& w, const NormStats& stats,
                              const PipelineConfig& cfg) {
    if (w.vib.size() != size_t(kWindowLen) * kVibChannels ||
        w.radar.size() != size_t(kWindowLen) * kRadarChannels)
        throw ShapeMismatch("prepare_window: window shape");
    const double t0 = double(w.t0_us) * 1e-6;
    SampleSeries vib100(cfg.target_hz, t0, kVibChannels);
    vib100.data.assign(w.vib.begin(), w.vib.end());
    SampleSeries phi(cfg.target_hz, t0, kRadarChannels);
    phi.data.assign(w.radar.begin(), w.radar.end());
    return finish_window(vib100, std::move(phi), stats, cfg);
}

void stats_to_blobs(const NormStats& st, ckpt::BlobMap& blobs) {
    auto add = [&](const std::string& name, const std::vector<double>& v) {
        ckpt::Blob b;
        b.rows = 1;
        b.cols = int(v.size());
        b.data = v;
        blobs.emplace_back(name, std::move(b));
    };
    add("stats.vib.median", st.vib.median);
    add("stats.vib.iqr", st.vib.iqr);
    add("stats.radar.median", st.radar.median);
    add("stats.radar.iqr", st.radar.iqr);
}

NormStats stats_from_blobs(const ckpt::BlobMap& blobs) {
    auto get = [&](const std::string& name, size_t want) {
        const ckpt::Blob* b = ckpt::find(blobs, name);
        if (!b || b->data.size() != want) throw IoError("missing stats buffer " + name);
        return b->data;
    };
    NormStats st;
    st.vib.median = get("stats.vib.median", kVibChannels);
    st.vib.iqr = get("stats.vib.iqr", kVibChannels);
    st.radar.median = get("stats.radar.median", kRadarChannels);
    st.radar.iqr = get("stats.radar.iqr", kRadarChannels);
    return st;
}

void save_windows(const std::string& path, const std::vector<WindowRecord>& recs) {
    std::string out;
    out.reserve(16 + recs.size() * 8300);
    out.append("FWIN", 4);
    put_u16(out, 1);
    if (recs.size() > std::numeric_limits<uint32_t>::max())
        throw IoError("too many windows");
    put_u32(out, uint32_t(recs.size()));
    put_u16(out, uint16_t(kWindowLen));
    for (const auto& w : recs) {
        if (w.vib.size() != size_t(kWindowLen) * kVibChannels ||
            w.radar.size() != size_t(kWindowLen) * kRadarChannels)
            throw IoError("window with unexpected shape");
        out.push_back(char(w.label));
        out.push_back(char(w.scenario));
        put_f32(out, w.weight);
        put_u16(out, w.subject);
        put_u64(out, w.t0_us);
        for (float v : w.vib) put_f32(out, v);
        for (float v : w.radar) put_f32(out, v);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f.write(out.data(), std::streamsize(out.size()));
    f.flush();
    if (!f.good()) throw IoError("write failed: " + path);
}

std::vector<WindowRecord> load_windows(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()};
    r.need(4);
    if (std::memcmp(bytes.data(), "FWIN", 4) != 0) throw IoError("not a window file: " + path);
    r.at = 4;
    if (r.u16() != 1) throw IoError("unsupported window file version");
    uint32_t count = r.u32();
    if (r.u16() != kWindowLen) throw IoError("unexpected window length");
    std::vector<WindowRecord> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        WindowRecord w;
        w.label = r.u8();
        w.scenario = r.u8();
        w.weight = r.f32();
        w.subject = uint16_t(r.u16());
        w.t0_us = r.u64();
        w.vib.resize(size_t(kWindowLen) * kVibChannels);
        for (auto& v : w.vib) v = r.f32();
        w.radar.resize(size_t(kWindowLen) * kRadarChannels);
        for (auto& v : w.radar) v = r.f32();
        out.push_back(std::move(w));
    }
    if (r.at != r.n) throw IoError("trailing bytes in window file");
    return out;
}

}  // namespace falldet::ds
