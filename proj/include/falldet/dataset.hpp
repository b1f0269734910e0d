#pragma once

// Window dataset assembly: run the preprocessing/alignment pipeline over a
// recording, slice 2.56 s windows on the common 100 Hz clock, augment and
// perturb them, manage subject-independent splits, and read/write the packed
// window file format.

#include <cstdint>
#include <string>
#include <vector>

#include "falldet/checkpoint.hpp"
#include "falldet/radar.hpp"
#include "falldet/signal.hpp"
#include "falldet/synth.hpp"
#include "falldet/tensor.hpp"

namespace falldet::ds {

inline constexpr int kWindowLen = 256;  // 2.56 s at 100 Hz
inline constexpr int kWindowStride = 128;
inline constexpr int kVibChannels = 3;
inline constexpr int kRadarChannels = kKinematicChannels;

struct WindowRecord {
    uint8_t label = 0;  // 1 = fall
    uint8_t scenario = 0;
    float weight = 0.0f;  // mean consistency weight over the window
    uint16_t subject = 0;
    uint64_t t0_us = 0;
    std::vector<float> vib;    // kWindowLen x 3, row-major
    std::vector<float> radar;  // kWindowLen x 5, row-major
};

struct PipelineConfig {
    double target_hz = 100.0;
    // vibration conditioning
    int hampel_half = 3;
    double hampel_k = 3.0;
    int wavelet_levels = 4;
    double wavelet_mult = 1.0;
    // radar conditioning
    int bg_history = 8;
    double k_sigma = 2.5;
    double eps_r = 0.3, eps_v = 0.25;
    int min_pts = 3;
    // alignment
    double max_lag_s = 0.6;  // covers +-0.5 s injected offsets
    double seg_s = 10.0;
    double min_coherence = 0.2;
    // coarse lag search runs on clipped envelopes at the radar's native rate
    // so the correlated band is the shared band; see condition_for_alignment
    double align_hz = 12.5;
    double align_clip_q = 0.95;
};

struct AlignedStreams {
    SampleSeries vib;    // denoised triaxial vibration on the target clock
    SampleSeries radar;  // kinematic stream warped onto the vibration clock
    Envelope e_v;
    Envelope e_r;        // post-alignment radar motion envelope
    Envelope gamma;      // cross-stream consistency weight
    DriftModel drift;    // recovered radar clock model (lag = alpha*t + beta)
};

// Denoise + resample the vibration, condition the radar into the kinematic
// stream, recover the radar clock (local GCC-PHAT lags -> drift fit -> warp,
// then one residual correction pass), and compute envelopes and gamma.
// Robust to silent streams: with nothing to correlate the radar is passed
// through unwarped.
AlignedStreams preprocess(const SampleSeries& vib_raw, const RadarFrameSet& radar,
                          const PipelineConfig& cfg = {});

// Windows start every kWindowStride samples. A window is labeled fall iff it
// overlaps a fall interval by >= 50% of that interval or contains the
// interval's e_v peak; fall windows are re-centered so the peak lies within
// +-16 samples of the window center. weight = mean gamma over the window.
std::vector<WindowRecord> slice_windows(const SampleSeries& vib, const SampleSeries& radar_phi,
                                        const std::vector<synth::LabelSpan>& labels,
                                        const Envelope& gamma, uint8_t scenario,
                                        uint16_t subject);

struct AugmentConfig {
    double p_jitter = 0.5;
    double p_stretch = 0.3;
    double p_notch = 0.3;
    double jitter_frac = 0.01;  // sigma as a fraction of the channel IQR
    double stretch_lo = 0.95, stretch_hi = 1.05;
    double notch_detune = 0.10;  // notch within +-10% of the strongest peak
    double notch_q = 8.0;
};

// Stochastic copy: Gaussian jitter, time stretch (both streams), narrow-band
// notch (vibration only). Label, scenario, weight, subject are untouched.
// Deterministic given the seed; all probabilities zero returns an exact copy.
WindowRecord augment(const WindowRecord& w, uint64_t rng_seed, const AugmentConfig& cfg = {});

enum class Perturbation { time_shift_ms, radar_dropout_frac, vib_dropout_frac };

// Evaluation-time stress: shift the radar stream against the vibration
// stream (edge-clamped), zero 10 ms radar slices independently, or zero
// whole vibration windows. Labels unchanged.
std::vector<WindowRecord> perturb_windows(const std::vector<WindowRecord>& set, Perturbation kind,
                                          double magnitude, uint64_t rng_seed);

struct SplitManifest {
    std::vector<uint16_t> train, val, test;
    // 0 train, 1 val, 2 test, -1 unknown subject
    int split_of(uint16_t subject) const;
};

// Partition subjects (not windows) by the given ratios. InsufficientData
// when fewer than 3 distinct subjects exist.
SplitManifest split_subjects(const std::vector<WindowRecord>& records, double train_ratio,
                             double val_ratio, double test_ratio, uint64_t rng_seed);

std::vector<WindowRecord> filter_split(const std::vector<WindowRecord>& records,
                                       const std::vector<uint16_t>& subjects);

// Per-channel median/IQR over every sample of the given (training) windows.
struct NormStats {
    ChannelStats vib;
    ChannelStats radar;
};
NormStats compute_stats(const std::vector<WindowRecord>& train);

// Normalized model inputs: (x - median) / max(iqr, 1e-6) per channel.
void window_tensors(const WindowRecord& w, const NormStats& st, Tensor& vib, Tensor& radar);

// Round-trip of the stats through checkpoint buffers.
void stats_to_blobs(const NormStats& st, ckpt::BlobMap& blobs);
NormStats stats_from_blobs(const ckpt::BlobMap& blobs);

// Packed window file: header {magic "FWIN", version u16, count u32, L u16},
// then per record: label u8, scenario u8, weight f32, subject u16, t0_us
// u64, vib L*3 f32, radar L*5 f32. Little-endian throughout.
void save_windows(const std::string& path, const std::vector<WindowRecord>& recs);
std::vector<WindowRecord> load_windows(const std::string& path);  // IoError

// One window prepared for inference straight from raw device chunks: the
// online scoring path of the gateway, also timed by the latency benchmark.
// Conditions the raw vibration chunk, interpolates radar kinematics onto the
// window grid, applies a coherence-gated residual micro-shift, normalizes.
// An empty radar frame set or an empty vibration chunk zero-fills that
// modality (single-modality fallback).
struct PreparedWindow {
    Tensor vib;      // [kWindowLen, 3]
    Tensor radar;    // [kWindowLen, 5]
    double gamma = 0.0;
    double shift_s = 0.0;  // applied residual micro-shift
};
PreparedWindow prepare_window(const SampleSeries& vib_chunk, const RadarFrameSet& radar_chunk,
                              const NormStats& stats, const PipelineConfig& cfg = {});

// On-grid variant for windows whose payloads already sit on the model's
// 100 Hz grid (node-side conditioning done): residual micro-shift gate,
// window consistency weight and normalization only. With the gate closed the
// tensors match window_tensors on the same record bit for bit.
PreparedWindow prepare_window(const WindowRecord& w, const NormStats& stats,
                              const PipelineConfig& cfg = {});

}  // namespace falldet::ds
