#pragma once
// Radar point-cloud conditioning and the kinematic feature stream.

#include <vector>

#include "falldet/series.hpp"

namespace falldet {

// Static-clutter removal. A range-Doppler binned background mean (bins
// 0.1 m x 0.1 m/s) is maintained from near-static returns (|v| < 0.05 m/s):
// the first observation of a bin seeds the mean, later static observations
// blend in with rate 1/history. Every point has its bin's background mean
// (as of the previous frames) subtracted from its intensity; points whose
// residual is <= 0 are dropped. Moving returns never feed the background,
// so a repeated static scene is empty from the second frame on while
// motion survives untouched.
RadarFrameSet radar_background_subtract(const RadarFrameSet& frames, int history);

// Keeps points with intensity > median + k_sigma * 1.4826 * MAD of the
// frame's intensities. Frames with fewer than 3 points, or whose
// intensities are all equal (no evidence to discard), pass unchanged.
std::vector<RadarPoint> adaptive_threshold(const std::vector<RadarPoint>& points,
                                           double k_sigma);
RadarFrameSet adaptive_threshold(const RadarFrameSet& frames, double k_sigma);

// Density clustering in the normalized (range/eps_r, velocity/eps_v) plane
// with unit neighborhood radius: points with >= min_pts neighbors (self
// included) are cores, cores within radius of each other share a cluster,
// and non-core points attach to a neighboring core's cluster. Unclustered
// points are noise. Clusters are ordered by descending summed intensity.
std::vector<std::vector<RadarPoint>> cluster_range_doppler(
    const std::vector<RadarPoint>& points, double eps_r, double eps_v, int min_pts);

// Summary of the dominant (highest-energy) cluster:
// intensity-weighted mean range and mean |v|, unweighted population std of
// range and velocity, summed intensity. No clusters -> all zeros.
KinematicVector kinematic_descriptor(const std::vector<std::vector<RadarPoint>>& clusters,
                                     double t_s);

// Full per-frame conditioning: background subtraction, adaptive threshold,
// clustering, descriptor. Timestamps are taken from the frames.
std::vector<KinematicVector> kinematic_stream(const RadarFrameSet& frames, int history,
                                              double k_sigma, double eps_r, double eps_v,
                                              int min_pts);

// Linear interpolation of the 5-channel kinematic stream onto a uniform
// grid (typically the vibration clock). Queries outside the stream's span
// clamp to its endpoints; an empty stream yields all zeros.
SampleSeries interp_kinematics(const std::vector<KinematicVector>& ks, double rate_hz,
                               double t0_s, int64_t frames);

// Motion-energy envelope: energy * vr_absmean, smoothed by a centered
// 0.25 s moving average and rescaled to unit maximum (when positive).
Envelope radar_envelope(const SampleSeries& phi);

}  // namespace falldet
