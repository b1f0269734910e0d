#include "falldet/radar.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace falldet {

namespace {

constexpr double kBinRange = 0.1;    // m
constexpr double kBinVel = 0.1;      // m/s
constexpr double kStaticVel = 0.05;  // |v| below this feeds the background

int64_t bin_key(const RadarPoint& p) {
    int32_t r = int32_t(std::floor(p.range_m / kBinRange));
    int32_t v = int32_t(std::floor(p.radial_vel_mps / kBinVel));
    return (int64_t(r) << 32) | int64_t(uint32_t(v));
}

}  // namespace

RadarFrameSet radar_background_subtract(const RadarFrameSet& frames, int history) {
    frames.validate();
    if (history < 1) throw DegenerateInput("radar_background_subtract: history must be >= 1");

    std::unordered_map<int64_t, double> background;
    RadarFrameSet out;
    out.frames.reserve(frames.frames.size());
    for (const auto& frame : frames.frames) {
        RadarFrame cleaned;
        cleaned.t_s = frame.t_s;
        for (const auto& p : frame.points) {
            auto it = background.find(bin_key(p));
            double residual = p.intensity - (it == background.end() ? 0.0 : it->second);
            if (residual > 0.0) {
                RadarPoint q = p;
                q.intensity = residual;
                cleaned.points.push_back(q);
            }
        }
        // Update after subtraction so the mean reflects previous frames only.
        for (const auto& p : frame.points) {
            if (std::abs(p.radial_vel_mps) >= kStaticVel) continue;
            auto [it, inserted] = background.try_emplace(bin_key(p), p.intensity);
            if (!inserted) it->second += (p.intensity - it->second) / double(history);
        }
        out.frames.push_back(std::move(cleaned));
    }
    return out;
}

std::vector<RadarPoint> adaptive_threshold(const std::vector<RadarPoint>& points,
                                           double k_sigma) {
    if (!(k_sigma >= 0.0)) throw DegenerateInput("adaptive_threshold: k_sigma must be >= 0");
    if (points.size() < 3) return points;

    std::vector<double> inten(points.size());
    for (size_t i = 0; i < points.size(); ++i) inten[i] = points[i].intensity;
    auto [lo, hi] = std::minmax_element(inten.begin(), inten.end());
    if (*lo == *hi) return points;  // uniform frame: no evidence to discard

    double med = median(inten);
    std::vector<double> dev(inten.size());
    for (size_t i = 0; i < inten.size(); ++i) dev[i] = std::abs(inten[i] - med);
    double sigma = 1.4826 * median(std::move(dev));

    std::vector<RadarPoint> kept;
    for (const auto& p : points)
        if (p.intensity > med + k_sigma * sigma) kept.push_back(p);
    return kept;
}

RadarFrameSet adaptive_threshold(const RadarFrameSet& frames, double k_sigma) {
    RadarFrameSet out;
    out.frames.resize(frames.frames.size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < int64_t(frames.frames.size()); ++i) {
        out.frames[size_t(i)].t_s = frames.frames[size_t(i)].t_s;
        out.frames[size_t(i)].points =
            adaptive_threshold(frames.frames[size_t(i)].points, k_sigma);
    }
    return out;
}

std::vector<std::vector<RadarPoint>> cluster_range_doppler(
    const std::vector<RadarPoint>& points, double eps_r, double eps_v, int min_pts) {
    if (!(eps_r > 0.0) || !(eps_v > 0.0))
        throw DegenerateInput("cluster_range_doppler: eps must be positive");
    if (min_pts < 1) throw DegenerateInput("cluster_range_doppler: min_pts must be >= 1");

    const int n = int(points.size());
    std::vector<std::vector<int>> nbrs(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double dr = (points[size_t(i)].range_m - points[size_t(j)].range_m) / eps_r;
            double dv =
                (points[size_t(i)].radial_vel_mps - points[size_t(j)].radial_vel_mps) / eps_v;
            if (dr * dr + dv * dv <= 1.0) nbrs[size_t(i)].push_back(j);
        }
    }
    std::vector<bool> core(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) core[size_t(i)] = int(nbrs[size_t(i)].size()) >= min_pts;

    std::vector<int> cluster_of(static_cast<size_t>(n), -1);
    int n_clusters = 0;
    for (int i = 0; i < n; ++i) {
        if (!core[size_t(i)] || cluster_of[size_t(i)] >= 0) continue;
        int id = n_clusters++;
        std::vector<int> stack{i};
        cluster_of[size_t(i)] = id;
        while (!stack.empty()) {
            int cur = stack.back();
            stack.pop_back();
            for (int nb : nbrs[size_t(cur)]) {
                if (cluster_of[size_t(nb)] >= 0) continue;
                cluster_of[size_t(nb)] = id;
                if (core[size_t(nb)]) stack.push_back(nb);  // borders attach, don't expand
            }
        }
    }

    std::vector<std::vector<RadarPoint>> clusters(static_cast<size_t>(n_clusters));
    std::vector<double> energy(static_cast<size_t>(n_clusters), 0.0);
    for (int i = 0; i < n; ++i) {
        int id = cluster_of[size_t(i)];
        if (id < 0) continue;
        clusters[size_t(id)].push_back(points[size_t(i)]);
        energy[size_t(id)] += points[size_t(i)].intensity;
    }
    std::vector<int> order(static_cast<size_t>(n_clusters));
    for (int i = 0; i < n_clusters; ++i) order[size_t(i)] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return energy[size_t(a)] > energy[size_t(b)]; });
    std::vector<std::vector<RadarPoint>> sorted;
    sorted.reserve(static_cast<size_t>(n_clusters));
    for (int id : order) sorted.push_back(std::move(clusters[size_t(id)]));
    return sorted;
}

KinematicVector kinematic_descriptor(const std::vector<std::vector<RadarPoint>>& clusters,
                                     double t_s) {
    KinematicVector k;
    k.t_s = t_s;
    if (clusters.empty() || clusters.front().empty()) return k;
    const auto& dom = clusters.front();
    double energy = 0.0;
    for (const auto& p : dom) energy += p.intensity;
    if (energy <= 0.0) return k;

    double wr = 0.0, wv = 0.0;
    for (const auto& p : dom) {
        wr += p.intensity * p.range_m;
        wv += p.intensity * std::abs(p.radial_vel_mps);
    }
    k.r_mean = wr / energy;
    k.vr_absmean = wv / energy;

    double mr = 0.0, mv = 0.0;
    for (const auto& p : dom) {
        mr += p.range_m;
        mv += p.radial_vel_mps;
    }
    mr /= double(dom.size());
    mv /= double(dom.size());
    double vr = 0.0, vv = 0.0;
    for (const auto& p : dom) {
        vr += (p.range_m - mr) * (p.range_m - mr);
        vv += (p.radial_vel_mps - mv) * (p.radial_vel_mps - mv);
    }
    k.r_std = std::sqrt(vr / double(dom.size()));
    k.vr_std = std::sqrt(vv / double(dom.size()));
    k.energy = energy;
    return k;
}

std::vector<KinematicVector> kinematic_stream(const RadarFrameSet& frames, int history,
                                              double k_sigma, double eps_r, double eps_v,
                                              int min_pts) {
    RadarFrameSet cleaned = radar_background_subtract(frames, history);
    std::vector<KinematicVector> out(cleaned.frames.size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < int64_t(cleaned.frames.size()); ++i) {
        const auto& frame = cleaned.frames[size_t(i)];
        auto kept = adaptive_threshold(frame.points, k_sigma);
        auto clusters = cluster_range_doppler(kept, eps_r, eps_v, min_pts);
        out[size_t(i)] = kinematic_descriptor(clusters, frame.t_s);
    }
    return out;
}

SampleSeries interp_kinematics(const std::vector<KinematicVector>& ks, double rate_hz,
                               double t0_s, int64_t frames) {
    if (!(rate_hz > 0.0)) throw DegenerateInput("interp_kinematics: rate must be positive");
    if (frames < 0) throw DegenerateInput("interp_kinematics: negative frame count");
    SampleSeries out(rate_hz, t0_s, kKinematicChannels);
    out.data.assign(static_cast<size_t>(frames) * kKinematicChannels, 0.0);
    if (ks.empty()) return out;

    auto fields = [](const KinematicVector& k, int c) {
        switch (c) {
            case 0: return k.r_mean;
            case 1: return k.vr_absmean;
            case 2: return k.r_std;
            case 3: return k.vr_std;
            default: return k.energy;
        }
    };
    size_t seg = 0;
    for (int64_t n = 0; n < frames; ++n) {
        double t = t0_s + double(n) / rate_hz;
        while (seg + 2 < ks.size() && ks[seg + 1].t_s < t) ++seg;
        const auto& a = ks[seg];
        const auto& b = ks[std::min(seg + 1, ks.size() - 1)];
        double w = 0.0;
        if (b.t_s > a.t_s) w = std::clamp((t - a.t_s) / (b.t_s - a.t_s), 0.0, 1.0);
        for (int c = 0; c < kKinematicChannels; ++c)
            out.at(n, c) = fields(a, c) * (1.0 - w) + fields(b, c) * w;
    }
    return out;
}

Envelope radar_envelope(const SampleSeries& phi) {
    phi.validate();
    if (phi.channels != kKinematicChannels)
        throw ShapeMismatch("radar_envelope: expected 5 kinematic channels");
    const int64_t N = phi.frames();
    std::vector<double> raw(static_cast<size_t>(N));
    for (int64_t n = 0; n < N; ++n) raw[size_t(n)] = phi.at(n, 4) * phi.at(n, 1);

    const int64_t half = std::max<int64_t>(0, int64_t(std::llround(0.25 * phi.rate_hz)) / 2);
    Envelope e;
    e.rate_hz = phi.rate_hz;
    e.t0_s = phi.t0_s;
    e.values.resize(static_cast<size_t>(N));
    double peak = 0.0;
    for (int64_t n = 0; n < N; ++n) {
        int64_t lo = std::max<int64_t>(0, n - half);
        int64_t hi = std::min<int64_t>(N - 1, n + half);
        double acc = 0.0;
        for (int64_t i = lo; i <= hi; ++i) acc += raw[size_t(i)];
        e.values[size_t(n)] = acc / double(hi - lo + 1);
        peak = std::max(peak, e.values[size_t(n)]);
    }
    if (peak > 0.0)
        for (auto& v : e.values) v /= peak;
    return e;
}

}  // namespace falldet
