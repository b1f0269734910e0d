#include <cmath>

#include "doctest.h"
#include "falldet/radar.hpp"
#include "helpers.hpp"

using namespace falldet;

namespace {

RadarFrame frame_at(double t, std::vector<RadarPoint> pts) {
    RadarFrame f;
    f.t_s = t;
    f.points = std::move(pts);
    return f;
}

}  // namespace

TEST_SUITE("radar") {

TEST_CASE("background_subtract: a repeated static scene empties after warm-up") {
    RadarFrameSet in;
    for (int i = 0; i < 10; ++i)
        in.frames.push_back(frame_at(0.08 * i, {{1.0, 0.0, 2.0}, {2.5, 0.01, 1.5}}));
    RadarFrameSet out = radar_background_subtract(in, 4);
    REQUIRE(out.frames.size() == 10);
    // The first frame seeds the background; from then on the static returns
    // are fully absorbed.
    for (size_t i = 1; i < out.frames.size(); ++i) CHECK(out.frames[i].points.empty());
}

TEST_CASE("background_subtract: a moving point survives a static background") {
    // Hand-simulated EMA script over 5 frames: the static point at r=1.0
    // seeds the background on frame 0 and is subtracted afterwards; the
    // mover (|v| = 0.8) never feeds the background and keeps its intensity.
    RadarFrameSet in;
    for (int i = 0; i < 5; ++i) {
        double r_move = 2.0 - 0.15 * i;
        in.frames.push_back(frame_at(0.08 * i, {{1.0, 0.0, 3.0}, {r_move, -0.8, 2.0}}));
    }
    RadarFrameSet out = radar_background_subtract(in, 4);
    REQUIRE(out.frames.size() == 5);
    for (size_t i = 1; i < 5; ++i) {
        REQUIRE(out.frames[i].points.size() == 1);
        CHECK(out.frames[i].points[0].radial_vel_mps == doctest::Approx(-0.8));
        CHECK(out.frames[i].points[0].intensity == doctest::Approx(2.0));
    }
}

TEST_CASE("background_subtract: empty frames stay empty") {
    RadarFrameSet in;
    in.frames.push_back(frame_at(0.0, {}));
    in.frames.push_back(frame_at(0.08, {}));
    RadarFrameSet out = radar_background_subtract(in, 4);
    REQUIRE(out.frames.size() == 2);
    CHECK(out.frames[0].points.empty());
    CHECK(out.frames[1].points.empty());
}

TEST_CASE("adaptive_threshold: equal intensities all pass (zero spread rule)") {
    std::vector<RadarPoint> pts(5, RadarPoint{1.0, 0.2, 3.0});
    auto out = adaptive_threshold(pts, 3.0);
    CHECK(out.size() == 5);
}

TEST_CASE("adaptive_threshold: {1,1,1,1,10} at k=3 keeps only the 10") {
    // median = 1, MAD = 0 on the majority -> threshold = 1; strictly greater
    // keeps only the outlier. Direct median/MAD arithmetic: med 1, deviations
    // {0,0,0,0,9}, MAD 0... the implementation guards zero MAD with the
    // documented rule, so check the effective outcome.
    std::vector<RadarPoint> pts;
    for (int i = 0; i < 4; ++i) pts.push_back({1.0 + 0.1 * i, 0.1, 1.0});
    pts.push_back({2.0, 0.4, 10.0});
    auto out = adaptive_threshold(pts, 3.0);
    REQUIRE(out.size() == 1);
    CHECK(out[0].intensity == doctest::Approx(10.0));
}

TEST_CASE("adaptive_threshold: tiny frames pass through unchanged") {
    std::vector<RadarPoint> pts{{1.0, 0.0, 0.5}, {2.0, 0.1, 9.0}};
    auto out = adaptive_threshold(pts, 3.0);
    CHECK(out.size() == 2);
}

TEST_CASE("cluster_range_doppler: two separated blobs, brute-force closure oracle") {
    Rng rng(81);
    std::vector<RadarPoint> pts;
    for (int i = 0; i < 10; ++i)
        pts.push_back({1.0 + 0.05 * rng.uniform(), 0.1 + 0.04 * rng.uniform(), 1.0});
    for (int i = 0; i < 10; ++i)
        pts.push_back({4.0 + 0.05 * rng.uniform(), -0.9 + 0.04 * rng.uniform(), 2.0});
    const double eps_r = 0.3, eps_v = 0.25;
    auto clusters = cluster_range_doppler(pts, eps_r, eps_v, 3);
    REQUIRE(clusters.size() == 2);
    CHECK(clusters[0].size() + clusters[1].size() == 20);
    // Higher-intensity blob first.
    double e0 = 0, e1 = 0;
    for (const auto& p : clusters[0]) e0 += p.intensity;
    for (const auto& p : clusters[1]) e1 += p.intensity;
    CHECK(e0 >= e1);

    // Brute-force transitive closure in the normalized plane must produce the
    // same two components.
    auto near = [&](const RadarPoint& a, const RadarPoint& b) {
        const double dr = (a.range_m - b.range_m) / eps_r;
        const double dv = (a.radial_vel_mps - b.radial_vel_mps) / eps_v;
        return dr * dr + dv * dv <= 1.0;
    };
    std::vector<int> comp(pts.size(), -1);
    int n_comp = 0;
    for (size_t i = 0; i < pts.size(); ++i) {
        if (comp[i] != -1) continue;
        std::vector<size_t> stack{i};
        comp[i] = n_comp;
        while (!stack.empty()) {
            size_t cur = stack.back();
            stack.pop_back();
            for (size_t j = 0; j < pts.size(); ++j)
                if (comp[j] == -1 && near(pts[cur], pts[j])) {
                    comp[j] = n_comp;
                    stack.push_back(j);
                }
        }
        ++n_comp;
    }
    CHECK(n_comp == 2);
}

TEST_CASE("cluster_range_doppler: fewer than min_pts points means no clusters") {
    std::vector<RadarPoint> pts{{1.0, 0.0, 1.0}, {1.01, 0.0, 1.0}};
    CHECK(cluster_range_doppler(pts, 0.3, 0.25, 3).empty());
}

TEST_CASE("kinematic_descriptor: zero case and singleton statistics") {
    KinematicVector z = kinematic_descriptor({}, 1.5);
    CHECK(z.r_mean == 0.0);
    CHECK(z.vr_absmean == 0.0);
    CHECK(z.r_std == 0.0);
    CHECK(z.vr_std == 0.0);
    CHECK(z.energy == 0.0);
    CHECK(z.t_s == doctest::Approx(1.5));

    KinematicVector s = kinematic_descriptor({{{2.0, -1.0, 4.0}}}, 0.0);
    CHECK(s.r_mean == doctest::Approx(2.0));
    CHECK(s.vr_absmean == doctest::Approx(1.0));
    CHECK(s.r_std == doctest::Approx(0.0));
    CHECK(s.vr_std == doctest::Approx(0.0));
    CHECK(s.energy == doctest::Approx(4.0));
}

TEST_CASE("kinematic_descriptor: 3-point cluster matches the formula oracle") {
    std::vector<RadarPoint> c{{1.0, -0.5, 2.0}, {1.4, -0.9, 1.0}, {2.0, 0.3, 3.0}};
    KinematicVector k = kinematic_descriptor({c}, 0.0);
    const double e = 2.0 + 1.0 + 3.0;
    const double r_mean = (1.0 * 2.0 + 1.4 * 1.0 + 2.0 * 3.0) / e;
    const double v_mean = (0.5 * 2.0 + 0.9 * 1.0 + 0.3 * 3.0) / e;
    double r_var = 0.0, v_var = 0.0;
    const double r_bar = (1.0 + 1.4 + 2.0) / 3.0;
    const double v_bar = (-0.5 - 0.9 + 0.3) / 3.0;
    for (const auto& p : c) {
        r_var += (p.range_m - r_bar) * (p.range_m - r_bar) / 3.0;
        v_var += (p.radial_vel_mps - v_bar) * (p.radial_vel_mps - v_bar) / 3.0;
    }
    CHECK(k.r_mean == doctest::Approx(r_mean).epsilon(1e-12));
    CHECK(k.vr_absmean == doctest::Approx(v_mean).epsilon(1e-12));
    CHECK(k.r_std == doctest::Approx(std::sqrt(r_var)).epsilon(1e-12));
    CHECK(k.vr_std == doctest::Approx(std::sqrt(v_var)).epsilon(1e-12));
    CHECK(k.energy == doctest::Approx(e));
}

TEST_CASE("interp_kinematics: endpoint clamping and empty-stream zeros") {
    std::vector<KinematicVector> ks(2);
    ks[0] = {1.0, 2.0, 0.5, 0.1, 0.2, 4.0};
    ks[1] = {2.0, 3.0, 1.5, 0.3, 0.4, 8.0};
    SampleSeries s = interp_kinematics(ks, 10.0, 0.0, 35);
    REQUIRE(s.frames() == 35);
    REQUIRE(s.channels == 5);
    CHECK(s.at(0, 0) == doctest::Approx(2.0));   // clamp before t=1
    CHECK(s.at(34, 0) == doctest::Approx(3.0));  // clamp after t=2
    CHECK(s.at(15, 0) == doctest::Approx(2.5));  // midpoint t=1.5
    CHECK(s.at(15, 4) == doctest::Approx(6.0));

    SampleSeries z = interp_kinematics({}, 10.0, 0.0, 8);
    for (double v : z.data) CHECK(v == 0.0);
}

TEST_CASE("radar_envelope: zero input, constant normalization, box response") {
    SampleSeries zero(100.0, 0.0, 5, std::vector<double>(100 * 5, 0.0));
    Envelope ez = radar_envelope(zero);
    for (double v : ez.values) CHECK(v == 0.0);

    // Constant E * vr_absmean > 0 rescales to a constant 1.
    SampleSeries con(100.0, 0.0, 5);
    for (int i = 0; i < 200; ++i) {
        con.data.insert(con.data.end(), {1.0, 0.7, 0.0, 0.0, 2.0});
    }
    Envelope ec = radar_envelope(con);
    for (double v : ec.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));

    // Impulse in E smears into a 0.25 s box; compare against an explicit
    // centered moving-average oracle.
    SampleSeries imp(100.0, 0.0, 5, std::vector<double>(400 * 5, 0.0));
    imp.at(200, 1) = 1.0;  // vr_absmean
    imp.at(200, 4) = 1.0;  // energy
    Envelope ei = radar_envelope(imp);
    std::vector<double> raw(400, 0.0);
    raw[200] = 1.0;
    const int half = int(0.25 * 100.0 / 2.0);
    std::vector<double> want(400, 0.0);
    for (int i = 0; i < 400; ++i) {
        double acc = 0.0;
        int cnt = 0;
        for (int j = std::max(0, i - half); j <= std::min(399, i + half); ++j) {
            acc += raw[size_t(j)];
            ++cnt;
        }
        want[size_t(i)] = acc / double(cnt);
    }
    const double mx = *std::max_element(want.begin(), want.end());
    for (auto& v : want) v /= mx;
    for (int i = 0; i < 400; ++i)
        CHECK(ei.values[size_t(i)] == doctest::Approx(want[size_t(i)]).epsilon(1e-9));
}

TEST_CASE("kinematic_stream: timestamps carried through the full conditioning") {
    RadarFrameSet in;
    Rng rng(91);
    for (int i = 0; i < 20; ++i) {
        std::vector<RadarPoint> pts;
        // static clutter + a moving cluster
        pts.push_back({3.0, 0.0, 2.0});
        for (int j = 0; j < 5; ++j)
            pts.push_back({1.5 - 0.02 * i + 0.03 * rng.uniform(), -0.5 + 0.02 * rng.uniform(),
                           2.0 + rng.uniform()});
        in.frames.push_back(frame_at(0.08 * i, std::move(pts)));
    }
    auto ks = kinematic_stream(in, 8, 2.5, 0.3, 0.25, 3);
    REQUIRE(ks.size() == 20);
    for (size_t i = 0; i < ks.size(); ++i) CHECK(ks[i].t_s == doctest::Approx(0.08 * double(i)));
    // The moving cluster should dominate at least the later frames.
    int nonzero = 0;
    for (const auto& k : ks)
        if (k.energy > 0) ++nonzero;
    CHECK(nonzero >= 15);
}

}  // TEST_SUITE
