#include "falldet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace falldet::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Cosine-eased move between two ranges: velocity ramps smoothly from zero to
// a peak of (pi/2) * |r1-r0| / (t1-t0) and back, so descent speed targets can
// be hit exactly by choosing the range delta.
struct Move {
    double t0 = 0, t1 = 0, r0 = 0, r1 = 0;
};

double move_r(const Move& m, double t) {
    double u = (t - m.t0) / (m.t1 - m.t0);
    return m.r0 + (m.r1 - m.r0) * 0.5 * (1.0 - std::cos(kPi * u));
}

double move_v(const Move& m, double t) {
    double u = (t - m.t0) / (m.t1 - m.t0);
    return (m.r1 - m.r0) * kPi * std::sin(kPi * u) / (2.0 * (m.t1 - m.t0));
}

struct VelocityPulse {
    double t = 0, amp = 0, w = 0.09;
};

struct Trajectory {
    bool present = false;
    double r_start = 2.0;
    std::vector<Move> moves;             // sorted by t0, disjoint
    std::vector<VelocityPulse> pulses;   // gait micro-Doppler, sorted by t

    // Holds the last reached range between moves.
    double r(double t) const {
        double r_cur = r_start;
        for (const auto& m : moves) {
            if (t < m.t0) break;
            if (t <= m.t1) return move_r(m, t);
            r_cur = m.r1;
        }
        return r_cur;
    }
    double v(double t) const {
        double base = 0.0;
        for (const auto& m : moves) {
            if (t < m.t0) break;
            if (t <= m.t1) {
                base = move_v(m, t);
                break;
            }
        }
        // Step-synchronous torso oscillation. Each footfall also shakes the
        // radar return; this shared timing is what envelope alignment keys
        // on. Pushes |v| up so the direction of travel is preserved.
        double tex = 0.0;
        for (const auto& p : pulses) {
            double u = (t - p.t) / p.w;
            if (t - p.t < -0.6) break;  // sorted: later pulses only get farther
            if (u > 4.0 || u < -4.0) continue;
            tex += p.amp * std::exp(-0.5 * u * u);
        }
        if (base == 0.0) return tex;
        return base + (base > 0 ? tex : -tex);
    }
};

// kind: 0 slab impact (fall/drop), 1 footstep, 2 shuffle.
struct VibEvent {
    double t = 0;
    double amp = 0;
    int kind = 0;
};

enum EvType { kEvFall = 0, kEvSquat, kEvBend, kEvShift };

struct Ev {
    double t = 0;
    int type = 0;
    double a = 0, b = 0, c = 0, d = 0, e = 0;  // type-specific params
};

struct SubjectTraits {
    double amp, speed, cadence;
};

SubjectTraits traits_of(int subject) {
    int s = subject < 0 ? 0 : subject;
    return {0.75 + 0.09 * double(s % 6), 0.85 + 0.05 * double(s % 6),
            0.90 + 0.04 * double(s % 5)};
}

struct ScenarioStyle {
    bool walks = false;
    double walk_speed = 0.0;   // mean leg speed, m/s
    double cadence_hz = 0.0;
    double step_scale = 1.0;   // footstep amplitude factor
    double fall_amp_scale = 1.0;
};

ScenarioStyle style_of(Scenario s) {
    switch (s) {
        case Scenario::empty_bathroom: return {};
        case Scenario::light_object_drop: return {true, 0.45, 1.70, 1.00, 1.0};
        case Scenario::heavy_object_drop: return {true, 0.45, 1.70, 1.00, 1.0};
        case Scenario::normal_walking: return {true, 0.50, 1.80, 1.00, 1.0};
        case Scenario::bent_posture_walk: return {true, 0.33, 1.50, 0.90, 1.0};
        case Scenario::wall_supported_walk: return {true, 0.22, 1.15, 0.70, 0.8};
        case Scenario::static_standing: return {false, 0, 0, 1.0, 1.0};
        case Scenario::squatting: return {false, 0, 0, 1.0, 1.0};
    }
    return {};
}

struct SessionPlan {
    Trajectory traj;
    std::vector<VibEvent> vib_events;
    std::vector<LabelSpan> labels;
};

bool inside_episode(const std::vector<FallEpisode>& eps, double t, double margin) {
    for (const auto& ep : eps)
        if (t >= ep.start_s - margin && t <= ep.end_s + margin) return true;
    return false;
}

SessionPlan plan_session(const ScenarioScript& s, const GeneratorConfig& cfg, Rng& root) {
    SessionPlan plan;
    const ScenarioStyle style = style_of(s.scenario);
    const SubjectTraits who = traits_of(s.subject);
    Rng sched = root.child(1);
    Rng fill = root.child(2);

    plan.traj.present = s.scenario != Scenario::empty_bathroom;
    plan.traj.r_start = 1.4 + 1.6 * sched.uniform();

    std::vector<Ev> evs;

    // Falls: descent, short gap, impact, lying still, slow recovery. All
    // parameters are drawn here, in episode order, so the plan is a pure
    // function of the seed.
    for (const auto& ep : s.falls) {
        Ev e;
        e.type = kEvFall;
        e.a = cfg.descent_lo_s + (cfg.descent_hi_s - cfg.descent_lo_s) * sched.uniform();
        e.b = cfg.impact_gap_lo_s + (cfg.impact_gap_hi_s - cfg.impact_gap_lo_s) * sched.uniform();
        e.c = 2.0 + 2.0 * sched.uniform();              // lie
        e.d = 1.5 + 1.0 * sched.uniform();              // rise
        double v_pk = cfg.fall_speed_lo + (cfg.fall_speed_hi - cfg.fall_speed_lo) * sched.uniform();
        e.e = std::clamp(v_pk * (0.9 + 0.2 * who.amp), cfg.fall_speed_lo, cfg.fall_speed_hi);
        double len = ep.end_s - ep.start_s;
        double tail = e.a + e.b + e.c + e.d + 1.0;
        double room = std::max(0.5, len - tail - 1.0);
        e.t = ep.start_s + 1.0 + room * (0.25 + 0.5 * sched.uniform());
        evs.push_back(e);

        double t_imp = e.t + e.a + e.b;
        double amp = cfg.fall_amp * who.amp * style.fall_amp_scale * (0.85 + 0.35 * sched.uniform());
        plan.vib_events.push_back({t_imp, amp, 0});
        plan.labels.push_back({e.t, t_imp + 0.5, "fall"});
    }

    // Object drops: impact with no preceding descent; optionally a bend-down
    // pickup AFTER the impact (outside the +-1 s causal window).
    for (const auto& d : s.drops) {
        double amp = cfg.fall_amp * d.amp * (0.9 + 0.2 * sched.uniform());
        plan.vib_events.push_back({d.t_s, amp, 0});
        plan.labels.push_back({d.t_s - 0.05, d.t_s + 0.5, "drop"});
        if (d.pickup) {
            Ev e;
            e.type = kEvBend;
            e.t = d.t_s + 1.2 + 0.8 * sched.uniform();
            e.a = cfg.bend_dur_lo_s + (cfg.bend_dur_hi_s - cfg.bend_dur_lo_s) * sched.uniform();
            e.b = cfg.bend_speed_lo + (cfg.bend_speed_hi - cfg.bend_speed_lo) * sched.uniform();
            e.c = 0.8;  // hold at the bottom
            evs.push_back(e);
        }
    }

    // Scenario-specific background movement confounders.
    if (s.scenario == Scenario::squatting) {
        double t = 2.0 + 2.0 * sched.uniform();
        while (t + 6.0 < s.duration_s) {
            if (!inside_episode(s.falls, t, 1.5) && !inside_episode(s.falls, t + 5.0, 1.5)) {
                Ev e;
                e.type = kEvSquat;
                e.t = t;
                e.a = cfg.squat_dur_lo_s + (cfg.squat_dur_hi_s - cfg.squat_dur_lo_s) * sched.uniform();
                e.b = cfg.squat_speed_lo + (cfg.squat_speed_hi - cfg.squat_speed_lo) * sched.uniform();
                e.c = 0.8 + 0.8 * sched.uniform();
                evs.push_back(e);
            }
            t += 5.5 + 4.0 * sched.uniform();
        }
    }
    if (s.scenario == Scenario::bent_posture_walk) {
        double t = 4.0 + 3.0 * sched.uniform();
        while (t + 6.0 < s.duration_s) {
            if (!inside_episode(s.falls, t, 1.5) && !inside_episode(s.falls, t + 5.0, 1.5)) {
                Ev e;
                e.type = kEvBend;
                e.t = t;
                e.a = cfg.bend_dur_lo_s + (cfg.bend_dur_hi_s - cfg.bend_dur_lo_s) * sched.uniform();
                e.b = cfg.bend_speed_lo + (cfg.bend_speed_hi - cfg.bend_speed_lo) * sched.uniform();
                e.c = 0.8;
                evs.push_back(e);
            }
            t += 9.0 + 5.0 * sched.uniform();
        }
    }
    if (s.scenario == Scenario::static_standing) {
        double t = 2.0 + 2.0 * sched.uniform();
        while (t + 3.0 < s.duration_s) {
            if (!inside_episode(s.falls, t, 1.0)) {
                Ev e;
                e.type = kEvShift;
                e.t = t;
                e.a = 0.8 + 0.6 * sched.uniform();                       // duration
                e.b = (0.04 + 0.08 * sched.uniform()) *                  // delta
                      (sched.uniform() < 0.5 ? -1.0 : 1.0);
                evs.push_back(e);
            }
            t += 4.0 + 4.0 * sched.uniform();
        }
    }

    std::stable_sort(evs.begin(), evs.end(), [](const Ev& x, const Ev& y) { return x.t < y.t; });

    // Sequential timeline construction: walk or idle up to each event, then
    // play the event's moves. Events that would start mid-sequence are
    // skipped; the schedule above keeps them sparse enough for that to be
    // rare.
    double t_cur = 0.2;
    double r_cur = plan.traj.r_start;

    auto add_move = [&](double t0, double dur, double r_to) {
        Move m{t0, t0 + dur, r_cur, r_to};
        plan.traj.moves.push_back(m);
        r_cur = r_to;
    };

    auto steps_during = [&](const Move& m) {
        if (!style.walks) return;
        // Cadence wanders leg to leg and step to step; a harder strike shakes
        // the floor more and jolts the gait velocity more, so both streams
        // share one strength draw per step.
        double dt = (0.85 + 0.3 * fill.uniform()) / (style.cadence_hz * who.cadence);
        double t = m.t0 + dt * (0.3 + 0.4 * fill.uniform());
        while (t < m.t1) {
            double u = fill.uniform();
            double amp = cfg.footstep_amp * who.amp * style.step_scale * (0.55 + 0.9 * u);
            plan.vib_events.push_back({t, amp, 1});
            // weight transfer peaks shortly after initial contact, which also
            // co-centers the velocity jolt with the ring's energy centroid
            plan.traj.pulses.push_back({t + 0.04, (0.16 + 0.30 * u) * style.step_scale * who.speed,
                                        0.055 + 0.06 * fill.uniform()});
            t += dt * (0.78 + 0.44 * fill.uniform());
        }
    };

    auto fill_until = [&](double t_stop) {
        if (!plan.traj.present) {
            t_cur = t_stop;
            return;
        }
        while (style.walks && t_cur + 0.5 < t_stop) {
            double target = 0.8 + 2.6 * fill.uniform();
            if (std::abs(target - r_cur) < 0.3) target = r_cur + (target >= r_cur ? 0.4 : -0.4);
            double speed = style.walk_speed * who.speed;
            double dur = std::abs(target - r_cur) / speed;
            if (t_cur + dur > t_stop) {
                dur = t_stop - t_cur;
                target = r_cur + (target > r_cur ? 1.0 : -1.0) * speed * dur;
            }
            if (dur < 0.25) break;
            double t0 = t_cur;
            add_move(t0, dur, std::clamp(target, 0.5, 4.4));
            steps_during(plan.traj.moves.back());
            t_cur = t0 + dur;
            if (fill.uniform() < 0.5) t_cur += 0.4 + 0.8 * fill.uniform();
        }
        t_cur = std::max(t_cur, t_stop);
    };

    for (const auto& e : evs) {
        if (e.t < t_cur) continue;  // overlaps an ongoing sequence
        fill_until(e.t);
        t_cur = e.t;
        switch (e.type) {
            case kEvFall: {
                double dr = 2.0 * e.e * e.a / kPi;
                double sgn = (r_cur - dr >= 0.45) ? -1.0 : 1.0;
                add_move(t_cur, e.a, r_cur + sgn * dr);
                double t_imp = e.t + e.a + e.b;
                // The body does not stop dead at impact: limbs settle for a
                // few hundred ms, so the radar keeps seeing motion while the
                // slab rings. Then lying still, then a slow rise.
                int n_settle = 2 + int(fill.uniform() * 2.0);
                double ts = t_imp + 0.03;
                for (int k = 0; k < n_settle; ++k) {
                    plan.traj.pulses.push_back({ts, (0.18 + 0.22 * fill.uniform()) * who.amp,
                                                0.07 + 0.07 * fill.uniform()});
                    ts += 0.12 + 0.18 * fill.uniform();
                }
                double t_rise = t_imp + e.c;
                add_move(t_rise, e.d, r_cur - sgn * 0.75 * dr);
                t_cur = t_rise + e.d + 0.3;
                break;
            }
            case kEvSquat:
            case kEvBend: {
                double dr = 2.0 * e.b * e.a / kPi;
                double sgn = (r_cur - dr >= 0.45) ? -1.0 : 1.0;
                add_move(t_cur, e.a, r_cur + sgn * dr);
                plan.vib_events.push_back(
                    {t_cur + e.a, 0.02 * who.amp * (0.7 + 0.6 * fill.uniform()), 2});
                double t_up = t_cur + e.a + e.c;
                add_move(t_up, e.a * 1.15, r_cur - sgn * dr);
                t_cur = t_up + e.a * 1.15 + 0.2;
                break;
            }
            case kEvShift: {
                add_move(t_cur, e.a, std::clamp(r_cur + e.b, 0.5, 4.4));
                t_cur += e.a + 0.1;
                break;
            }
        }
    }
    fill_until(s.duration_s);

    std::stable_sort(plan.vib_events.begin(), plan.vib_events.end(),
                     [](const VibEvent& x, const VibEvent& y) { return x.t < y.t; });
    std::stable_sort(plan.traj.pulses.begin(), plan.traj.pulses.end(),
                     [](const VelocityPulse& x, const VelocityPulse& y) { return x.t < y.t; });
    std::stable_sort(plan.labels.begin(), plan.labels.end(),
                     [](const LabelSpan& x, const LabelSpan& y) { return x.start_s < y.start_s; });
    return plan;
}

void render_vibration(const ScenarioScript& s, const GeneratorConfig& cfg,
                      const SessionPlan& plan, Rng& root, SampleSeries& vib) {
    const double rate = cfg.vib_rate_hz;
    const int64_t n = int64_t(std::llround(s.duration_s * rate));
    vib = SampleSeries(rate, 0.0, 3);
    vib.data.assign(static_cast<size_t>(n) * 3, 0.0);

    Rng noise = root.child(3);
    double sigma = cfg.noise_floor * s.vib_noise;
    if (s.water_on) {
        double sw = cfg.water_noise * s.water_level;
        sigma = std::sqrt(sigma * sigma + sw * sw);
    }
    for (int64_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) vib.at(i, c) = noise.normal(0.0, sigma);

    Rng ring = root.child(4);
    for (const auto& ev : plan.vib_events) {
        double ax[3];
        double freq[3], phase[3], decay[3];
        double f_lo, f_hi, d_lo, d_hi;
        if (ev.kind == 0) {
            ax[0] = 0.35 + 0.45 * ring.uniform();
            ax[1] = 0.35 + 0.45 * ring.uniform();
            ax[2] = 1.0;
            f_lo = cfg.ring_freq_lo_hz;
            f_hi = cfg.ring_freq_hi_hz;
            d_lo = cfg.ring_decay_lo_s;
            d_hi = cfg.ring_decay_hi_s;
        } else if (ev.kind == 1) {
            ax[0] = 0.2 + 0.3 * ring.uniform();
            ax[1] = 0.2 + 0.3 * ring.uniform();
            ax[2] = 1.0;
            f_lo = 20.0, f_hi = 34.0, d_lo = 0.06, d_hi = 0.14;
        } else {
            ax[0] = 0.3 + 0.3 * ring.uniform();
            ax[1] = 0.3 + 0.3 * ring.uniform();
            ax[2] = 1.0;
            f_lo = 14.0, f_hi = 24.0, d_lo = 0.10, d_hi = 0.20;
        }
        for (int c = 0; c < 3; ++c) {
            freq[c] = f_lo + (f_hi - f_lo) * ring.uniform();
            phase[c] = 2.0 * kPi * ring.uniform();
            decay[c] = d_lo + (d_hi - d_lo) * ring.uniform();
        }
        double span = std::min(5.0 * decay[2] + 0.1, 3.0);
        int64_t i0 = std::max<int64_t>(0, int64_t(std::ceil(ev.t * rate)));
        int64_t i1 = std::min(n, int64_t(std::ceil((ev.t + span) * rate)));
        for (int64_t i = i0; i < i1; ++i) {
            double t = double(i) / rate - ev.t;
            for (int c = 0; c < 3; ++c) {
                vib.at(i, c) += ev.amp * ax[c] * std::exp(-t / decay[c]) *
                                std::sin(2.0 * kPi * freq[c] * t + phase[c]);
            }
        }
        if (ev.kind == 0) {
            // broadband crack riding on the impact onset
            int64_t j1 = std::min(n, i0 + int64_t(0.03 * rate));
            for (int64_t i = i0; i < j1; ++i)
                for (int c = 0; c < 3; ++c)
                    vib.at(i, c) += ring.normal(0.0, cfg.crack_frac * ev.amp);
        }
    }
    vib.validate();
}

void render_radar(const ScenarioScript& s, const GeneratorConfig& cfg, const SessionPlan& plan,
                  Rng& root, RadarFrameSet& out) {
    Rng rr = root.child(5);
    const int64_t k_frames = int64_t(std::floor(s.duration_s * cfg.radar_rate_hz));

    struct Clutter {
        double r, base;
    };
    std::vector<Clutter> clutter;
    for (int i = 0; i < cfg.clutter_objects; ++i) {
        double r = 0.0;
        for (int attempt = 0; attempt < 20; ++attempt) {
            r = 0.6 + 3.6 * rr.uniform();
            bool ok = true;
            for (const auto& c : clutter) ok = ok && std::abs(c.r - r) >= 0.5;
            if (ok) break;
        }
        clutter.push_back({r, 3.0 + 3.0 * rr.uniform()});
    }

    out.frames.clear();
    out.frames.reserve(static_cast<size_t>(k_frames));
    for (int64_t k = 0; k < k_frames; ++k) {
        RadarFrame fr;
        fr.t_s = double(k) / cfg.radar_rate_hz;  // the radar's own clock
        // content time on the shared true clock, skewed and offset
        double t_true =
            std::clamp((fr.t_s - s.clock_delay_s) / (1.0 + s.clock_drift), 0.0, s.duration_s);

        for (const auto& c : clutter) {
            if (rr.uniform() < 0.92)
                fr.points.push_back(
                    {c.r + rr.normal(0.0, 0.01), rr.normal(0.0, 0.012),
                     c.base * (1.0 + rr.normal(0.0, 0.01))});
        }
        if (plan.traj.present) {
            double r0 = plan.traj.r(t_true) + rr.normal(0.0, 0.008);
            double v0 = plan.traj.v(t_true) + rr.normal(0.0, 0.02);
            int npts = cfg.person_pts_lo +
                       int(rr.below(uint64_t(cfg.person_pts_hi - cfg.person_pts_lo + 1)));
            double gain = 1.0 + cfg.intensity_motion_gain * std::min(std::abs(v0), 2.0);
            for (int p = 0; p < npts; ++p) {
                double pr = std::max(0.15, r0 + rr.normal(0.0, cfg.pt_sigma_r));
                double pv = v0 + rr.normal(0.0, cfg.pt_sigma_v);
                double pi =
                    (cfg.intensity_lo + (cfg.intensity_hi - cfg.intensity_lo) * rr.uniform()) * gain;
                fr.points.push_back({pr, pv, pi});
            }
        }
        double expect = cfg.stray_point_rate * s.radar_noise;
        int strays = int(expect);
        if (rr.uniform() < expect - double(strays)) ++strays;
        for (int p = 0; p < strays; ++p)
            fr.points.push_back(
                {0.3 + 4.5 * rr.uniform(), -0.8 + 1.6 * rr.uniform(), 0.25 + 0.85 * rr.uniform()});
        out.frames.push_back(std::move(fr));
    }
    out.validate();
}

}  // namespace

const char* scenario_name(Scenario s) {
    switch (s) {
        case Scenario::empty_bathroom: return "empty_bathroom";
        case Scenario::light_object_drop: return "light_object_drop";
        case Scenario::heavy_object_drop: return "heavy_object_drop";
        case Scenario::normal_walking: return "normal_walking";
        case Scenario::bent_posture_walk: return "bent_posture_walk";
        case Scenario::wall_supported_walk: return "wall_supported_walk";
        case Scenario::static_standing: return "static_standing";
        case Scenario::squatting: return "squatting";
    }
    return "unknown";
}

Scenario parse_scenario(const std::string& name) {
    for (int i = 0; i < kScenarioCount; ++i)
        if (name == scenario_name(Scenario(i))) return Scenario(i);
    throw ScriptError("unknown scenario: " + name);
}

void ScenarioScript::validate() const {
    if (!(duration_s > 0.0) || duration_s > 3600.0)
        throw ScriptError("session duration out of range");
    if (std::abs(clock_delay_s) > 2.0) throw ScriptError("clock delay out of range");
    if (std::abs(clock_drift) > 5e-3) throw ScriptError("clock drift out of range");
    if (vib_noise < 0 || radar_noise < 0) throw ScriptError("negative noise scale");
    if (water_level < 0 || water_level > 1) throw ScriptError("water level out of range");

    std::vector<FallEpisode> eps = falls;
    std::sort(eps.begin(), eps.end(),
              [](const FallEpisode& a, const FallEpisode& b) { return a.start_s < b.start_s; });
    double prev_end = -1.0;
    for (const auto& ep : eps) {
        double len = ep.end_s - ep.start_s;
        if (ep.start_s < 0 || ep.end_s > duration_s)
            throw ScriptError("fall episode outside the session");
        if (len < 20.0 || len > 30.0)
            throw ScriptError("fall episode must span 20-30 s of context");
        if (ep.start_s < prev_end) throw ScriptError("fall episodes overlap");
        prev_end = ep.end_s;
    }
    for (const auto& d : drops) {
        if (d.t_s < 1.0 || d.t_s > duration_s - 1.0)
            throw ScriptError("drop too close to the session boundary");
        if (d.amp <= 0.0 || d.amp > 2.0) throw ScriptError("drop amplitude out of range");
        if (inside_episode(falls, d.t_s, 1.0))
            throw ScriptError("drop scheduled inside a fall episode");
    }
    if (scenario == Scenario::empty_bathroom && (!falls.empty() || !drops.empty()))
        throw ScriptError("empty-bathroom script cannot contain events");
}

Recording generate_scenario(const ScenarioScript& script, uint64_t rng_seed,
                            const GeneratorConfig& cfg) {
    script.validate();
    Rng root(rng_seed);

    SessionPlan plan = plan_session(script, cfg, root);

    Recording rec;
    char sid[64];
    std::snprintf(sid, sizeof(sid), "s%02d_%s", script.subject, scenario_name(script.scenario));
    rec.session_id = sid;
    rec.scenario = script.scenario;
    rec.subject = script.subject;
    rec.water_on = script.water_on;
    rec.labels = plan.labels;
    render_vibration(script, cfg, plan, root, rec.vib);
    render_radar(script, cfg, plan, root, rec.radar);
    return rec;
}

ScenarioScript make_script(Scenario scenario, int subject, uint64_t seed, double duration_s) {
    Rng rng(seed);
    ScenarioScript s;
    s.scenario = scenario;
    s.subject = subject;
    s.duration_s = duration_s;
    s.water_on = rng.uniform() < 0.3;
    s.water_level = s.water_on ? 0.3 + 0.5 * rng.uniform() : 0.0;
    s.clock_delay_s = -0.25 + 0.5 * rng.uniform();
    s.clock_drift = (-3.0 + 6.0 * rng.uniform()) * 1e-4;
    s.vib_noise = 0.8 + 0.5 * rng.uniform();
    s.radar_noise = 0.7 + 0.6 * rng.uniform();

    if (scenario != Scenario::empty_bathroom && duration_s >= 56.0) {
        double g1 = 0.8 + 1.7 * rng.uniform();
        double l1 = 20.0 + 4.0 * rng.uniform();
        s.falls.push_back({g1, g1 + l1});
        double g2 = 1.5 + 2.5 * rng.uniform();
        double l2 = 20.0 + 4.0 * rng.uniform();
        double start2 = g1 + l1 + g2;
        if (start2 + l2 <= duration_s - 1.0) s.falls.push_back({start2, start2 + l2});
    }

    bool light = scenario == Scenario::light_object_drop;
    bool heavy = scenario == Scenario::heavy_object_drop;
    if (light || heavy) {
        double tail0 = s.falls.empty() ? 2.0 : s.falls.back().end_s + 2.0;
        double t = tail0 + rng.uniform();
        for (int i = 0; i < 3 && t < duration_s - 3.0; ++i) {
            DropEvent d;
            d.t_s = t;
            d.amp = heavy ? 0.85 + 0.25 * rng.uniform() : 0.20 + 0.15 * rng.uniform();
            d.pickup = heavy;
            s.drops.push_back(d);
            t += 3.5 + 2.5 * rng.uniform();
        }
    }
    return s;
}

}  // namespace falldet::synth
