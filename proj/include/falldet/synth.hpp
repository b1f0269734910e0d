#pragma once

// Synthetic bathroom-session generator. Produces paired vibration (200 Hz,
// triaxial) and radar point-cloud streams from a scripted event schedule,
// with ground-truth labels and a deliberately de-synchronized radar clock.
//
// The physics is stylized but preserves the cues the detector relies on:
//   - impacts ring the floor slab (damped 18-30 Hz sinusoids),
//   - a fall is a fast radar range descent whose END precedes the impact
//     peak by at most ~0.3 s (causal ordering),
//   - an object drop is a fall-sized impact with NO preceding descent,
//   - squats and bends are slower descents with no impact,
//   - walking is quasi-periodic footfalls plus a range-migrating cluster.

#include <cstdint>
#include <string>
#include <vector>

#include "falldet/series.hpp"

namespace falldet::synth {

enum class Scenario : uint8_t {
    empty_bathroom = 0,
    light_object_drop = 1,
    heavy_object_drop = 2,
    normal_walking = 3,
    bent_posture_walk = 4,
    wall_supported_walk = 5,
    static_standing = 6,
    squatting = 7,
};
inline constexpr int kScenarioCount = 8;

const char* scenario_name(Scenario s);
Scenario parse_scenario(const std::string& name);  // ScriptError on unknown name

// A fall plays out somewhere inside a 20-30 s context episode (approach,
// descent, impact, lying still, recovery).
struct FallEpisode {
    double start_s = 0.0;
    double end_s = 0.0;
};

// amp is relative to the nominal fall impact amplitude; pickup schedules a
// bend-down 1.2-2.0 s AFTER the impact (the wrong causal order on purpose).
struct DropEvent {
    double t_s = 0.0;
    double amp = 1.0;
    bool pickup = false;
};

struct ScenarioScript {
    Scenario scenario = Scenario::empty_bathroom;
    double duration_s = 72.0;
    std::vector<FallEpisode> falls;  // non-overlapping, each 20-30 s long
    std::vector<DropEvent> drops;    // outside fall episodes
    double clock_delay_s = 0.0;      // radar stamp offset at t = 0
    double clock_drift = 0.0;        // dimensionless skew of the radar clock
    double vib_noise = 1.0;          // scale on the vibration noise floor
    double radar_noise = 1.0;        // scale on the stray-point rate
    double water_level = 0.0;        // broadband shower noise, 0..1
    bool water_on = false;
    int subject = 0;                 // drives gait/amplitude signature

    void validate() const;  // ScriptError on any violated bound
};

// Physical knobs, all overridable. Ring parameters echo typical floor-slab
// responses.
struct GeneratorConfig {
    double vib_rate_hz = 200.0;
    double radar_rate_hz = 12.5;

    double ring_freq_lo_hz = 18.0, ring_freq_hi_hz = 30.0;
    double ring_decay_lo_s = 0.2, ring_decay_hi_s = 0.6;
    double fall_amp = 1.0;        // nominal peak floor acceleration of a fall
    double footstep_amp = 0.055;
    double crack_frac = 0.25;     // white-noise burst riding on an impact
    double noise_floor = 0.002;
    double water_noise = 0.012;

    double fall_speed_lo = 1.2, fall_speed_hi = 2.4;    // peak |dr/dt|, m/s
    double descent_lo_s = 0.5, descent_hi_s = 1.0;
    double impact_gap_lo_s = 0.05, impact_gap_hi_s = 0.25;
    double squat_speed_lo = 0.8, squat_speed_hi = 1.5;
    double squat_dur_lo_s = 0.9, squat_dur_hi_s = 1.4;
    double bend_speed_lo = 0.5, bend_speed_hi = 1.0;
    double bend_dur_lo_s = 1.2, bend_dur_hi_s = 1.8;

    int person_pts_lo = 3, person_pts_hi = 6;
    double pt_sigma_r = 0.10, pt_sigma_v = 0.07;
    double intensity_lo = 1.4, intensity_hi = 3.0;
    double intensity_motion_gain = 1.5;
    int clutter_objects = 3;
    // Weak scattered returns per frame. They form the noise floor the
    // adaptive intensity threshold measures itself against; without them a
    // frame that is mostly person points would decimate its own cluster.
    double stray_point_rate = 14.0;  // scaled by script.radar_noise
};

struct LabelSpan {
    double start_s = 0.0;
    double end_s = 0.0;
    std::string cls;  // "fall" or "drop"
};

struct Recording {
    std::string session_id;
    Scenario scenario = Scenario::empty_bathroom;
    int subject = 0;
    bool water_on = false;
    SampleSeries vib;     // 200 Hz, 3 channels
    RadarFrameSet radar;  // stamped on the radar's own (skewed) clock
    std::vector<LabelSpan> labels;
};

// Deterministic: same script + seed is byte-identical. ScriptError if the
// schedule violates the script invariants.
Recording generate_scenario(const ScenarioScript& script, uint64_t rng_seed,
                            const GeneratorConfig& cfg = {});

// Randomized but deterministic default schedule for one session: fall
// episodes, drops/squats per scenario, clock desync, noise levels.
ScenarioScript make_script(Scenario scenario, int subject, uint64_t seed,
                           double duration_s = 72.0);

}  // namespace falldet::synth
