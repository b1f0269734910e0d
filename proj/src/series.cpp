#include "falldet/series.hpp"

#include <cmath>

namespace falldet {

void SampleSeries::validate() const {
    if (!(rate_hz > 0.0) || !std::isfinite(rate_hz))
        throw DegenerateInput("SampleSeries: rate must be positive and finite");
    if (channels < 1) throw DegenerateInput("SampleSeries: channels must be >= 1");
    if (data.size() % size_t(channels) != 0)
        throw ShapeMismatch("SampleSeries: data is not a whole number of frames");
    if (!std::isfinite(t0_s)) throw DegenerateInput("SampleSeries: t0 must be finite");
    for (double v : data)
        if (!std::isfinite(v)) throw DegenerateInput("SampleSeries: non-finite sample");
}

void Envelope::validate() const {
    if (!(rate_hz > 0.0) || !std::isfinite(rate_hz))
        throw DegenerateInput("Envelope: rate must be positive and finite");
    for (double v : values)
        if (!std::isfinite(v) || v < 0.0)
            throw DegenerateInput("Envelope: values must be finite and nonnegative");
}

void RadarFrameSet::validate() const {
    for (size_t i = 0; i < frames.size(); ++i) {
        if (!std::isfinite(frames[i].t_s))
            throw DegenerateInput("RadarFrameSet: non-finite timestamp");
        if (i > 0 && !(frames[i].t_s > frames[i - 1].t_s))
            throw DegenerateInput("RadarFrameSet: timestamps must be strictly increasing");
        for (const auto& p : frames[i].points) {
            if (!std::isfinite(p.range_m) || !std::isfinite(p.radial_vel_mps) ||
                !std::isfinite(p.intensity))
                throw DegenerateInput("RadarFrameSet: non-finite point");
            if (p.range_m < 0.0) throw DegenerateInput("RadarFrameSet: negative range");
            if (p.intensity < 0.0) throw DegenerateInput("RadarFrameSet: negative intensity");
        }
    }
}

}  // namespace falldet
