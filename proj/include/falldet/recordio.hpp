#pragma once

// On-disk recording container: one directory per session holding meta.json,
// vibration.bin (little-endian float32, x/y/z interleaved), radar.jsonl (one
// frame object per line) and labels.json. Readers reject any schema_version
// they do not know.

#include <string>
#include <vector>

#include "falldet/synth.hpp"

namespace falldet::recordio {

void write_recording(const std::string& dir, const synth::Recording& rec,
                     double vib_rate_hz = 200.0, double radar_rate_hz = 12.5);

synth::Recording read_recording(const std::string& dir);  // IoError on any defect

// Immediate subdirectories of root that contain a meta.json, sorted by name.
std::vector<std::string> list_recordings(const std::string& root);

}  // namespace falldet::recordio
