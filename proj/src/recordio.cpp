#include "falldet/recordio.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace falldet::recordio {

namespace {

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(p.string() + ": " + e.what());
    }
    return j;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!out.good()) throw IoError("write failed: " + p.string());
}

int subject_of(const std::string& session_id) {
    // Convention: session ids start with "s<nn>_".
    if (session_id.size() < 3 || session_id[0] != 's') return 0;
    size_t i = 1;
    int v = 0;
    while (i < session_id.size() && session_id[i] >= '0' && session_id[i] <= '9') {
        v = v * 10 + (session_id[i] - '0');
        ++i;
    }
    return (i > 1 && i < session_id.size() && session_id[i] == '_') ? v : 0;
}

}  // namespace

void write_recording(const std::string& dir, const synth::Recording& rec, double vib_rate_hz,
                     double radar_rate_hz) {
    fs::path root(dir);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw IoError("cannot create " + dir);

    json meta = {
        {"schema_version", 1},
        {"session_id", rec.session_id},
        {"scenario", synth::scenario_name(rec.scenario)},
        {"fs_vibration_hz", rec.vib.rate_hz > 0 ? rec.vib.rate_hz : vib_rate_hz},
        {"radar_frame_hz", radar_rate_hz},
        {"water_on", rec.water_on},
    };
    write_text(root / "meta.json", meta.dump(2) + "\n");

    {
        std::ofstream out(root / "vibration.bin", std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write vibration.bin in " + dir);
        std::vector<float> buf(rec.vib.data.size());
        for (size_t i = 0; i < buf.size(); ++i) buf[i] = float(rec.vib.data[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  std::streamsize(buf.size() * sizeof(float)));
        if (!out.good()) throw IoError("write failed: vibration.bin in " + dir);
    }

    {
        std::string lines;
        for (const auto& fr : rec.radar.frames) {
            json pts = json::array();
            for (const auto& p : fr.points)
                pts.push_back({p.range_m, p.radial_vel_mps, p.intensity});
            json line = {{"t", fr.t_s}, {"points", std::move(pts)}};
            lines += line.dump();
            lines += '\n';
        }
        write_text(root / "radar.jsonl", lines);
    }

    {
        json labels = json::array();
        for (const auto& l : rec.labels)
            labels.push_back({{"start_s", l.start_s}, {"end_s", l.end_s}, {"class", l.cls}});
        write_text(root / "labels.json", labels.dump(2) + "\n");
    }
}

synth::Recording read_recording(const std::string& dir) {
    fs::path root(dir);
    json meta = read_json(root / "meta.json");
    if (!meta.contains("schema_version") || !meta["schema_version"].is_number_integer() ||
        meta["schema_version"].get<int>() != 1)
        throw IoError("unknown schema_version in " + dir);

    synth::Recording rec;
    try {
        rec.session_id = meta.at("session_id").get<std::string>();
        rec.scenario = synth::parse_scenario(meta.at("scenario").get<std::string>());
        rec.water_on = meta.at("water_on").get<bool>();
        rec.vib = SampleSeries(meta.at("fs_vibration_hz").get<double>(), 0.0, 3);
    } catch (const ScriptError& e) {
        throw IoError(dir + ": " + e.what());
    } catch (const json::exception& e) {
        throw IoError(dir + "/meta.json: " + e.what());
    }
    rec.subject = subject_of(rec.session_id);

    {
        std::ifstream in(root / "vibration.bin", std::ios::binary);
        if (!in) throw IoError("missing vibration.bin in " + dir);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        if (bytes.size() % (3 * sizeof(float)) != 0)
            throw IoError("vibration.bin is not whole xyz frames in " + dir);
        size_t vals = bytes.size() / sizeof(float);
        rec.vib.data.resize(vals);
        const float* f = reinterpret_cast<const float*>(bytes.data());
        for (size_t i = 0; i < vals; ++i) rec.vib.data[i] = double(f[i]);
        rec.vib.validate();
    }

    {
        std::ifstream in(root / "radar.jsonl");
        if (!in) throw IoError("missing radar.jsonl in " + dir);
        std::string line;
        int64_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            json j;
            try {
                j = json::parse(line);
                RadarFrame fr;
                fr.t_s = j.at("t").get<double>();
                for (const auto& p : j.at("points")) {
                    if (!p.is_array() || p.size() != 3)
                        throw IoError("bad radar point in " + dir);
                    fr.points.push_back({p[0].get<double>(), p[1].get<double>(),
                                         p[2].get<double>()});
                }
                rec.radar.frames.push_back(std::move(fr));
            } catch (const json::exception& e) {
                throw IoError(dir + "/radar.jsonl:" + std::to_string(lineno) + ": " + e.what());
            }
        }
        rec.radar.validate();
    }

    {
        json labels = read_json(root / "labels.json");
        if (!labels.is_array()) throw IoError("labels.json must be a list in " + dir);
        try {
            for (const auto& l : labels)
                rec.labels.push_back({l.at("start_s").get<double>(), l.at("end_s").get<double>(),
                                      l.at("class").get<std::string>()});
        } catch (const json::exception& e) {
            throw IoError(dir + "/labels.json: " + e.what());
        }
    }
    return rec;
}

std::vector<std::string> list_recordings(const std::string& root) {
    std::vector<std::string> out;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(root, ec)) {
        if (entry.is_directory() && fs::exists(entry.path() / "meta.json"))
            out.push_back(entry.path().string());
    }
    if (ec) throw IoError("cannot list " + root);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace falldet::recordio
