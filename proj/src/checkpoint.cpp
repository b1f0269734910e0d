#include "falldet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

namespace falldet::ckpt {

namespace {

constexpr char kMagic[4] = {'F', 'M', 'D', 'L'};
constexpr uint16_t kVersion = 1;

void put_bytes(std::string& out, const void* p, size_t n) {
    out.append(static_cast<const char*>(p), n);
}
void put_u16(std::string& out, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>(v >> 8)};
    put_bytes(out, b, 2);
}
void put_u32(std::string& out, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(out, b, 4);
}
void put_f64(std::string& out, double v) {
    static_assert(sizeof(double) == 8);
    put_bytes(out, &v, 8);  // IEEE-754 little-endian host
}

struct Reader {
    const unsigned char* p;
    size_t n;
    size_t at = 0;

    void need(size_t k) const {
        if (at + k > n) throw IoError("checkpoint truncated");
    }
    void raw(void* dst, size_t k) {
        need(k);
        std::memcpy(dst, p + at, k);
        at += k;
    }
    uint16_t u16() {
        need(2);
        uint16_t v = uint16_t(p[at]) | (uint16_t(p[at + 1]) << 8);
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
    double f64() {
        double v;
        raw(&v, 8);
        return v;
    }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!in.good() && !in.eof()) throw IoError("read failed: " + path);
    return bytes;
}

}  // namespace

const Blob* find(const BlobMap& m, const std::string& name) {
    for (const auto& [k, v] : m)
        if (k == name) return &v;
    return nullptr;
}

void save(const std::string& path, const BlobMap& blobs) {
    std::string out;
    put_bytes(out, kMagic, 4);
    put_u16(out, kVersion);
    if (blobs.size() > std::numeric_limits<uint32_t>::max())
        throw IoError("too many buffers");
    put_u32(out, uint32_t(blobs.size()));
    for (const auto& [name, b] : blobs) {
        if (name.empty() || name.size() > 0xffff) throw IoError("bad buffer name");
        if (b.rows < 0 || b.cols < 0 ||
            b.data.size() != size_t(b.rows) * size_t(b.cols))
            throw IoError("buffer shape mismatch: " + name);
        put_u16(out, uint16_t(name.size()));
        put_bytes(out, name.data(), name.size());
        put_u32(out, uint32_t(b.rows));
        put_u32(out, uint32_t(b.cols));
        for (double v : b.data) put_f64(out, v);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f.write(out.data(), std::streamsize(out.size()));
    f.flush();
    if (!f.good()) throw IoError("write failed: " + path);
}

BlobMap load(const std::string& path) {
    std::string bytes = read_file(path);
    Reader r{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()};
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw IoError("not a model checkpoint: " + path);
    uint16_t ver = r.u16();
    if (ver != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(ver));
    uint32_t count = r.u32();
    BlobMap out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t len = r.u16();
        if (len == 0) throw IoError("empty buffer name");
        std::string name(len, '\0');
        r.raw(name.data(), len);
        Blob b;
        uint32_t rows = r.u32(), cols = r.u32();
        uint64_t total = uint64_t(rows) * uint64_t(cols);
        if (total > (uint64_t(1) << 28)) throw IoError("buffer too large: " + name);
        b.rows = int(rows);
        b.cols = int(cols);
        b.data.resize(size_t(total));
        for (auto& v : b.data) v = r.f64();
        out.emplace_back(std::move(name), std::move(b));
    }
    if (r.at != r.n) throw IoError("trailing bytes in checkpoint");
    return out;
}

// The descriptor is a flat numeric row; position is meaning, slot 0 is a
// layout version so the format can grow.
Blob encode_arch(const nn::ModelConfig& cfg) {
    Blob b;
    b.rows = 1;
    const auto& t = cfg.toggles;
    b.data = {
        1.0,
        double(cfg.channels),
        double(cfg.radar_in),
        double(cfg.vib_in),
        double(cfg.d_state),
        double(cfg.moe_experts),
        double(cfg.moe_radius),
        double(cfg.cross_radius),
        double(cfg.mlb_rank),
        double(cfg.mlb_gates),
        double(cfg.reweight_rank),
        t.lsk ? 1.0 : 0.0,
        t.temporal_mixer ? 1.0 : 0.0,
        t.stream_moe ? 1.0 : 0.0,
        t.reweight ? 1.0 : 0.0,
        t.cross_condition ? 1.0 : 0.0,
        t.mlb ? 1.0 : 0.0,
        t.fusion_moe ? 1.0 : 0.0,
        double(int(t.modality)),
        double(int(t.fusion)),
    };
    b.cols = int(b.data.size());
    return b;
}

nn::ModelConfig decode_arch(const Blob& b) {
    if (b.data.size() < 20 || b.data[0] != 1.0) throw IoError("bad architecture descriptor");
    nn::ModelConfig cfg;
    auto geti = [&](size_t i) { return int(b.data[i]); };
    cfg.channels = geti(1);
    cfg.radar_in = geti(2);
    cfg.vib_in = geti(3);
    cfg.d_state = geti(4);
    cfg.moe_experts = geti(5);
    cfg.moe_radius = geti(6);
    cfg.cross_radius = geti(7);
    cfg.mlb_rank = geti(8);
    cfg.mlb_gates = geti(9);
    cfg.reweight_rank = geti(10);
    auto& t = cfg.toggles;
    t.lsk = b.data[11] != 0.0;
    t.temporal_mixer = b.data[12] != 0.0;
    t.stream_moe = b.data[13] != 0.0;
    t.reweight = b.data[14] != 0.0;
    t.cross_condition = b.data[15] != 0.0;
    t.mlb = b.data[16] != 0.0;
    t.fusion_moe = b.data[17] != 0.0;
    t.modality = nn::Modality(geti(18));
    t.fusion = nn::FusionMode(geti(19));
    cfg.toggles.validate();
    return cfg;
}

void save_model(const std::string& path, const nn::FallModel& model, uint64_t seed,
                const BlobMap& extra) {
    BlobMap blobs;
    blobs.emplace_back("meta.arch", encode_arch(model.cfg));
    Blob sb;
    sb.rows = 1;
    sb.cols = 2;
    // Split so the seed survives the f64 mantissa (52 bits < 64).
    sb.data = {double(uint32_t(seed & 0xffffffffu)), double(uint32_t(seed >> 32))};
    blobs.emplace_back("meta.seed", std::move(sb));
    for (const auto& [name, t] : model.params.items) {
        Blob b;
        b.rows = t.rows();
        b.cols = t.cols();
        auto v = t.value();
        b.data.assign(v.begin(), v.end());
        blobs.emplace_back("param." + name, std::move(b));
    }
    for (const auto& kv : extra) blobs.push_back(kv);
    save(path, blobs);
}

BlobMap load_model(const std::string& path, nn::FallModel& model) {
    BlobMap blobs = load(path);
    const Blob* arch = find(blobs, "meta.arch");
    const Blob* seed = find(blobs, "meta.seed");
    if (!arch || !seed || seed->data.size() != 2) throw IoError("checkpoint missing metadata");
    model.cfg = decode_arch(*arch);
    uint64_t s = uint64_t(uint32_t(seed->data[0])) | (uint64_t(uint32_t(seed->data[1])) << 32);
    model.build(s);
    size_t used = 0;
    for (auto& [name, t] : model.params.items) {
        const Blob* b = find(blobs, "param." + name);
        if (!b) throw IoError("checkpoint missing parameter " + name);
        if (b->rows != t.rows() || b->cols != t.cols())
            throw IoError("parameter shape changed: " + name);
        auto dst = t.value_mut();
        std::copy(b->data.begin(), b->data.end(), dst.begin());
        ++used;
    }
    BlobMap rest;
    for (auto& [name, b] : blobs) {
        if (name == "meta.arch" || name == "meta.seed") continue;
        if (name.rfind("param.", 0) == 0) {
            if (!model.params.find(name.substr(6))) throw IoError("unknown parameter " + name);
            continue;
        }
        rest.emplace_back(name, std::move(b));
    }
    (void)used;
    return rest;
}

}  // namespace falldet::ckpt
