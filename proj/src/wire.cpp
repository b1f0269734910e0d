#include "falldet/wire.hpp"

#include <array>
#include <cstring>

#include "falldet/common.hpp"

namespace falldet::wire {

namespace {

template <typename T>
void put_le(std::vector<uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(uint8_t(uint64_t(v) >> (8 * i)));
}

template <typename T>
T get_le(const uint8_t* p) {
    uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= uint64_t(p[i]) << (8 * i);
    return T(v);
}

const std::array<uint32_t, 256>& crc_table() {
    static const std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t n = 0; n < 256; ++n) {
            uint32_t c = n;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[n] = c;
        }
        return t;
    }();
    return table;
}

}  // namespace

uint8_t channels_for(NodeType t) {
    switch (t) {
        case NodeType::vibration: return 3;
        case NodeType::radar: return 5;
    }
    throw ProtocolError("unknown node type");
}

bool Frame::operator==(const Frame& o) const {
    return node_type == o.node_type && node_id == o.node_id && seq == o.seq &&
           t0_us == o.t0_us && n_samples == o.n_samples && n_channels == o.n_channels &&
           payload == o.payload;
}

uint32_t crc32(const uint8_t* data, std::size_t len) {
    const auto& t = crc_table();
    uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) c = t[(c ^ data[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

std::vector<uint8_t> encode_frame(const Frame& f) {
    if (f.node_type != NodeType::vibration && f.node_type != NodeType::radar)
        throw SpecError("frame node_type out of range");
    if (f.n_channels != channels_for(f.node_type))
        throw SpecError("frame channel count does not match node type");
    if (f.payload.size() != std::size_t(f.n_samples) * f.n_channels)
        throw SpecError("frame payload length does not match declared sizes");

    std::vector<uint8_t> out;
    out.reserve(kHeaderSize + 4 * f.payload.size() + kCrcSize);
    out.push_back('F');
    out.push_back('D');
    out.push_back(kVersion);
    out.push_back(uint8_t(f.node_type));
    put_le<uint16_t>(out, f.node_id);
    put_le<uint32_t>(out, f.seq);
    put_le<uint64_t>(out, f.t0_us);
    put_le<uint16_t>(out, f.n_samples);
    out.push_back(f.n_channels);
    for (float v : f.payload) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_le<uint32_t>(out, bits);
    }
    put_le<uint32_t>(out, crc32(out.data(), out.size()));
    return out;
}

std::size_t frame_size(const uint8_t* header, std::size_t len) {
    if (len < kHeaderSize) throw ProtocolError("frame header truncated");
    if (header[0] != 'F' || header[1] != 'D') throw ProtocolError("bad frame magic");
    if (header[2] != kVersion) throw ProtocolError("unsupported frame version");
    const std::size_t n = get_le<uint16_t>(header + 18);
    const std::size_t c = header[20];
    return kHeaderSize + 4 * n * c + kCrcSize;
}

Frame decode_frame(const uint8_t* data, std::size_t len) {
    const std::size_t want = frame_size(data, len);
    if (len != want) throw ProtocolError("frame length does not match declared sizes");

    const uint32_t stored = get_le<uint32_t>(data + len - kCrcSize);
    if (crc32(data, len - kCrcSize) != stored) throw CorruptFrame("frame CRC mismatch");

    Frame f;
    const uint8_t ty = data[3];
    if (ty != uint8_t(NodeType::vibration) && ty != uint8_t(NodeType::radar))
        throw ProtocolError("unknown node type");
    f.node_type = NodeType(ty);
    f.node_id = get_le<uint16_t>(data + 4);
    f.seq = get_le<uint32_t>(data + 6);
    f.t0_us = get_le<uint64_t>(data + 10);
    f.n_samples = get_le<uint16_t>(data + 18);
    f.n_channels = data[20];
    if (f.n_channels != channels_for(f.node_type))
        throw ProtocolError("frame channel count does not match node type");
    f.payload.resize(std::size_t(f.n_samples) * f.n_channels);
    const uint8_t* p = data + kHeaderSize;
    for (auto& v : f.payload) {
        uint32_t bits = get_le<uint32_t>(p);
        std::memcpy(&v, &bits, 4);
        p += 4;
    }
    return f;
}

}  // namespace falldet::wire
