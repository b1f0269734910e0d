#pragma once

// Binary frame protocol between sensor nodes and the gateway. One frame
// carries one buffered 2.56 s window as little-endian float32 samples.
//
// Layout (all little-endian):
//   offset  0  magic      "FD" (2 bytes)
//   offset  2  version    u8, currently 1
//   offset  3  node_type  u8, 1 = vibration, 2 = radar
//   offset  4  node_id    u16
//   offset  6  seq        u32
//   offset 10  t0_us      u64, window start on the node clock
//   offset 18  n_samples  u16
//   offset 20  n_channels u8
//   offset 21  payload    n_samples * n_channels f32, sample-major
//   tail       crc32      u32 over every preceding byte
//
// Frames are self-delimiting: the header alone determines the total size, so
// a reader positioned at a frame boundary can walk a whole stream.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace falldet::wire {

inline constexpr std::size_t kHeaderSize = 21;
inline constexpr std::size_t kCrcSize = 4;
inline constexpr uint8_t kVersion = 1;

enum class NodeType : uint8_t { vibration = 1, radar = 2 };

// Channel count each node type must declare.
uint8_t channels_for(NodeType t);  // 3 for vibration, 5 for radar

struct Frame {
    NodeType node_type = NodeType::vibration;
    uint16_t node_id = 0;
    uint32_t seq = 0;
    uint64_t t0_us = 0;
    uint16_t n_samples = 0;
    uint8_t n_channels = 0;
    std::vector<float> payload;  // n_samples * n_channels values, sample-major

    bool operator==(const Frame& o) const;
};

// CRC-32 (reflected, polynomial 0xEDB88320, init/final 0xFFFFFFFF).
// crc32("123456789") == 0xCBF43926.
uint32_t crc32(const uint8_t* data, std::size_t len);

// Serializes a frame. SpecError when the frame violates its invariants
// (payload size mismatch, channel count wrong for the node type).
std::vector<uint8_t> encode_frame(const Frame& f);

// Total encoded size implied by a raw header. ProtocolError on bad magic or
// version; requires len >= kHeaderSize.
std::size_t frame_size(const uint8_t* header, std::size_t len);

// Parses one complete frame. ProtocolError on bad magic, version, length or
// channel-count mismatch; CorruptFrame when the CRC does not validate.
Frame decode_frame(const uint8_t* data, std::size_t len);

}  // namespace falldet::wire
