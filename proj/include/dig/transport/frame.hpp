#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dig::transport {

inline constexpr uint8_t kMagic0 = 'D';
inline constexpr uint8_t kMagic1 = 'T';
inline constexpr std::size_t kMaxFrameSize = 64 * 1024;

enum class FrameType : uint8_t {
    CONNECT = 1,
    CONNACK = 2,
    PUBLISH = 3,
    SUBSCRIBE = 4,
    SUBACK = 5,
    PING = 6,
    PONG = 7,
    DISCONNECT = 8,
};

// Layout (little-endian, see PROTOCOL.md):
//   magic(2) type(1) flags(1)
//   [topic: u16 len + bytes]     PUBLISH and SUBSCRIBE only
//   [payload: u32 len + bytes]   CONNECT, CONNACK, PUBLISH, SUBACK only
struct Frame {
    FrameType type = FrameType::PING;
    uint8_t flags = 0;
    std::string topic;
    std::vector<uint8_t> payload;

    bool operator==(const Frame&) const = default;
};

bool frame_has_topic(FrameType t);
bool frame_has_payload(FrameType t);

struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Throws ProtocolError on malformed frames (oversize, wildcard publish
// topic, empty topic where one is required).
std::vector<uint8_t> encode_frame(const Frame& frame);

struct DecodeResult {
    enum class Status { ok, need_more, error };
    Status status = Status::need_more;
    Frame frame;
    std::size_t consumed = 0;   // bytes of exactly one frame when ok
    std::string error;
};

// Consumes at most one frame from the head of `bytes`.
DecodeResult decode_frame(std::span<const uint8_t> bytes);

// Fixed 16-byte telemetry sample: u64 ns timestamp + f64 value, little-endian.
struct SamplePayload {
    uint64_t timestamp_ns = 0;
    double value = 0.0;
};

std::vector<uint8_t> encode_sample(const SamplePayload& s);
SamplePayload decode_sample(std::span<const uint8_t> bytes);

} // namespace dig::transport
