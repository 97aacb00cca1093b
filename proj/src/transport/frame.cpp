#include "dig/transport/frame.hpp"

#include "dig/transport/topic.hpp"

#include <cstring>

namespace dig::transport {

bool frame_has_topic(FrameType t) {
    return t == FrameType::PUBLISH || t == FrameType::SUBSCRIBE;
}

bool frame_has_payload(FrameType t) {
    return t == FrameType::CONNECT || t == FrameType::CONNACK ||
           t == FrameType::PUBLISH || t == FrameType::SUBACK;
}

namespace {

bool valid_type(uint8_t t) {
    return t >= uint8_t(FrameType::CONNECT) && t <= uint8_t(FrameType::DISCONNECT);
}

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(uint8_t(v & 0xff));
    b.push_back(uint8_t(v >> 8));
}

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(uint8_t(v >> (8 * i)));
}

} // namespace

std::vector<uint8_t> encode_frame(const Frame& frame) {
    if (frame_has_topic(frame.type)) {
        if (frame.topic.empty())
            throw ProtocolError("frame requires a non-empty topic");
        if (frame.topic.size() > 0xffff)
            throw ProtocolError("topic too long");
        if (frame.type == FrameType::PUBLISH &&
            !TopicFilter::valid_topic(frame.topic))
            throw ProtocolError("publish topic must not contain wildcards");
        if (frame.type == FrameType::SUBSCRIBE &&
            !TopicFilter::valid_filter(frame.topic))
            throw ProtocolError("malformed subscription filter");
    }
    std::vector<uint8_t> out;
    out.reserve(8 + frame.topic.size() + frame.payload.size());
    out.push_back(kMagic0);
    out.push_back(kMagic1);
    out.push_back(uint8_t(frame.type));
    out.push_back(frame.flags);
    if (frame_has_topic(frame.type)) {
        put_u16(out, uint16_t(frame.topic.size()));
        out.insert(out.end(), frame.topic.begin(), frame.topic.end());
    }
    if (frame_has_payload(frame.type)) {
        put_u32(out, uint32_t(frame.payload.size()));
        out.insert(out.end(), frame.payload.begin(), frame.payload.end());
    }
    if (out.size() > kMaxFrameSize) throw ProtocolError("frame exceeds 64 KiB");
    return out;
}

DecodeResult decode_frame(std::span<const uint8_t> bytes) {
    DecodeResult r;
    auto fail = [&](std::string msg) {
        r.status = DecodeResult::Status::error;
        r.error = std::move(msg);
        return r;
    };
    if (bytes.size() < 4) return r;   // need_more
    if (bytes[0] != kMagic0 || bytes[1] != kMagic1) return fail("bad magic");
    if (!valid_type(bytes[2])) return fail("unknown frame type");
    auto type = FrameType(bytes[2]);
    r.frame.type = type;
    r.frame.flags = bytes[3];
    std::size_t off = 4;

    if (frame_has_topic(type)) {
        if (bytes.size() < off + 2) { r.status = DecodeResult::Status::need_more; return r; }
        uint16_t tlen = uint16_t(bytes[off]) | (uint16_t(bytes[off + 1]) << 8);
        off += 2;
        if (tlen == 0) return fail("empty topic");
        if (off + tlen > kMaxFrameSize) return fail("frame exceeds 64 KiB");
        if (bytes.size() < off + tlen) { r.status = DecodeResult::Status::need_more; return r; }
        r.frame.topic.assign(reinterpret_cast<const char*>(bytes.data() + off), tlen);
        off += tlen;
        if (type == FrameType::PUBLISH && !TopicFilter::valid_topic(r.frame.topic))
            return fail("publish topic contains wildcards");
        if (type == FrameType::SUBSCRIBE && !TopicFilter::valid_filter(r.frame.topic))
            return fail("malformed subscription filter");
    }
    if (frame_has_payload(type)) {
        if (bytes.size() < off + 4) { r.status = DecodeResult::Status::need_more; return r; }
        uint32_t plen = 0;
        for (int i = 3; i >= 0; --i) plen = (plen << 8) | bytes[off + i];
        off += 4;
        if (off + plen > kMaxFrameSize) return fail("declared payload exceeds 64 KiB");
        if (bytes.size() < off + plen) { r.status = DecodeResult::Status::need_more; return r; }
        r.frame.payload.assign(bytes.begin() + off, bytes.begin() + off + plen);
        off += plen;
    }
    r.status = DecodeResult::Status::ok;
    r.consumed = off;
    return r;
}

std::vector<uint8_t> encode_sample(const SamplePayload& s) {
    std::vector<uint8_t> out(16);
    uint64_t bits;
    std::memcpy(&bits, &s.value, 8);
    for (int i = 0; i < 8; ++i) {
        out[i] = uint8_t(s.timestamp_ns >> (8 * i));
        out[8 + i] = uint8_t(bits >> (8 * i));
    }
    return out;
}

SamplePayload decode_sample(std::span<const uint8_t> bytes) {
    if (bytes.size() != 16)
        throw ProtocolError("sample payload must be exactly 16 bytes");
    SamplePayload s;
    uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) {
        s.timestamp_ns = (s.timestamp_ns << 8) | bytes[i];
        bits = (bits << 8) | bytes[8 + i];
    }
    std::memcpy(&s.value, &bits, 8);
    return s;
}

} // namespace dig::transport
