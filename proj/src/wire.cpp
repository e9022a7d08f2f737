#include <algorithm>
#include <bit>
#include <cstring>
#include <type_traits>

#include "bb84/wire.hpp"

namespace bb84::wire {

const char* to_string(AbortReason reason) {
    switch (reason) {
    case AbortReason::Timeout: return "timeout";
    case AbortReason::ParameterMismatch: return "parameter mismatch";
    case AbortReason::QberExceeded: return "qber exceeded";
    case AbortReason::ProtocolViolation: return "protocol violation";
    case AbortReason::ReconciliationFailed: return "reconciliation failed";
    case AbortReason::NoSecureRate: return "no secure rate";
    case AbortReason::TooManyAmbiguous: return "too many ambiguous detections";
    case AbortReason::InsufficientKey: return "insufficient key";
    case AbortReason::TransportFailure: return "transport failure";
    }
    return "unknown";
}

const char* name_of(Tag tag) {
    switch (tag) {
    case Tag::Hello: return "HELLO";
    case Tag::DetectionAnnounce: return "DETECTION_ANNOUNCE";
    case Tag::SiftReply: return "SIFT_REPLY";
    case Tag::QberSample: return "QBER_SAMPLE";
    case Tag::QberResult: return "QBER_RESULT";
    case Tag::CascadeParityReq: return "CASCADE_PARITY_REQ";
    case Tag::CascadeParityResp: return "CASCADE_PARITY_RESP";
    case Tag::ShuffleSeed: return "SHUFFLE_SEED";
    case Tag::VerifyHash: return "VERIFY_HASH";
    case Tag::PaSeed: return "PA_SEED";
    case Tag::Done: return "DONE";
    case Tag::Abort: return "ABORT";
    }
    return "UNKNOWN";
}

namespace {

template <class T>
struct TagFor;
template <> struct TagFor<Hello> { static constexpr Tag value = Tag::Hello; };
template <> struct TagFor<DetectionAnnounce> { static constexpr Tag value = Tag::DetectionAnnounce; };
template <> struct TagFor<SiftReply> { static constexpr Tag value = Tag::SiftReply; };
template <> struct TagFor<QberSample> { static constexpr Tag value = Tag::QberSample; };
template <> struct TagFor<QberResult> { static constexpr Tag value = Tag::QberResult; };
template <> struct TagFor<CascadeParityReq> { static constexpr Tag value = Tag::CascadeParityReq; };
template <> struct TagFor<CascadeParityResp> { static constexpr Tag value = Tag::CascadeParityResp; };
template <> struct TagFor<ShuffleSeed> { static constexpr Tag value = Tag::ShuffleSeed; };
template <> struct TagFor<VerifyHash> { static constexpr Tag value = Tag::VerifyHash; };
template <> struct TagFor<PaSeed> { static constexpr Tag value = Tag::PaSeed; };
template <> struct TagFor<Done> { static constexpr Tag value = Tag::Done; };
template <> struct TagFor<Abort> { static constexpr Tag value = Tag::Abort; };

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) { be(v, 2); }
    void u32(std::uint32_t v) { be(v, 4); }
    void u64(std::uint64_t v) { be(v, 8); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void bits(const Bits& b) {
        if (b.size() > 0xFFFFFFFFULL) throw WireError("bit string too long");
        u32(static_cast<std::uint32_t>(b.size()));
        for (std::uint8_t byte : pack_bits(b)) u8(byte);
    }

    void u32s(const std::vector<std::uint32_t>& v) {
        u32(static_cast<std::uint32_t>(v.size()));
        for (std::uint32_t x : v) u32(x);
    }

    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    void be(std::uint64_t v, int bytes) {
        for (int i = bytes - 1; i >= 0; --i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(be(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(be(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(be(4)); }
    std::uint64_t u64() { return be(8); }
    double f64() { return std::bit_cast<double>(u64()); }

    Bits bits() {
        const std::uint32_t n = u32();
        const std::size_t bytes = (static_cast<std::size_t>(n) + 7) / 8;
        need(bytes);
        try {
            Bits out = unpack_bits(in_.subspan(pos_, bytes), n);
            pos_ += bytes;
            return out;
        } catch (const std::invalid_argument& e) {
            throw WireError(e.what());
        }
    }

    std::vector<std::uint32_t> u32s() {
        const std::uint32_t n = u32();
        need(static_cast<std::size_t>(n) * 4);
        std::vector<std::uint32_t> out(n);
        for (auto& x : out) x = u32();
        return out;
    }

    void finish() const {
        if (pos_ != in_.size()) throw WireError("trailing bytes in payload");
    }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) throw WireError("payload truncated");
    }

    std::uint64_t be(int bytes) {
        need(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v = (v << 8) | in_[pos_++];
        return v;
    }

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

void write_payload(Writer& w, const Hello& m) {
    w.u16(m.version);
    w.u8(static_cast<std::uint8_t>(m.role));
    w.u64(m.session_id);
    w.u64(m.config_digest);
}

void write_payload(Writer& w, const DetectionAnnounce& m) {
    if (m.bases.size() != m.slots.size() || m.ambiguous.size() != m.slots.size())
        throw WireError("DETECTION_ANNOUNCE: field lengths differ");
    w.u32s(m.slots);
    w.bits(m.bases);
    w.bits(m.ambiguous);
}

void write_payload(Writer& w, const SiftReply& m) { w.bits(m.keep); }

void write_payload(Writer& w, const QberSample& m) {
    if (m.bits.size() != m.positions.size()) throw WireError("QBER_SAMPLE: field lengths differ");
    w.u32s(m.positions);
    w.bits(m.bits);
}

void write_payload(Writer& w, const QberResult& m) {
    w.f64(m.qber);
    w.u8(m.abort ? 1 : 0);
}

void write_payload(Writer& w, const CascadeParityReq& m) {
    w.u32(static_cast<std::uint32_t>(m.blocks.size()));
    for (const BlockRange& b : m.blocks) {
        w.u8(b.pass);
        w.u32(b.begin);
        w.u32(b.end);
    }
}

void write_payload(Writer& w, const CascadeParityResp& m) { w.bits(m.parities); }

void write_payload(Writer& w, const ShuffleSeed& m) {
    w.u8(m.pass);
    w.u64(m.seed);
}

void write_payload(Writer& w, const VerifyHash& m) {
    w.u64(m.seed);
    w.bits(m.hash);
}

void write_payload(Writer& w, const PaSeed& m) {
    w.u32(m.length);
    w.u64(m.seed);
}

void write_payload(Writer&, const Done&) {}

void write_payload(Writer& w, const Abort& m) { w.u8(static_cast<std::uint8_t>(m.reason)); }

Message read_payload(Tag tag, Reader& r) {
    switch (tag) {
    case Tag::Hello: {
        Hello m;
        m.version = r.u16();
        const std::uint8_t role = r.u8();
        if (role != 1 && role != 2) throw WireError("HELLO: invalid role");
        m.role = static_cast<Role>(role);
        m.session_id = r.u64();
        m.config_digest = r.u64();
        return m;
    }
    case Tag::DetectionAnnounce: {
        DetectionAnnounce m;
        m.slots = r.u32s();
        m.bases = r.bits();
        m.ambiguous = r.bits();
        if (m.bases.size() != m.slots.size() || m.ambiguous.size() != m.slots.size())
            throw WireError("DETECTION_ANNOUNCE: field lengths differ");
        return m;
    }
    case Tag::SiftReply: return SiftReply{r.bits()};
    case Tag::QberSample: {
        QberSample m;
        m.positions = r.u32s();
        m.bits = r.bits();
        if (m.bits.size() != m.positions.size()) throw WireError("QBER_SAMPLE: field lengths differ");
        return m;
    }
    case Tag::QberResult: {
        QberResult m;
        m.qber = r.f64();
        const std::uint8_t flag = r.u8();
        if (flag > 1) throw WireError("QBER_RESULT: invalid abort flag");
        m.abort = flag == 1;
        return m;
    }
    case Tag::CascadeParityReq: {
        CascadeParityReq m;
        const std::uint32_t n = r.u32();
        m.blocks.reserve(std::min<std::uint32_t>(n, 1U << 20));
        for (std::uint32_t i = 0; i < n; ++i) {
            BlockRange b;
            b.pass = r.u8();
            b.begin = r.u32();
            b.end = r.u32();
            m.blocks.push_back(b);
        }
        return m;
    }
    case Tag::CascadeParityResp: return CascadeParityResp{r.bits()};
    case Tag::ShuffleSeed: {
        ShuffleSeed m;
        m.pass = r.u8();
        m.seed = r.u64();
        return m;
    }
    case Tag::VerifyHash: {
        VerifyHash m;
        m.seed = r.u64();
        m.hash = r.bits();
        return m;
    }
    case Tag::PaSeed: {
        PaSeed m;
        m.length = r.u32();
        m.seed = r.u64();
        return m;
    }
    case Tag::Done: return Done{};
    case Tag::Abort: {
        const std::uint8_t code = r.u8();
        if (code < 1 || code > 9) throw WireError("ABORT: unknown reason code");
        return Abort{static_cast<AbortReason>(code)};
    }
    }
    throw WireError("unknown frame type");
}

bool known_tag(std::uint8_t t) { return (t >= 0x01 && t <= 0x0B) || t == 0x0F; }

}  // namespace

Tag tag_of(const Message& m) {
    return std::visit([](const auto& v) { return TagFor<std::decay_t<decltype(v)>>::value; }, m);
}

std::vector<std::uint8_t> encode_frame(const Message& msg) {
    Writer body;
    std::visit([&](const auto& v) { write_payload(body, v); }, msg);
    std::vector<std::uint8_t> payload = body.take();
    if (payload.size() > kMaxPayload) throw WireError("payload exceeds 16 MiB");

    Writer frame;
    frame.u32(static_cast<std::uint32_t>(payload.size()));
    frame.u8(static_cast<std::uint8_t>(tag_of(msg)));
    std::vector<std::uint8_t> out = frame.take();
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Decoded decode_frame(std::span<const std::uint8_t> buffer) {
    if (buffer.size() < kHeaderSize) return {};
    const std::size_t length = (std::size_t{buffer[0]} << 24) | (std::size_t{buffer[1]} << 16) |
                               (std::size_t{buffer[2]} << 8) | std::size_t{buffer[3]};
    if (length > kMaxPayload) throw WireError("payload exceeds 16 MiB");
    const std::uint8_t tag = buffer[4];
    if (!known_tag(tag)) throw WireError("unknown frame type");
    if (buffer.size() < kHeaderSize + length) return {};

    Reader r(buffer.subspan(kHeaderSize, length));
    Message m = read_payload(static_cast<Tag>(tag), r);
    r.finish();
    return {Decoded::Status::Complete, std::move(m), kHeaderSize + length};
}

} // namespace bb84::wire
