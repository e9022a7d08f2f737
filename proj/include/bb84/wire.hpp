#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "bb84/bits.hpp"
#include "bb84/reconcile.hpp"

namespace bb84::wire {

inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::size_t kMaxPayload = 16U * 1024U * 1024U;
inline constexpr std::size_t kHeaderSize = 5;

/// One-byte frame type tags.
enum class Tag : std::uint8_t {
    Hello = 0x01,
    DetectionAnnounce = 0x02,
    SiftReply = 0x03,
    QberSample = 0x04,
    QberResult = 0x05,
    CascadeParityReq = 0x06,
    CascadeParityResp = 0x07,
    ShuffleSeed = 0x08,
    VerifyHash = 0x09,
    PaSeed = 0x0A,
    Done = 0x0B,
    Abort = 0x0F,
};

enum class Role : std::uint8_t { Alice = 1, Bob = 2 };

enum class AbortReason : std::uint8_t {
    Timeout = 1,
    ParameterMismatch = 2,
    QberExceeded = 3,
    ProtocolViolation = 4,
    ReconciliationFailed = 5,
    NoSecureRate = 6,
    TooManyAmbiguous = 7,
    InsufficientKey = 8,
    TransportFailure = 9,
};

const char* to_string(AbortReason reason);

struct Hello {
    std::uint16_t version = kProtocolVersion;
    Role role = Role::Alice;
    std::uint64_t session_id = 0;
    std::uint64_t config_digest = 0;
    friend bool operator==(const Hello&, const Hello&) = default;
};

/// Per detected slot: index and measurement basis, plus an ambiguity flag
/// for slots where more than one detector fired. Detector identities are
/// never part of the message.
struct DetectionAnnounce {
    std::vector<std::uint32_t> slots;
    Bits bases;
    Bits ambiguous;
    friend bool operator==(const DetectionAnnounce&, const DetectionAnnounce&) = default;
};

/// keep[i] = 1 when announced entry i is retained in the sifted key.
struct SiftReply {
    Bits keep;
    friend bool operator==(const SiftReply&, const SiftReply&) = default;
};

struct QberSample {
    std::vector<std::uint32_t> positions;
    Bits bits;
    friend bool operator==(const QberSample&, const QberSample&) = default;
};

struct QberResult {
    double qber = 0.0;
    bool abort = false;
    friend bool operator==(const QberResult&, const QberResult&) = default;
};

struct CascadeParityReq {
    std::vector<BlockRange> blocks;
    friend bool operator==(const CascadeParityReq&, const CascadeParityReq&) = default;
};

struct CascadeParityResp {
    Bits parities;
    friend bool operator==(const CascadeParityResp&, const CascadeParityResp&) = default;
};

struct ShuffleSeed {
    std::uint8_t pass = 0;
    std::uint64_t seed = 0;
    friend bool operator==(const ShuffleSeed&, const ShuffleSeed&) = default;
};

struct VerifyHash {
    std::uint64_t seed = 0;
    Bits hash;
    friend bool operator==(const VerifyHash&, const VerifyHash&) = default;
};

struct PaSeed {
    std::uint32_t length = 0;
    std::uint64_t seed = 0;
    friend bool operator==(const PaSeed&, const PaSeed&) = default;
};

struct Done {
    friend bool operator==(const Done&, const Done&) = default;
};

struct Abort {
    AbortReason reason = AbortReason::ProtocolViolation;
    friend bool operator==(const Abort&, const Abort&) = default;
};

using Message = std::variant<Hello, DetectionAnnounce, SiftReply, QberSample, QberResult, CascadeParityReq,
                             CascadeParityResp, ShuffleSeed, VerifyHash, PaSeed, Done, Abort>;

Tag tag_of(const Message& m);
const char* name_of(Tag tag);

/// Malformed frame or payload; also raised for oversize messages.
class WireError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Canonical frame: 32-bit big-endian payload length, 1-byte tag, payload.
std::vector<std::uint8_t> encode_frame(const Message& msg);

struct Decoded {
    enum class Status { Complete, Incomplete } status = Status::Incomplete;
    std::optional<Message> message;
    /// Bytes consumed from the front of the buffer (0 when incomplete).
    std::size_t consumed = 0;
};

/// Decodes the first frame of `buffer`. A partial frame yields Incomplete
/// and consumes nothing; unknown tags or malformed payloads throw WireError.
Decoded decode_frame(std::span<const std::uint8_t> buffer);

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TimeoutError : public TransportError {
public:
    using TransportError::TransportError;
};

class DisconnectedError : public TransportError {
public:
    using TransportError::TransportError;
};

/// Ordered, reliable, exactly-once message pipe for one session.
class Channel {
public:
    using Clock = std::chrono::steady_clock;

    virtual ~Channel() = default;
    virtual void send(const Message& msg) = 0;
    /// Throws TimeoutError or DisconnectedError.
    virtual Message receive(std::chrono::milliseconds timeout) = 0;
    virtual void close() = 0;
};

/// Two connected in-memory endpoints. Messages cross as encoded frames so
/// the codec is exercised exactly as over a socket.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_memory_pipe();

/// Frame-level log of everything sent and received through a channel.
struct TranscriptEntry {
    bool outgoing = false;
    std::vector<std::uint8_t> frame;
};

/// Decorator that records every frame passing through `inner`.
class RecordingChannel final : public Channel {
public:
    explicit RecordingChannel(Channel& inner) : inner_(inner) {}
    void send(const Message& msg) override;
    Message receive(std::chrono::milliseconds timeout) override;
    void close() override { inner_.close(); }
    const std::vector<TranscriptEntry>& entries() const { return entries_; }
    /// Concatenation of all frames in order, each prefixed with '>' or '<'.
    std::vector<std::uint8_t> bytes() const;

private:
    Channel& inner_;
    std::vector<TranscriptEntry> entries_;
};

/// Stream-socket endpoint (TCP).
class TcpChannel final : public Channel {
public:
    explicit TcpChannel(int fd);
    ~TcpChannel() override;
    TcpChannel(const TcpChannel&) = delete;
    TcpChannel& operator=(const TcpChannel&) = delete;

    void send(const Message& msg) override;
    Message receive(std::chrono::milliseconds timeout) override;
    void close() override;

private:
    int fd_;
    std::vector<std::uint8_t> buffer_;
};

class TcpListener {
public:
    /// Binds host:port (port 0 picks an ephemeral port).
    TcpListener(const std::string& host, std::uint16_t port);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    std::uint16_t port() const { return port_; }
    /// Waits for one connection; throws TimeoutError.
    std::unique_ptr<TcpChannel> accept(std::chrono::milliseconds timeout);

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

/// Connects to host:port, retrying until `timeout` elapses.
std::unique_ptr<TcpChannel> tcp_connect(const std::string& host, std::uint16_t port,
                                        std::chrono::milliseconds timeout);

/// Splits "host:port".
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint);

} // namespace bb84::wire
