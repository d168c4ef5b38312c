#pragma once

// Binary frames for client updates and global weights, and a one-round TCP
// coordinator / client agent built on them.
//
// Frame:   "FDW1" | type u8 | payload_len u64 LE | payload
// Types:   0x01 update, 0x02 weights, 0x03 ack, 0x7F error (UTF-8 message)
//
// Update payload:
//   num_classes u32 | num_features u32 |
//   per class: rank u32 | U*S as rank*num_features f64, column-major | m as num_features f64
//
// Weights payload:
//   num_features u32 | num_classes u32 | activation u8 | epsilon_clip f64 | lambda f64 |
//   w as num_features*num_classes f64, column-major
//
// All integers and IEEE-754 doubles are little-endian regardless of host.
//
// Exchange: the client sends one update frame; the coordinator answers ack
// (or error, and closes). Once the quorum of accepted updates is reached the
// coordinator solves and sends the same weights frame to every accepted client.

#include <array>
#include <atomic>
#include <bit>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <cerrno>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <unistd.h>

#include "fedsvd/dataset.hpp"
#include "fedsvd/error.hpp"
#include "fedsvd/model.hpp"

namespace fedsvd::wire {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::array<std::uint8_t, 4> kMagic{'F', 'D', 'W', '1'};
inline constexpr std::size_t kFrameHeaderSize = 13;
inline constexpr std::uint64_t kMaxPayload = std::uint64_t{1} << 32;

enum class MsgType : std::uint8_t {
    update = 0x01,
    weights = 0x02,
    ack = 0x03,
    error = 0x7F,
};

inline bool known_type(std::uint8_t t) { return t == 0x01 || t == 0x02 || t == 0x03 || t == 0x7F; }

// Bytes of an update payload for the given per-class ranks.
inline std::size_t update_payload_size(std::size_t num_features, std::span<const std::size_t> ranks) {
    std::size_t total = 8;
    for (auto r : ranks) total += 4 + 8 * num_features * (r + 1);
    return total;
}

inline std::size_t weights_payload_size(std::size_t num_features, std::size_t num_classes) {
    return 25 + 8 * num_features * num_classes;
}

// ---------------------------------------------------------------------------
// Little-endian primitives
// ---------------------------------------------------------------------------

class Writer {
public:
    explicit Writer(std::size_t reserve = 0) { buf_.reserve(reserve); }

    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void raw(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

    Bytes take() && { return std::move(buf_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    Bytes buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data, std::size_t base_offset = 0)
        : data_(data), base_(base_offset) {}

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    std::size_t offset() const noexcept { return base_ + pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n)
            throw ProtocolError(std::string("truncated ") + what + ": need " + std::to_string(n) + " bytes, have " +
                                    std::to_string(remaining()),
                                offset());
    }

    std::uint8_t u8(const char* what) {
        need(1, what);
        return data_[pos_++];
    }
    std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(get(4, what)); }
    std::uint64_t u64(const char* what) { return get(8, what); }
    double f64(const char* what) {
        const std::size_t at = offset();
        const double v = std::bit_cast<double>(get(8, what));
        if (!std::isfinite(v)) throw ProtocolError(std::string("non-finite value in ") + what, at);
        return v;
    }

private:
    std::uint64_t get(int n, const char* what) {
        need(static_cast<std::size_t>(n), what);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{data_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> data_;
    std::size_t base_;
    std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Payloads
// ---------------------------------------------------------------------------

inline Bytes encode_update_payload(const ClientUpdate& u) {
    const auto nf = static_cast<std::size_t>(u.num_features);
    std::vector<std::size_t> ranks;
    for (const auto& o : u.per_output) {
        if (static_cast<std::size_t>(o.m.size()) != nf || static_cast<std::size_t>(o.us.rows()) != nf)
            throw ShapeError("encode_update: output factors disagree with num_features");
        ranks.push_back(static_cast<std::size_t>(o.us.cols()));
    }
    Writer w(update_payload_size(nf, ranks));
    w.u32(static_cast<std::uint32_t>(u.per_output.size()));
    w.u32(static_cast<std::uint32_t>(nf));
    for (const auto& o : u.per_output) {
        w.u32(static_cast<std::uint32_t>(o.us.cols()));
        for (Eigen::Index j = 0; j < o.us.cols(); ++j)
            for (Eigen::Index i = 0; i < o.us.rows(); ++i) w.f64(o.us(i, j));
        for (Eigen::Index i = 0; i < o.m.size(); ++i) w.f64(o.m(i));
    }
    return std::move(w).take();
}

// Every declared count is checked against the bytes actually present before
// anything is allocated.
inline ClientUpdate decode_update_payload(std::span<const std::uint8_t> payload, std::size_t base_offset = 0) {
    Reader r(payload, base_offset);
    const std::uint32_t num_classes = r.u32("num_classes");
    const std::size_t classes_at = r.offset() - 4;
    const std::uint32_t nf = r.u32("num_features");
    if (num_classes == 0) throw ProtocolError("update declares zero classes", classes_at);
    if (nf == 0) throw ProtocolError("update declares zero features", r.offset() - 4);
    if (num_classes > r.remaining() / 4) throw ProtocolError("class count exceeds payload", classes_at);
    if (std::uint64_t{nf} * 8 > r.remaining()) throw ProtocolError("feature count exceeds payload", r.offset() - 4);

    ClientUpdate u;
    u.num_features = nf;
    u.per_output.reserve(num_classes);
    for (std::uint32_t k = 0; k < num_classes; ++k) {
        const std::uint32_t rank = r.u32("rank");
        if (rank > nf) throw ProtocolError("rank " + std::to_string(rank) + " exceeds feature count", r.offset() - 4);
        const std::uint64_t bytes = 8 * std::uint64_t{nf} * (std::uint64_t{rank} + 1);
        r.need(static_cast<std::size_t>(bytes), "class factors");
        OutputFactors o;
        o.us.resize(nf, rank);
        for (std::uint32_t j = 0; j < rank; ++j)
            for (std::uint32_t i = 0; i < nf; ++i) o.us(i, j) = r.f64("U*S");
        o.m.resize(nf);
        for (std::uint32_t i = 0; i < nf; ++i) o.m(i) = r.f64("m");
        u.per_output.push_back(std::move(o));
    }
    if (r.remaining() != 0)
        throw ProtocolError(std::to_string(r.remaining()) + " trailing bytes after update", r.offset());
    return u;
}

inline Bytes encode_weights_payload(const ModelWeights& mw) {
    const auto nf = static_cast<std::size_t>(mw.w.rows());
    const auto c = static_cast<std::size_t>(mw.w.cols());
    Writer w(weights_payload_size(nf, c));
    w.u32(static_cast<std::uint32_t>(nf));
    w.u32(static_cast<std::uint32_t>(c));
    w.u8(static_cast<std::uint8_t>(mw.activation.kind));
    w.f64(mw.activation.epsilon_clip);
    w.f64(mw.lambda_used);
    for (Eigen::Index j = 0; j < mw.w.cols(); ++j)
        for (Eigen::Index i = 0; i < mw.w.rows(); ++i) w.f64(mw.w(i, j));
    return std::move(w).take();
}

inline ModelWeights decode_weights_payload(std::span<const std::uint8_t> payload, std::size_t base_offset = 0) {
    Reader r(payload, base_offset);
    const std::uint32_t nf = r.u32("num_features");
    const std::uint32_t c = r.u32("num_classes");
    const std::size_t kind_at = r.offset();
    const std::uint8_t kind = r.u8("activation");
    if (kind != static_cast<std::uint8_t>(ActivationKind::logistic))
        throw ProtocolError("unknown activation kind " + std::to_string(kind), kind_at);
    ModelWeights mw;
    mw.activation.kind = static_cast<ActivationKind>(kind);
    mw.activation.epsilon_clip = r.f64("epsilon_clip");
    mw.lambda_used = r.f64("lambda");
    const std::uint64_t bytes = 8 * std::uint64_t{nf} * std::uint64_t{c};
    if (bytes != r.remaining())
        throw ProtocolError("weight matrix " + std::to_string(nf) + "x" + std::to_string(c) + " does not match " +
                                std::to_string(r.remaining()) + " remaining bytes",
                            r.offset());
    mw.w.resize(nf, c);
    for (std::uint32_t j = 0; j < c; ++j)
        for (std::uint32_t i = 0; i < nf; ++i) mw.w(i, j) = r.f64("w");
    return mw;
}

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

struct Frame {
    MsgType type = MsgType::ack;
    Bytes payload;
};

inline Bytes encode_frame(MsgType type, std::span<const std::uint8_t> payload) {
    Writer w(kFrameHeaderSize + payload.size());
    w.raw(kMagic);
    w.u8(static_cast<std::uint8_t>(type));
    w.u64(payload.size());
    w.raw(payload);
    return std::move(w).take();
}

struct FrameHeader {
    MsgType type;
    std::uint64_t payload_len;
};

// Validates magic, type and declared length; the payload is not touched.
inline FrameHeader parse_header(std::span<const std::uint8_t> header) {
    Reader r(header);
    r.need(kFrameHeaderSize, "frame header");
    for (std::size_t i = 0; i < kMagic.size(); ++i)
        if (header[i] != kMagic[i]) throw ProtocolError("bad magic", i);
    const std::uint8_t type = header[4];
    if (!known_type(type)) throw ProtocolError("unknown message type " + std::to_string(type), 4);
    Reader len(header.subspan(5, 8), 5);
    const std::uint64_t payload_len = len.u64("payload length");
    if (payload_len > kMaxPayload)
        throw ProtocolError("payload length " + std::to_string(payload_len) + " exceeds limit", 5);
    return {static_cast<MsgType>(type), payload_len};
}

// Decodes exactly one frame occupying the whole buffer.
inline Frame decode_frame(std::span<const std::uint8_t> bytes) {
    const FrameHeader h = parse_header(bytes);
    const std::size_t available = bytes.size() - kFrameHeaderSize;
    if (h.payload_len > available)
        throw ProtocolError("payload length " + std::to_string(h.payload_len) + " exceeds the " +
                                std::to_string(available) + " bytes present",
                            5);
    if (h.payload_len < available)
        throw ProtocolError(std::to_string(available - h.payload_len) + " trailing bytes after frame",
                            kFrameHeaderSize + h.payload_len);
    const auto body = bytes.subspan(kFrameHeaderSize);
    return {h.type, Bytes(body.begin(), body.end())};
}

inline Bytes encode_update(const ClientUpdate& u) { return encode_frame(MsgType::update, encode_update_payload(u)); }

inline ClientUpdate decode_update(std::span<const std::uint8_t> bytes) {
    const Frame f = decode_frame(bytes);
    if (f.type != MsgType::update) throw ProtocolError("expected an update frame", 4);
    return decode_update_payload(f.payload, kFrameHeaderSize);
}

inline Bytes encode_weights(const ModelWeights& w) { return encode_frame(MsgType::weights, encode_weights_payload(w)); }

inline ModelWeights decode_weights(std::span<const std::uint8_t> bytes) {
    const Frame f = decode_frame(bytes);
    if (f.type != MsgType::weights) throw ProtocolError("expected a weights frame", 4);
    return decode_weights_payload(f.payload, kFrameHeaderSize);
}

inline Bytes encode_error(std::string_view message) {
    return encode_frame(MsgType::error, {reinterpret_cast<const std::uint8_t*>(message.data()), message.size()});
}

// ---------------------------------------------------------------------------
// TCP transport
// ---------------------------------------------------------------------------

struct Endpoint {
    std::string host;
    std::string port;
};

inline Endpoint parse_endpoint(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon + 1 == address.size())
        throw ArgumentError("address '" + address + "' is not host:port");
    Endpoint e{address.substr(0, colon), address.substr(colon + 1)};
    if (e.host.size() >= 2 && e.host.front() == '[' && e.host.back() == ']') e.host = e.host.substr(1, e.host.size() - 2);
    for (char ch : e.port)
        if (ch < '0' || ch > '9') throw ArgumentError("address '" + address + "' has a non-numeric port");
    return e;
}

inline std::string errno_text(const std::string& what) { return what + ": " + std::strerror(errno); }

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { close(); }
    Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)), sent_(o.sent_), received_(o.received_) {}
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            close();
            fd_ = std::exchange(o.fd_, -1);
            sent_ = o.sent_;
            received_ = o.received_;
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    int fd() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }
    std::uint64_t bytes_sent() const noexcept { return sent_; }
    std::uint64_t bytes_received() const noexcept { return received_; }

    void close() noexcept {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

    void send_all(std::span<const std::uint8_t> data) {
        std::size_t done = 0;
        while (done < data.size()) {
            const ssize_t n = ::send(fd_, data.data() + done, data.size() - done, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw TransportError(errno_text("send failed"));
            }
            done += static_cast<std::size_t>(n);
        }
        sent_ += done;
    }

    void recv_exact(std::span<std::uint8_t> out) {
        std::size_t done = 0;
        while (done < out.size()) {
            const ssize_t n = ::recv(fd_, out.data() + done, out.size() - done, 0);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw TransportError(errno_text("receive failed"));
            }
            if (n == 0) throw TransportError("connection closed by peer");
            done += static_cast<std::size_t>(n);
        }
        received_ += done;
    }

    // Reads one frame. The header is validated before any payload byte is read.
    Frame read_frame() {
        std::array<std::uint8_t, kFrameHeaderSize> header{};
        recv_exact(header);
        const FrameHeader h = parse_header(header);
        Frame f{h.type, Bytes(static_cast<std::size_t>(h.payload_len))};
        recv_exact(f.payload);
        return f;
    }

    static Socket connect_to(const std::string& address) {
        const Endpoint ep = parse_endpoint(address);
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        if (const int rc = ::getaddrinfo(ep.host.c_str(), ep.port.c_str(), &hints, &res); rc != 0)
            throw TransportError("cannot resolve '" + address + "': " + ::gai_strerror(rc));
        std::string last = "no addresses";
        for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
            Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
            if (!s.valid()) {
                last = errno_text("socket");
                continue;
            }
            if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
                ::freeaddrinfo(res);
                int one = 1;
                ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
                return s;
            }
            last = errno_text("connect to '" + address + "' failed");
        }
        ::freeaddrinfo(res);
        throw TransportError(last);
    }

    static Socket listen_on(const std::string& address, int backlog = 128) {
        const Endpoint ep = parse_endpoint(address);
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        hints.ai_flags = AI_PASSIVE;
        addrinfo* res = nullptr;
        const char* host = ep.host.empty() ? nullptr : ep.host.c_str();
        if (const int rc = ::getaddrinfo(host, ep.port.c_str(), &hints, &res); rc != 0)
            throw TransportError("cannot resolve '" + address + "': " + ::gai_strerror(rc));
        std::string last = "no addresses";
        for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
            Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
            if (!s.valid()) continue;
            int one = 1;
            ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
            if (::bind(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(s.fd(), backlog) == 0) {
                ::freeaddrinfo(res);
                return s;
            }
            last = errno_text("cannot listen on '" + address + "'");
        }
        ::freeaddrinfo(res);
        throw TransportError(last);
    }

    std::uint16_t local_port() const {
        sockaddr_storage ss{};
        socklen_t len = sizeof ss;
        if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&ss), &len) != 0) throw TransportError(errno_text("getsockname"));
        if (ss.ss_family == AF_INET) return ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
        return ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port);
    }

private:
    int fd_ = -1;
    std::uint64_t sent_ = 0;
    std::uint64_t received_ = 0;
};

// ---------------------------------------------------------------------------
// Coordinator
// ---------------------------------------------------------------------------

// Single-round aggregation service. The listener is bound in the constructor,
// so port() is valid before run().
class Coordinator {
public:
    Coordinator(const std::string& listen_address, std::size_t expected_clients, double lambda, ActivationSpec act = {})
        : listener_(Socket::listen_on(listen_address)), expected_(expected_clients), lambda_(lambda), act_(act) {
        if (expected_clients < 1) throw ArgumentError("coordinator: expected clients must be >= 1");
        if (!(lambda >= 0.0)) throw ArgumentError("coordinator: lambda must be >= 0");
    }

    std::uint16_t port() const { return listener_.local_port(); }
    std::size_t updates_accepted() const noexcept { return accepted_.size(); }
    std::size_t errors_sent() const noexcept { return errors_; }
    std::size_t connections_seen() const noexcept { return connections_; }

    // Blocks until `expected_clients` updates have been incorporated, then
    // sends the solved weights to every accepted client and returns them.
    ModelWeights run() {
        std::vector<std::thread> handlers;
        while (!quorum()) {
            pollfd pfd{listener_.fd(), POLLIN, 0};
            const int ready = ::poll(&pfd, 1, 50);
            if (ready < 0) {
                if (errno == EINTR) continue;
                shutdown_handlers(handlers);
                throw TransportError(errno_text("poll"));
            }
            if (ready == 0) continue;
            Socket conn(::accept(listener_.fd(), nullptr, nullptr));
            if (!conn.valid()) continue;
            ++connections_;
            {
                std::lock_guard lock(mutex_);
                reading_.insert(conn.fd());
            }
            handlers.emplace_back([this, c = std::move(conn)]() mutable { handle(std::move(c)); });
        }
        shutdown_handlers(handlers);

        const ModelWeights weights = solve_weights(state_, lambda_, act_);
        const Bytes frame = encode_weights(weights);
        for (auto& client : accepted_) {
            try {
                client.send_all(frame);
            } catch (const TransportError&) {
                // the client went away; the round result stands
            }
            client.close();
        }
        return weights;
    }

private:
    bool quorum() {
        std::lock_guard lock(mutex_);
        return accepted_.size() >= expected_;
    }

    void reject(Socket& conn, const std::string& message) {
        try {
            conn.send_all(encode_error(message));
        } catch (const TransportError&) {
        }
        ++errors_;
    }

    void handle(Socket conn) {
        const int fd = conn.fd();
        auto done_reading = [&] {
            std::lock_guard lock(mutex_);
            reading_.erase(fd);
        };
        try {
            Frame f = conn.read_frame();
            if (f.type != MsgType::update) throw ProtocolError("expected an update frame", 4);
            ClientUpdate update = decode_update_payload(f.payload, kFrameHeaderSize);

            std::lock_guard lock(mutex_);
            reading_.erase(fd);
            if (accepted_.size() >= expected_) {
                reject(conn, "round already complete");
                return;
            }
            try {
                AggregateState next = incorporate(state_, update);
                state_ = std::move(next);
            } catch (const Error& e) {
                reject(conn, e.what());
                return;
            }
            conn.send_all(encode_frame(MsgType::ack, {}));
            accepted_.push_back(std::move(conn));
        } catch (const ProtocolError& e) {
            done_reading();
            std::lock_guard lock(mutex_);
            reject(conn, e.what());
        } catch (const Error&) {
            done_reading();
        }
    }

    // Unblocks handlers still waiting on slow or silent peers, then joins.
    void shutdown_handlers(std::vector<std::thread>& handlers) {
        {
            std::lock_guard lock(mutex_);
            for (int fd : reading_) ::shutdown(fd, SHUT_RDWR);
        }
        for (auto& t : handlers) t.join();
        handlers.clear();
    }

    Socket listener_;
    std::size_t expected_;
    double lambda_;
    ActivationSpec act_;

    std::mutex mutex_;
    AggregateState state_;
    std::vector<Socket> accepted_;
    std::set<int> reading_;
    std::size_t errors_ = 0;
    std::size_t connections_ = 0;
};

inline ModelWeights serve_coordinator(const std::string& listen_address, std::size_t expected_clients, double lambda,
                                      ActivationSpec act = {}) {
    Coordinator c(listen_address, expected_clients, lambda, act);
    return c.run();
}

// ---------------------------------------------------------------------------
// Client agent
// ---------------------------------------------------------------------------

struct AgentOptions {
    double target_low = 0.05;
    double target_high = 0.95;
};

struct TransferStats {
    std::uint64_t bytes_sent = 0;
    std::uint64_t bytes_received = 0;
    std::vector<std::size_t> ranks;
};

// Fits the shard locally, sends the update and blocks for the global weights.
inline ModelWeights run_client_agent(const std::string& connect_address, const Dataset& shard,
                                     const AgentOptions& opts = {}, TransferStats* stats = nullptr) {
    if (shard.num_samples() == 0) throw ArgumentError("client agent: shard has no samples");
    check_consistent(shard);
    const ActivationSpec act = activation_for_encoding(opts.target_low, opts.target_high);
    const Matrix targets = encode_targets(shard.labels, shard.num_classes(), opts.target_low, opts.target_high);
    const ClientUpdate update = fit_client(with_bias(shard.features), targets, act);

    Socket s = Socket::connect_to(connect_address);
    s.send_all(encode_update(update));

    auto expect = [&](MsgType want) {
        Frame f = s.read_frame();
        if (f.type == MsgType::error)
            throw RemoteError("coordinator rejected the update: " + std::string(f.payload.begin(), f.payload.end()));
        if (f.type != want) throw ProtocolError("unexpected message type " + std::to_string(int(f.type)), 4);
        return f;
    };
    expect(MsgType::ack);
    const Frame wf = expect(MsgType::weights);
    ModelWeights w = decode_weights_payload(wf.payload, kFrameHeaderSize);

    if (stats) {
        stats->bytes_sent = s.bytes_sent();
        stats->bytes_received = s.bytes_received();
        stats->ranks.clear();
        for (const auto& o : update.per_output) stats->ranks.push_back(static_cast<std::size_t>(o.us.cols()));
    }
    return w;
}

}  // namespace fedsvd::wire
