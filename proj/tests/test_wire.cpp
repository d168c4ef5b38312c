#include <chrono>
#include <cstring>
#include <future>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "fedsvd/simulator.hpp"
#include "fedsvd/wire.hpp"
#include "support.hpp"

using namespace fedsvd;
using namespace fedsvd::wire;
using fedsvd::testing::random_dataset;
using fedsvd::testing::random_matrix;
using fedsvd::testing::rel_inf;

namespace {

ClientUpdate tiny_update() {
    ClientUpdate u;
    u.num_features = 2;
    OutputFactors o;
    o.us.resize(2, 1);
    o.us << 1.0, 2.0;
    o.m.resize(2);
    o.m << 0.5, -1.0;
    u.per_output.push_back(o);
    return u;
}

ClientUpdate random_update(std::mt19937_64& rng, Eigen::Index nf, std::size_t classes) {
    ClientUpdate u;
    u.num_features = nf;
    std::uniform_int_distribution<Eigen::Index> rank(0, nf);
    for (std::size_t k = 0; k < classes; ++k) u.per_output.push_back({random_matrix(rng, nf, rank(rng)), random_matrix(rng, nf, 1)});
    return u;
}

void expect_bit_equal(const ClientUpdate& a, const ClientUpdate& b) {
    ASSERT_EQ(a.num_features, b.num_features);
    ASSERT_EQ(a.per_output.size(), b.per_output.size());
    for (std::size_t k = 0; k < a.per_output.size(); ++k) {
        const auto& x = a.per_output[k];
        const auto& y = b.per_output[k];
        ASSERT_EQ(x.us.rows(), y.us.rows());
        ASSERT_EQ(x.us.cols(), y.us.cols());
        EXPECT_EQ(std::memcmp(x.us.data(), y.us.data(), sizeof(double) * static_cast<std::size_t>(x.us.size())), 0);
        EXPECT_EQ(std::memcmp(x.m.data(), y.m.data(), sizeof(double) * static_cast<std::size_t>(x.m.size())), 0);
    }
}

Dataset shard_of(const Dataset& ds, const std::vector<std::size_t>& idx) { return subset(ds, idx); }

ModelWeights in_process(const std::vector<Dataset>& shards, double lambda) {
    AggregateState s;
    for (const auto& sh : shards) s = incorporate(std::move(s), fit_client(with_bias(sh.features), encode_targets(sh.labels, sh.num_classes())));
    return solve_weights(s, lambda);
}

// Raw client that writes arbitrary bytes and returns the first reply frame.
Frame send_raw(std::uint16_t port, const Bytes& bytes) {
    Socket s = Socket::connect_to("127.0.0.1:" + std::to_string(port));
    s.send_all(bytes);
    return s.read_frame();
}

}  // namespace

TEST(WireLayout, GoldenUpdateBytes) {
    const Bytes frame = encode_update(tiny_update());
    const Bytes golden{
        'F',  'D',  'W',  '1',  0x01,                                            // magic, type
        0x2C, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,                          // payload_len = 44
        0x01, 0x00, 0x00, 0x00,                                                  // num_classes
        0x02, 0x00, 0x00, 0x00,                                                  // num_features
        0x01, 0x00, 0x00, 0x00,                                                  // rank
        0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xF0, 0x3F,                          // 1.0
        0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x40,                          // 2.0
        0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xE0, 0x3F,                          // 0.5
        0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xF0, 0xBF,                          // -1.0
    };
    EXPECT_EQ(frame, golden);
    expect_bit_equal(decode_update(golden), tiny_update());
}

TEST(WireLayout, GoldenWeightsBytes) {
    ModelWeights w;
    w.w = Matrix::Constant(1, 1, -2.0);
    w.lambda_used = 0.0;
    const Bytes payload = encode_weights_payload(w);
    const Bytes golden{
        0x01, 0x00, 0x00, 0x00,                          // num_features
        0x01, 0x00, 0x00, 0x00,                          // num_classes
        0x00,                                            // logistic
        0x9A, 0x99, 0x99, 0x99, 0x99, 0x99, 0xA9, 0x3F,  // epsilon 0.05
        0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,  // lambda 0
        0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xC0,  // -2.0
    };
    EXPECT_EQ(payload, golden);
    EXPECT_EQ(payload.size(), weights_payload_size(1, 1));
}

TEST(WireLayout, EmptyRankPayloadSize) {
    ClientUpdate u;
    u.num_features = 5;
    for (int k = 0; k < 3; ++k) u.per_output.push_back({Matrix(5, 0), Vector::Zero(5)});
    EXPECT_EQ(encode_update_payload(u).size(), 8u + 3u * (4u + 8u * 5u));
}

TEST(WireLayout, SizeFormulaMatchesEncoding) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const ClientUpdate u = random_update(rng, 1 + trial % 9, 1 + static_cast<std::size_t>(trial % 4));
        std::vector<std::size_t> ranks;
        for (const auto& o : u.per_output) ranks.push_back(static_cast<std::size_t>(o.us.cols()));
        EXPECT_EQ(encode_update_payload(u).size(), update_payload_size(static_cast<std::size_t>(u.num_features), ranks));
    }
}

TEST(WireCodec, UpdateRoundTripIsBitExact) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const ClientUpdate u = random_update(rng, 1 + trial % 12, 1 + static_cast<std::size_t>(trial % 5));
        expect_bit_equal(decode_update(encode_update(u)), u);
    }
}

TEST(WireCodec, WeightsRoundTripIsBitExact) {
    std::mt19937_64 rng(3);
    ModelWeights w{random_matrix(rng, 7, 3), {ActivationKind::logistic, 0.1}, 1e-3};
    const ModelWeights back = decode_weights(encode_weights(w));
    EXPECT_EQ(back.w, w.w);
    EXPECT_EQ(back.activation.epsilon_clip, 0.1);
    EXPECT_EQ(back.lambda_used, 1e-3);
}

TEST(WireCodec, TruncationAtEveryLengthIsRejected) {
    const Bytes frame = encode_update(tiny_update());
    for (std::size_t len = 0; len < frame.size(); ++len) {
        EXPECT_THROW(decode_update(std::span(frame.data(), len)), ProtocolError) << "len " << len;
    }
}

TEST(WireCodec, PayloadLengthBeyondBufferReportsOffset) {
    Bytes frame = encode_update(tiny_update());
    frame[5] = 0xFF;
    try {
        decode_update(frame);
        FAIL() << "expected ProtocolError";
    } catch (const ProtocolError& e) {
        EXPECT_EQ(e.offset(), 5u);
    }
}

TEST(WireCodec, BadMagicAndUnknownType) {
    Bytes frame = encode_update(tiny_update());
    frame[0] = 'X';
    try {
        decode_update(frame);
        FAIL();
    } catch (const ProtocolError& e) {
        EXPECT_EQ(e.offset(), 0u);
    }
    frame = encode_update(tiny_update());
    frame[4] = 0x42;
    try {
        decode_update(frame);
        FAIL();
    } catch (const ProtocolError& e) {
        EXPECT_EQ(e.offset(), 4u);
    }
}

TEST(WireCodec, HostileCountsRejectedBeforeAllocation) {
    Writer w;
    w.u32(0xFFFFFFFFu);
    w.u32(0xFFFFFFFFu);
    const Bytes payload = std::move(w).take();
    EXPECT_THROW(decode_update(encode_frame(MsgType::update, payload)), ProtocolError);

    Writer r;
    r.u32(1);
    r.u32(2);
    r.u32(9);  // rank above feature count
    for (int i = 0; i < 3; ++i) r.f64(0.0);
    EXPECT_THROW(decode_update(encode_frame(MsgType::update, std::move(r).take())), ProtocolError);
}

TEST(WireCodec, TrailingBytesAndNonFinite) {
    Bytes payload = encode_update_payload(tiny_update());
    payload.push_back(0);
    EXPECT_THROW(decode_update(encode_frame(MsgType::update, payload)), ProtocolError);

    Bytes frame = encode_update(tiny_update());
    frame[frame.size() - 1] = 0x7F;
    frame[frame.size() - 2] = 0xF8;  // NaN
    EXPECT_THROW(decode_update(frame), ProtocolError);
}

TEST(WireCodec, WrongFrameType) {
    EXPECT_THROW(decode_update(encode_weights({Matrix::Zero(1, 1), {}, 0.0})), ProtocolError);
    EXPECT_THROW(decode_weights(encode_update(tiny_update())), ProtocolError);
}

TEST(Endpoint, Parsing) {
    EXPECT_EQ(parse_endpoint("127.0.0.1:80").host, "127.0.0.1");
    EXPECT_EQ(parse_endpoint("[::1]:9000").host, "::1");
    EXPECT_EQ(parse_endpoint(":5").port, "5");
    EXPECT_THROW(parse_endpoint("nohost"), ArgumentError);
    EXPECT_THROW(parse_endpoint("h:abc"), ArgumentError);
}

TEST(Loopback, SingleClientBitIdentical) {
    std::mt19937_64 rng(10);
    const Dataset ds = random_dataset(rng, 6, 200, 3);
    Coordinator coord("127.0.0.1:0", 1, 1e-3);
    auto served = std::async(std::launch::async, [&] { return coord.run(); });
    TransferStats stats;
    const ModelWeights got = run_client_agent("127.0.0.1:" + std::to_string(coord.port()), ds, {}, &stats);
    const ModelWeights at_coord = served.get();
    const ModelWeights local = in_process({ds}, 1e-3);
    EXPECT_EQ(std::memcmp(got.w.data(), local.w.data(), sizeof(double) * static_cast<std::size_t>(local.w.size())), 0);
    EXPECT_EQ(got.w, at_coord.w);
    EXPECT_EQ(stats.bytes_sent, kFrameHeaderSize + update_payload_size(7, stats.ranks));
    EXPECT_EQ(stats.bytes_received, 2 * kFrameHeaderSize + weights_payload_size(7, 3));
}

TEST(Loopback, ThreeClientsReverseOrder) {
    std::mt19937_64 rng(11);
    const Dataset ds = random_dataset(rng, 5, 300, 2);
    const auto groups = partition_indices(ds.labels, {PartitionMode::label_sorted, 3, 0});
    std::vector<Dataset> shards;
    for (const auto& g : groups) shards.push_back(shard_of(ds, g));

    Coordinator coord("127.0.0.1:0", 3, 1e-3);
    auto served = std::async(std::launch::async, [&] { return coord.run(); });
    const std::string addr = "127.0.0.1:" + std::to_string(coord.port());
    std::vector<std::future<ModelWeights>> agents;
    for (int i = 2; i >= 0; --i) {
        agents.push_back(std::async(std::launch::async, [&, i] { return run_client_agent(addr, shards[static_cast<std::size_t>(i)]); }));
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    std::vector<ModelWeights> results;
    for (auto& a : agents) results.push_back(a.get());
    const ModelWeights at_coord = served.get();
    const ModelWeights oracle = in_process(shards, 1e-3);
    for (const auto& r : results) {
        EXPECT_EQ(encode_weights(r), encode_weights(at_coord));
        EXPECT_LE(rel_inf(r.w, oracle.w), 1e-8);
    }
    EXPECT_EQ(coord.updates_accepted(), 3u);
}

TEST(Loopback, GarbageClientGetsErrorAndRoundContinues) {
    std::mt19937_64 rng(12);
    Coordinator coord("127.0.0.1:0", 1, 1e-3);
    auto served = std::async(std::launch::async, [&] { return coord.run(); });

    const Frame reply = send_raw(coord.port(), Bytes(32, 0xAB));
    EXPECT_EQ(reply.type, MsgType::error);

    const Frame ack = send_raw(coord.port(), encode_update(random_update(rng, 3, 2)));
    EXPECT_EQ(ack.type, MsgType::ack);

    const ModelWeights w = served.get();
    EXPECT_EQ(w.w.rows(), 3);
    EXPECT_EQ(coord.errors_sent(), 1u);
    EXPECT_EQ(coord.updates_accepted(), 1u);
}

TEST(Loopback, MismatchedUpdateIsRefusedNotCounted) {
    std::mt19937_64 rng(13);
    const Dataset a = random_dataset(rng, 4, 100, 2);
    const Dataset b = random_dataset(rng, 6, 100, 2);
    Coordinator coord("127.0.0.1:0", 2, 1e-3);
    auto served = std::async(std::launch::async, [&] { return coord.run(); });
    const std::string addr = "127.0.0.1:" + std::to_string(coord.port());

    auto first = std::async(std::launch::async, [&] { return run_client_agent(addr, a); });
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    EXPECT_THROW(run_client_agent(addr, b), RemoteError);
    const ModelWeights second = run_client_agent(addr, a);
    EXPECT_EQ(first.get().w, second.w);
    served.get();
    EXPECT_EQ(coord.errors_sent(), 1u);
}

TEST(Agent, EmptyShardFailsBeforeConnecting) {
    Dataset empty;
    empty.features.resize(3, 0);
    empty.class_list = {"a", "b"};
    EXPECT_THROW(run_client_agent("127.0.0.1:1", empty), ArgumentError);
}

TEST(Agent, RefusedConnectionIsTransportError) {
    std::mt19937_64 rng(14);
    const Dataset ds = random_dataset(rng, 2, 10, 2);
    std::uint16_t port = 0;
    {
        Socket probe = Socket::listen_on("127.0.0.1:0");
        port = probe.local_port();
    }
    EXPECT_THROW(run_client_agent("127.0.0.1:" + std::to_string(port), ds), TransportError);
}

TEST(Coordinator, RejectsBadArguments) {
    EXPECT_THROW(Coordinator("127.0.0.1:0", 0, 1e-3), ArgumentError);
    EXPECT_THROW(Coordinator("127.0.0.1:0", 1, -1.0), ArgumentError);
}
