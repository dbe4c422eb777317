#include <catch2/catch_amalgamated.hpp>

#include "flowsentry/features.hpp"
#include "flowsentry/flow.hpp"
#include "flowsentry/rng.hpp"

#include "testutil.hpp"

using namespace flowsentry;

namespace {

PacketEvent udp_packet(std::int64_t ts_us, std::uint32_t src_ip, std::uint16_t src_port,
                       std::uint32_t dst_ip, std::uint16_t dst_port, std::uint32_t payload,
                       std::uint32_t header = 28) {
    PacketEvent e;
    e.timestamp_us = ts_us;
    e.src_ip = src_ip;
    e.dst_ip = dst_ip;
    e.src_port = src_port;
    e.dst_port = dst_port;
    e.protocol = 17;
    e.header_len_bytes = header;
    e.payload_len_bytes = payload;
    return e;
}

const std::uint32_t kClientIp = testutil::ip("10.0.0.1");
const std::uint32_t kServerIp = testutil::ip("10.0.0.2");

PacketEvent fwd(std::int64_t ts_us, std::uint32_t payload, std::uint32_t header = 28) {
    return udp_packet(ts_us, kClientIp, 1234, kServerIp, 53, payload, header);
}
PacketEvent bwd(std::int64_t ts_us, std::uint32_t payload, std::uint32_t header = 28) {
    return udp_packet(ts_us, kServerIp, 53, kClientIp, 1234, payload, header);
}

} // namespace

TEST_CASE("first packet initializes the flow record") {
    FlowTable table;
    table.ingest(fwd(0, 32));
    auto flows = table.flush();
    REQUIRE(flows.size() == 1);
    const FlowRecord& rec = flows[0];
    CHECK(rec.fwd.pkt_count == 1);
    CHECK(rec.fwd_iat_total_us == 0);
    CHECK(rec.fwd_subflow_count == 1);
    CHECK(rec.fwd_initiator.ip == kClientIp);
    CHECK(rec.fwd_initiator.port == 1234);
}

TEST_CASE("forward inter-arrival accumulates, gaps within timeout keep one subflow") {
    FlowTable table;
    table.ingest(fwd(0, 10));
    table.ingest(fwd(500000, 20));
    auto flows = table.flush();
    REQUIRE(flows.size() == 1);
    CHECK(flows[0].fwd_iat_total_us == 500000);
    CHECK(flows[0].fwd_subflow_count == 1);
}

TEST_CASE("gap beyond the activity timeout opens a new subflow") {
    FlowTable table;
    table.ingest(fwd(0, 10));
    table.ingest(fwd(1500000, 20));
    auto flows = table.flush();
    REQUIRE(flows.size() == 1);
    CHECK(flows[0].fwd_subflow_count == 2);
}

TEST_CASE("gap equal to the activity timeout does not split") {
    FlowTable table;
    table.ingest(fwd(0, 10));
    table.ingest(fwd(1000000, 20));
    auto flows = table.flush();
    REQUIRE(flows.size() == 1);
    CHECK(flows[0].fwd_subflow_count == 1);
}

TEST_CASE("both directions map to one canonical flow") {
    FlowTable table;
    table.ingest(fwd(0, 10));
    table.ingest(bwd(100, 50));
    table.ingest(fwd(200, 20));
    CHECK(table.size() == 1);
    auto flows = table.flush();
    REQUIRE(flows.size() == 1);
    CHECK(flows[0].fwd.pkt_count == 2);
    CHECK(flows[0].bwd.pkt_count == 1);
    CHECK(flows[0].bwd.payload_sum == 50);
}

TEST_CASE("expire removes only flows idle beyond the timeout") {
    FlowTable table;
    SECTION("empty table") {
        CHECK(table.expire(1000000000, kDefaultIdleTimeoutUs).empty());
    }
    SECTION("121 s idle expires with a 120 s timeout") {
        table.ingest(fwd(0, 10));
        auto expired = table.expire(121000000, kDefaultIdleTimeoutUs);
        CHECK(expired.size() == 1);
        CHECK(table.size() == 0);
    }
    SECTION("119 s idle stays") {
        table.ingest(fwd(0, 10));
        auto expired = table.expire(119000000, kDefaultIdleTimeoutUs);
        CHECK(expired.empty());
        CHECK(table.size() == 1);
    }
    SECTION("exactly the timeout stays (strict comparison)") {
        table.ingest(fwd(0, 10));
        CHECK(table.expire(120000000, kDefaultIdleTimeoutUs).empty());
    }
}

TEST_CASE("single-packet flow features") {
    FlowTable table;
    table.ingest(fwd(5000, 32));
    const FeatureVector f = finalize_features(table.flush()[0]);
    CHECK(f[kFlowDurationUs] == 0.0);
    CHECK(f[kFwdPktLenMin] == 32.0);
    CHECK(f[kFwdPktLenMax] == 32.0);
    CHECK(f[kFwdPktLenMean] == 32.0);
    CHECK(f[kFwdIatTotalUs] == 0.0);
    CHECK(f[kSubflowFwdBytes] == 32.0);
    CHECK(f[kPktLenMean] == 32.0);
    CHECK(f[kAvgPacketSize] == 32.0);
}

TEST_CASE("three-packet fixture matches the hand-computed vector exactly") {
    // Payloads {10, 20, 30} at t = {0, 1 s, 1.1 s}, UDP headers of 28 bytes.
    FlowTable table;
    table.ingest(fwd(0, 10));
    table.ingest(fwd(1000000, 20));
    table.ingest(fwd(1100000, 30));
    auto flows = table.flush();
    REQUIRE(flows.size() == 1);
    const FeatureVector f = finalize_features(flows[0]);

    CHECK(f[kSrcIp] == static_cast<double>(kClientIp));
    CHECK(f[kSrcPort] == 1234.0);
    CHECK(f[kDstIp] == static_cast<double>(kServerIp));
    CHECK(f[kDstPort] == 53.0);
    CHECK(f[kFlowDurationUs] == 1100000.0);
    CHECK(f[kFwdHeaderLenBytes] == 84.0);
    CHECK(f[kMinSegSizeFwd] == 28.0);
    CHECK(f[kTotalLenFwdPayload] == 60.0);
    CHECK(f[kFwdPktLenMin] == 10.0);
    CHECK(f[kFwdPktLenMax] == 30.0);
    CHECK(f[kFwdPktLenMean] == 20.0);
    CHECK(f[kAvgFwdSegmentSize] == 20.0);
    CHECK(f[kFwdIatTotalUs] == 1100000.0);
    CHECK(f[kSubflowFwdBytes] == 60.0); // 1 s gap does not exceed the timeout
    CHECK(f[kPktLenMin] == 10.0);
    CHECK(f[kPktLenMax] == 30.0);
    CHECK(f[kPktLenMean] == 20.0);
    CHECK(f[kAvgPacketSize] == 20.0);
}

TEST_CASE("IPv4 dotted-quad encoding") {
    CHECK(*encode_ipv4("192.168.1.1") == 3232235777u); // 192*2^24+168*2^16+1*2^8+1
    CHECK(*encode_ipv4("0.0.0.0") == 0u);
    CHECK(*encode_ipv4("255.255.255.255") == 0xffffffffu);
    CHECK_FALSE(encode_ipv4("256.0.0.1").has_value());
    CHECK_FALSE(encode_ipv4("1.2.3").has_value());
    CHECK_FALSE(encode_ipv4("::1").has_value());
    CHECK(decode_ipv4(3232235777u) == "192.168.1.1");
}

TEST_CASE("finalize_features rejects a record with no forward packets") {
    FlowRecord rec;
    CHECK_THROWS_AS(finalize_features(rec), std::invalid_argument);
}

TEST_CASE("subflow_fwd_bytes honors the floor-division bound") {
    FlowTable table;
    table.ingest(fwd(0, 7));
    table.ingest(fwd(2000000, 9)); // second subflow
    table.ingest(fwd(2100000, 5));
    auto flows = table.flush();
    const FlowRecord& rec = flows[0];
    CHECK(rec.fwd_subflow_count == 2);
    const FeatureVector f = finalize_features(rec);
    CHECK(f[kSubflowFwdBytes] == 10.0); // floor(21 / 2)
    const double k = static_cast<double>(rec.fwd_subflow_count);
    CHECK(f[kSubflowFwdBytes] * k <= f[kTotalLenFwdPayload]);
    CHECK(f[kTotalLenFwdPayload] < f[kSubflowFwdBytes] * k + k);
}

TEST_CASE("direction invariance: reordering reverse packets leaves features unchanged") {
    Rng rng(2024);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<PacketEvent> fwd_packets;
        std::vector<PacketEvent> bwd_packets;
        const std::size_t n_fwd = 1 + rng.below(8);
        const std::size_t n_bwd = rng.below(8);
        std::int64_t ts = 0;
        for (std::size_t i = 0; i < n_fwd; ++i) {
            ts += static_cast<std::int64_t>(rng.below(2000000));
            fwd_packets.push_back(fwd(ts, 1 + static_cast<std::uint32_t>(rng.below(1400))));
        }
        for (std::size_t i = 0; i < n_bwd; ++i) {
            bwd_packets.push_back(bwd(1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(ts) + 1)),
                                      1 + static_cast<std::uint32_t>(rng.below(1400))));
        }

        auto run = [&](std::uint64_t order_seed) {
            // forward packets keep their order and the first slot; reverse
            // packets are spliced in at random positions after it
            std::vector<PacketEvent> sequence = fwd_packets;
            Rng order(order_seed);
            for (const auto& p : bwd_packets) {
                const std::size_t pos = 1 + order.below(sequence.size());
                sequence.insert(sequence.begin() + static_cast<std::ptrdiff_t>(pos), p);
            }
            FlowTable table;
            for (const auto& p : sequence) table.ingest(p);
            return finalize_features(table.flush()[0]);
        };

        const FeatureVector a = run(7);
        const FeatureVector b = run(99);
        CHECK(a == b);
    }
}

TEST_CASE("random flows satisfy the schema invariants") {
    Rng rng(555);
    for (int trial = 0; trial < 50; ++trial) {
        FlowTable table;
        const std::size_t n = 1 + rng.below(40);
        std::int64_t ts = static_cast<std::int64_t>(rng.below(1000000));
        const bool first_fwd = true;
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t payload = static_cast<std::uint32_t>(rng.below(1500));
            if (i == 0 ? first_fwd : rng.below(2) == 0) {
                table.ingest(fwd(ts, payload));
            } else {
                table.ingest(bwd(ts, payload));
            }
            ts += static_cast<std::int64_t>(rng.below(3000000));
        }
        auto flows = table.flush();
        REQUIRE(flows.size() == 1);
        const FlowRecord& rec = flows[0];
        const FeatureVector f = finalize_features(rec);

        for (double v : f) {
            CHECK(std::isfinite(v));
            CHECK(v >= 0.0);
        }
        CHECK(f[kFwdPktLenMin] <= f[kFwdPktLenMean]);
        CHECK(f[kFwdPktLenMean] <= f[kFwdPktLenMax]);
        CHECK(f[kPktLenMin] <= f[kPktLenMean]);
        CHECK(f[kPktLenMean] <= f[kPktLenMax]);
        CHECK(f[kAvgFwdSegmentSize] == f[kFwdPktLenMean]);
        CHECK(f[kFwdIatTotalUs] <= f[kFlowDurationUs]);
        CHECK(f[kSubflowFwdBytes] <= f[kTotalLenFwdPayload]);
        CHECK(rec.last_ts_us >= rec.first_ts_us);
        if (rec.fwd.pkt_count > 0) CHECK(rec.fwd.payload_min <= rec.fwd.payload_max);
    }
}

TEST_CASE("flow id renders the forward five-tuple") {
    FlowTable table;
    // initiator has the lexicographically larger endpoint, so the canonical
    // key is flipped relative to the forward direction
    table.ingest(udp_packet(0, testutil::ip("10.0.0.9"), 5000, testutil::ip("10.0.0.2"), 53, 10));
    auto flows = table.flush();
    CHECK(flow_id(flows[0]) == "10.0.0.9-10.0.0.2-5000-53-17");
}
