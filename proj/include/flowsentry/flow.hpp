#pragma once

#include <algorithm>
#include <cstdint>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "flowsentry/pcap.hpp"

// Bidirectional flow aggregation keyed by canonical 5-tuple. The forward
// direction of a flow is the direction of its first observed packet.

namespace flowsentry {

inline constexpr std::int64_t kDefaultActivityTimeoutUs = 1000000;    // 1 s subflow gap
inline constexpr std::int64_t kDefaultIdleTimeoutUs = 120000000;      // 120 s flow expiry

struct Endpoint {
    std::uint32_t ip = 0;
    std::uint16_t port = 0;

    friend bool operator==(const Endpoint&, const Endpoint&) = default;
    friend auto operator<=>(const Endpoint& a, const Endpoint& b) {
        return std::tie(a.ip, a.port) <=> std::tie(b.ip, b.port);
    }
};

// Canonical key: endpoint_a <= endpoint_b, so both directions of a
// conversation map to the same entry.
struct FlowKey {
    Endpoint endpoint_a;
    Endpoint endpoint_b;
    std::uint8_t protocol = 0;

    static FlowKey canonical(Endpoint src, Endpoint dst, std::uint8_t protocol) {
        if (dst < src) std::swap(src, dst);
        return FlowKey{src, dst, protocol};
    }

    friend bool operator==(const FlowKey&, const FlowKey&) = default;
    friend auto operator<=>(const FlowKey& a, const FlowKey& b) {
        return std::tie(a.endpoint_a, a.endpoint_b, a.protocol) <=>
               std::tie(b.endpoint_a, b.endpoint_b, b.protocol);
    }
};

struct FlowKeyHash {
    std::size_t operator()(const FlowKey& k) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](std::uint64_t v) {
            h ^= v;
            h *= 0x100000001b3ULL;
        };
        mix(k.endpoint_a.ip);
        mix(k.endpoint_a.port);
        mix(k.endpoint_b.ip);
        mix(k.endpoint_b.port);
        mix(k.protocol);
        return static_cast<std::size_t>(h);
    }
};

struct DirectionStats {
    std::uint64_t pkt_count = 0;
    std::uint64_t payload_sum = 0;
    std::uint64_t header_sum = 0;
    std::uint64_t payload_min = 0;
    std::uint64_t payload_max = 0;

    void add(std::uint32_t payload, std::uint32_t header) {
        if (pkt_count == 0) {
            payload_min = payload_max = payload;
        } else {
            payload_min = std::min<std::uint64_t>(payload_min, payload);
            payload_max = std::max<std::uint64_t>(payload_max, payload);
        }
        ++pkt_count;
        payload_sum += payload;
        header_sum += header;
    }
};

struct FlowRecord {
    FlowKey key;
    Endpoint fwd_initiator; // source of the first-seen packet
    std::int64_t first_ts_us = 0;
    std::int64_t last_ts_us = 0;
    DirectionStats fwd;
    DirectionStats bwd;
    std::int64_t fwd_iat_total_us = 0;
    std::int64_t last_fwd_ts_us = 0;
    std::uint64_t fwd_subflow_count = 0;
    std::uint32_t min_header_len_fwd = 0;
    std::uint64_t insert_seq = 0; // first-seen order, used for stable output
};

// Single-writer flow table: one table per ingest context.
class FlowTable {
public:
    // Merges one packet into the table, creating the flow if absent.
    // Forward packets whose gap since the previous forward packet exceeds
    // activity_timeout_us open a new subflow.
    void ingest(const PacketEvent& pkt, std::int64_t activity_timeout_us = kDefaultActivityTimeoutUs) {
        const Endpoint src{pkt.src_ip, pkt.src_port};
        const Endpoint dst{pkt.dst_ip, pkt.dst_port};
        const FlowKey key = FlowKey::canonical(src, dst, pkt.protocol);

        auto [it, inserted] = flows_.try_emplace(key);
        FlowRecord& rec = it->second;
        if (inserted) {
            rec.key = key;
            rec.fwd_initiator = src;
            rec.first_ts_us = rec.last_ts_us = pkt.timestamp_us;
            rec.last_fwd_ts_us = pkt.timestamp_us;
            rec.fwd_subflow_count = 1;
            rec.min_header_len_fwd = pkt.header_len_bytes;
            rec.insert_seq = next_seq_++;
            rec.fwd.add(pkt.payload_len_bytes, pkt.header_len_bytes);
            return;
        }

        rec.first_ts_us = std::min(rec.first_ts_us, pkt.timestamp_us);
        rec.last_ts_us = std::max(rec.last_ts_us, pkt.timestamp_us);
        if (src == rec.fwd_initiator) {
            // Out-of-order forward packets contribute a zero gap; this keeps
            // fwd_iat_total_us <= flow duration.
            const std::int64_t gap = std::max<std::int64_t>(0, pkt.timestamp_us - rec.last_fwd_ts_us);
            rec.fwd_iat_total_us += gap;
            if (gap > activity_timeout_us) ++rec.fwd_subflow_count;
            rec.last_fwd_ts_us = std::max(rec.last_fwd_ts_us, pkt.timestamp_us);
            rec.min_header_len_fwd = std::min(rec.min_header_len_fwd, pkt.header_len_bytes);
            rec.fwd.add(pkt.payload_len_bytes, pkt.header_len_bytes);
        } else {
            rec.bwd.add(pkt.payload_len_bytes, pkt.header_len_bytes);
        }
    }

    // Removes and returns every flow idle longer than idle_timeout_us at
    // time now_us, in first-seen order.
    std::vector<FlowRecord> expire(std::int64_t now_us, std::int64_t idle_timeout_us = kDefaultIdleTimeoutUs) {
        std::vector<FlowRecord> finished;
        for (auto it = flows_.begin(); it != flows_.end();) {
            if (now_us - it->second.last_ts_us > idle_timeout_us) {
                finished.push_back(std::move(it->second));
                it = flows_.erase(it);
            } else {
                ++it;
            }
        }
        sort_by_seq(finished);
        return finished;
    }

    // Drains all residual flows (end of capture), in first-seen order.
    std::vector<FlowRecord> flush() {
        std::vector<FlowRecord> finished;
        finished.reserve(flows_.size());
        for (auto& [key, rec] : flows_) finished.push_back(std::move(rec));
        flows_.clear();
        sort_by_seq(finished);
        return finished;
    }

    std::size_t size() const { return flows_.size(); }

private:
    static void sort_by_seq(std::vector<FlowRecord>& records) {
        std::sort(records.begin(), records.end(),
                  [](const FlowRecord& a, const FlowRecord& b) { return a.insert_seq < b.insert_seq; });
    }

    std::unordered_map<FlowKey, FlowRecord, FlowKeyHash> flows_;
    std::uint64_t next_seq_ = 0;
};

} // namespace flowsentry
