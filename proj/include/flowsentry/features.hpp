#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "flowsentry/flow.hpp"
#include "flowsentry/text.hpp"

// The canonical 18-column feature schema, in fixed order. Throughout this
// schema "packet length" means transport payload bytes (not IP total
// length); header bytes are counted separately by the header-length
// columns. avg_fwd_segment_size always equals fwd_pkt_len_mean and
// avg_packet_size always equals pkt_len_mean; both names are kept so that
// CICDDoS2019-format files map one-to-one.

namespace flowsentry {

inline constexpr std::size_t kFeatureCount = 18;

using FeatureVector = std::array<double, kFeatureCount>;

enum FeatureIndex : std::size_t {
    kSrcIp = 0,
    kSrcPort = 1,
    kDstIp = 2,
    kDstPort = 3,
    kFlowDurationUs = 4,
    kFwdHeaderLenBytes = 5,
    kMinSegSizeFwd = 6,
    kTotalLenFwdPayload = 7,
    kFwdPktLenMin = 8,
    kFwdPktLenMax = 9,
    kFwdPktLenMean = 10,
    kAvgFwdSegmentSize = 11,
    kFwdIatTotalUs = 12,
    kSubflowFwdBytes = 13,
    kPktLenMin = 14,
    kPktLenMax = 15,
    kPktLenMean = 16,
    kAvgPacketSize = 17,
};

inline const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = {
        "src_ip",           "src_port",
        "dst_ip",           "dst_port",
        "flow_duration_us", "fwd_header_len_bytes",
        "min_seg_size_fwd", "total_len_fwd_payload",
        "fwd_pkt_len_min",  "fwd_pkt_len_max",
        "fwd_pkt_len_mean", "avg_fwd_segment_size",
        "fwd_iat_total_us", "subflow_fwd_bytes",
        "pkt_len_min",      "pkt_len_max",
        "pkt_len_mean",     "avg_packet_size",
    };
    return names;
}

// CICDDoS2019 column names for the same schema (header cells are trimmed
// before matching, so " Flow Duration" matches "Flow Duration").
inline const std::vector<std::string>& cicddos_feature_names() {
    static const std::vector<std::string> names = {
        "Source IP",
        "Source Port",
        "Destination IP",
        "Destination Port",
        "Flow Duration",
        "Fwd Header Length",
        "min_seg_size_forward",
        "Total Length of Fwd Packets",
        "Fwd Packet Length Min",
        "Fwd Packet Length Max",
        "Fwd Packet Length Mean",
        "Avg Fwd Segment Size",
        "Fwd IAT Total",
        "Subflow Fwd Bytes",
        "Min Packet Length",
        "Max Packet Length",
        "Packet Length Mean",
        "Average Packet Size",
    };
    return names;
}

inline std::uint64_t schema_hash(const std::vector<std::string>& names) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& n : names) {
        h = fnv1a64(n, h);
        h = fnv1a64(",", h);
    }
    return h;
}

inline std::uint64_t canonical_schema_hash() { return schema_hash(feature_names()); }

// Big-endian dotted quad -> 32-bit unsigned ("192.168.1.1" -> 3232235777).
inline std::optional<std::uint32_t> encode_ipv4(std::string_view s) {
    s = trim(s);
    std::uint32_t value = 0;
    int octets = 0;
    std::uint32_t current = 0;
    int digits = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == '.') {
            if (digits == 0 || current > 255 || octets >= 4) return std::nullopt;
            value = (value << 8) | current;
            ++octets;
            current = 0;
            digits = 0;
        } else if (s[i] >= '0' && s[i] <= '9') {
            current = current * 10 + static_cast<std::uint32_t>(s[i] - '0');
            if (++digits > 3) return std::nullopt;
        } else {
            return std::nullopt;
        }
    }
    if (octets != 4) return std::nullopt;
    return value;
}

inline std::string decode_ipv4(std::uint32_t ip) {
    return std::to_string((ip >> 24) & 0xff) + "." + std::to_string((ip >> 16) & 0xff) + "." +
           std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

// Computes the full schema from a finished flow. src/dst are taken from the
// forward initiator's perspective; subflow_fwd_bytes is floor-divided so
// the column stays integral.
inline FeatureVector finalize_features(const FlowRecord& rec) {
    if (rec.fwd.pkt_count == 0) {
        throw std::invalid_argument("finalize_features: flow has no forward packets");
    }
    const Endpoint src = rec.fwd_initiator;
    const Endpoint dst =
        (rec.key.endpoint_a == rec.fwd_initiator) ? rec.key.endpoint_b : rec.key.endpoint_a;

    const double fwd_count = static_cast<double>(rec.fwd.pkt_count);
    const double fwd_sum = static_cast<double>(rec.fwd.payload_sum);
    const double fwd_mean = fwd_sum / fwd_count;

    const std::uint64_t all_count = rec.fwd.pkt_count + rec.bwd.pkt_count;
    const std::uint64_t all_sum = rec.fwd.payload_sum + rec.bwd.payload_sum;
    const double all_mean = static_cast<double>(all_sum) / static_cast<double>(all_count);

    std::uint64_t pkt_len_min = rec.fwd.payload_min;
    std::uint64_t pkt_len_max = rec.fwd.payload_max;
    if (rec.bwd.pkt_count > 0) {
        pkt_len_min = std::min(pkt_len_min, rec.bwd.payload_min);
        pkt_len_max = std::max(pkt_len_max, rec.bwd.payload_max);
    }

    FeatureVector f{};
    f[kSrcIp] = static_cast<double>(src.ip);
    f[kSrcPort] = static_cast<double>(src.port);
    f[kDstIp] = static_cast<double>(dst.ip);
    f[kDstPort] = static_cast<double>(dst.port);
    f[kFlowDurationUs] = static_cast<double>(rec.last_ts_us - rec.first_ts_us);
    f[kFwdHeaderLenBytes] = static_cast<double>(rec.fwd.header_sum);
    f[kMinSegSizeFwd] = static_cast<double>(rec.min_header_len_fwd);
    f[kTotalLenFwdPayload] = fwd_sum;
    f[kFwdPktLenMin] = static_cast<double>(rec.fwd.payload_min);
    f[kFwdPktLenMax] = static_cast<double>(rec.fwd.payload_max);
    f[kFwdPktLenMean] = fwd_mean;
    f[kAvgFwdSegmentSize] = fwd_mean;
    f[kFwdIatTotalUs] = static_cast<double>(rec.fwd_iat_total_us);
    f[kSubflowFwdBytes] = static_cast<double>(rec.fwd.payload_sum / rec.fwd_subflow_count);
    f[kPktLenMin] = static_cast<double>(pkt_len_min);
    f[kPktLenMax] = static_cast<double>(pkt_len_max);
    f[kPktLenMean] = all_mean;
    f[kAvgPacketSize] = all_mean;
    return f;
}

// "srcip-dstip-srcport-dstport-proto", forward perspective.
inline std::string flow_id(const FlowRecord& rec) {
    const Endpoint src = rec.fwd_initiator;
    const Endpoint dst =
        (rec.key.endpoint_a == rec.fwd_initiator) ? rec.key.endpoint_b : rec.key.endpoint_a;
    return decode_ipv4(src.ip) + "-" + decode_ipv4(dst.ip) + "-" + std::to_string(src.port) + "-" +
           std::to_string(dst.port) + "-" + std::to_string(rec.key.protocol);
}

// Extractor CSV layout: 18 feature columns in canonical order plus metadata
// columns flow_id, first_timestamp_us, protocol, and optionally a trailing
// label column. The flow timestamp lives only in the metadata; it is never
// part of the feature schema.
inline std::string feature_csv_header(bool with_label) {
    std::string header = join(feature_names(), ',');
    header += ",flow_id,first_timestamp_us,protocol";
    if (with_label) header += ",label";
    header += "\n";
    return header;
}

inline std::string feature_csv_row(const FlowRecord& rec, const FeatureVector& f,
                                   const std::string& label = {}) {
    std::string row;
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        if (i) row.push_back(',');
        row += format_csv_value(f[i]);
    }
    row += "," + flow_id(rec);
    row += "," + std::to_string(rec.first_ts_us);
    row += "," + std::to_string(rec.key.protocol);
    if (!label.empty()) row += "," + label;
    row += "\n";
    return row;
}

} // namespace flowsentry
