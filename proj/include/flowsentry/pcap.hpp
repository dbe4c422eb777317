#pragma once

#include <cstdint>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowsentry/log.hpp"

// Classic pcap reader: Ethernet II (optionally behind one 802.1Q tag),
// IPv4, TCP/UDP. Everything else is skipped and counted. No libpcap
// dependency; captures are decoded straight from the byte stream.

namespace flowsentry {

struct pcap_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One decoded packet observation.
struct PacketEvent {
    std::int64_t timestamp_us = 0; // microseconds since epoch
    std::uint32_t src_ip = 0;      // host byte order
    std::uint32_t dst_ip = 0;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::uint8_t protocol = 0; // 6 = TCP, 17 = UDP
    std::uint32_t header_len_bytes = 0;  // IPv4 header + transport header
    std::uint32_t payload_len_bytes = 0; // IPv4 total length - header_len_bytes
    std::uint8_t tcp_flags = 0;          // 0 for UDP
};

struct SkipCounters {
    std::uint64_t non_ipv4 = 0;   // ARP, IPv6, other ethertypes
    std::uint64_t non_tcp_udp = 0;
    std::uint64_t fragmented = 0;
    std::uint64_t malformed = 0; // short capture, bad lengths

    std::uint64_t total() const { return non_ipv4 + non_tcp_udp + fragmented + malformed; }
};

struct PcapResult {
    std::vector<PacketEvent> events; // capture order
    SkipCounters skipped;
    bool truncated = false; // capture ended mid-record
};

namespace detail {

inline std::uint16_t read_u16(const std::uint8_t* p, bool swap) {
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    return swap ? static_cast<std::uint16_t>((v >> 8) | (v << 8)) : v;
}

inline std::uint32_t read_u32(const std::uint8_t* p, bool swap) {
    std::uint32_t v = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                      (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    if (!swap) return v;
    return ((v & 0x000000ffu) << 24) | ((v & 0x0000ff00u) << 8) | ((v & 0x00ff0000u) >> 8) |
           ((v & 0xff000000u) >> 24);
}

inline std::uint16_t read_be16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}

inline std::uint32_t read_be32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

// Decodes one captured frame into an event. Returns false with a counter
// bump when the frame is not IPv4 TCP/UDP or cannot be decoded.
inline bool decode_frame(const std::uint8_t* frame, std::size_t len, std::int64_t ts_us,
                         PacketEvent& out, SkipCounters& skipped) {
    if (len < 14) {
        ++skipped.malformed;
        return false;
    }
    std::size_t offset = 12;
    std::uint16_t ethertype = read_be16(frame + offset);
    offset += 2;
    if (ethertype == 0x8100) { // one VLAN tag
        if (len < offset + 4) {
            ++skipped.malformed;
            return false;
        }
        ethertype = read_be16(frame + offset + 2);
        offset += 4;
    }
    if (ethertype != 0x0800) {
        ++skipped.non_ipv4;
        return false;
    }
    if (len < offset + 20) {
        ++skipped.malformed;
        return false;
    }
    const std::uint8_t* ip = frame + offset;
    const std::uint8_t version = ip[0] >> 4;
    const std::uint32_t ihl_bytes = static_cast<std::uint32_t>(ip[0] & 0x0f) * 4;
    if (version != 4 || ihl_bytes < 20) {
        ++skipped.malformed;
        return false;
    }
    if (len < offset + ihl_bytes) {
        ++skipped.malformed;
        return false;
    }
    const std::uint16_t total_len = read_be16(ip + 2);
    const std::uint16_t flags_frag = read_be16(ip + 6);
    const bool more_fragments = (flags_frag & 0x2000) != 0;
    const std::uint16_t frag_offset = flags_frag & 0x1fff;
    if (more_fragments || frag_offset != 0) {
        ++skipped.fragmented;
        return false;
    }
    const std::uint8_t protocol = ip[9];
    if (protocol != 6 && protocol != 17) {
        ++skipped.non_tcp_udp;
        return false;
    }
    if (total_len < ihl_bytes) {
        ++skipped.malformed;
        return false;
    }
    const std::uint8_t* transport = ip + ihl_bytes;
    const std::size_t transport_captured = len - offset - ihl_bytes;
    std::uint32_t transport_header = 0;
    std::uint8_t tcp_flags = 0;
    if (protocol == 6) {
        if (transport_captured < 14) { // need data offset + flags
            ++skipped.malformed;
            return false;
        }
        transport_header = static_cast<std::uint32_t>(transport[12] >> 4) * 4;
        if (transport_header < 20) {
            ++skipped.malformed;
            return false;
        }
        tcp_flags = transport[13];
    } else {
        if (transport_captured < 8) {
            ++skipped.malformed;
            return false;
        }
        transport_header = 8;
    }
    const std::uint32_t header_len = ihl_bytes + transport_header;
    if (total_len < header_len) {
        ++skipped.malformed;
        return false;
    }
    out.timestamp_us = ts_us;
    out.src_ip = read_be32(ip + 12);
    out.dst_ip = read_be32(ip + 16);
    out.src_port = read_be16(transport);
    out.dst_port = read_be16(transport + 2);
    out.protocol = protocol;
    out.header_len_bytes = header_len;
    out.payload_len_bytes = total_len - header_len;
    out.tcp_flags = tcp_flags;
    return true;
}

} // namespace detail

inline PcapResult parse_pcap(std::span<const std::uint8_t> stream) {
    constexpr std::uint32_t kMagicUs = 0xa1b2c3d4u;
    constexpr std::uint32_t kMagicUsSwapped = 0xd4c3b2a1u;
    constexpr std::uint32_t kMagicNs = 0xa1b23c4du;
    constexpr std::uint32_t kMagicNsSwapped = 0x4d3cb2a1u;

    if (stream.size() < 24) throw pcap_error("pcap: truncated global header");
    const std::uint32_t magic = detail::read_u32(stream.data(), false);
    bool swap = false;
    bool nanos = false;
    switch (magic) {
        case kMagicUs: break;
        case kMagicUsSwapped: swap = true; break;
        case kMagicNs: nanos = true; break;
        case kMagicNsSwapped: swap = true, nanos = true; break;
        default: throw pcap_error("pcap: bad magic number");
    }
    const std::uint32_t link_type = detail::read_u32(stream.data() + 20, swap);
    if (link_type != 1) {
        throw pcap_error("pcap: unsupported link type " + std::to_string(link_type) +
                         " (only Ethernet is supported)");
    }

    PcapResult result;
    std::size_t pos = 24;
    while (pos < stream.size()) {
        if (stream.size() - pos < 16) {
            result.truncated = true;
            log_warn("pcap: truncated record header, stopping with partial results");
            break;
        }
        const std::uint32_t ts_sec = detail::read_u32(stream.data() + pos, swap);
        const std::uint32_t ts_frac = detail::read_u32(stream.data() + pos + 4, swap);
        const std::uint32_t incl_len = detail::read_u32(stream.data() + pos + 8, swap);
        pos += 16;
        if (stream.size() - pos < incl_len) {
            result.truncated = true;
            log_warn("pcap: truncated packet record, stopping with partial results");
            break;
        }
        const std::int64_t ts_us = static_cast<std::int64_t>(ts_sec) * 1000000 +
                                   static_cast<std::int64_t>(nanos ? ts_frac / 1000 : ts_frac);
        PacketEvent event;
        if (detail::decode_frame(stream.data() + pos, incl_len, ts_us, event, result.skipped)) {
            result.events.push_back(event);
        }
        pos += incl_len;
    }
    return result;
}

inline PcapResult parse_pcap_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw pcap_error("pcap: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_pcap(bytes);
}

} // namespace flowsentry
