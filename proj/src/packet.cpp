#include "flowcam/packet.hpp"

#include <algorithm>

#include <arpa/inet.h>

namespace flowcam {

namespace {

constexpr std::uint16_t kEtherIpv4 = 0x0800;
constexpr std::uint16_t kEtherIpv6 = 0x86DD;
constexpr std::uint16_t kEtherVlan = 0x8100;
constexpr std::uint16_t kEtherQinQ = 0x88A8;
constexpr std::uint16_t kEtherQinQLegacy = 0x9100;

std::uint16_t be16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] << 8 | p[1]); }

struct NetworkLayer {
    IpAddress src;
    IpAddress dst;
    std::uint8_t protocol = 0;
    std::size_t transport_offset = 0;
    std::size_t end = 0;  // one past the last byte belonging to the IP packet
};

std::optional<NetworkLayer> decode_ipv4(std::span<const std::uint8_t> buf, std::size_t off) {
    if (buf.size() < off + 20) return std::nullopt;
    const std::uint8_t* ip = buf.data() + off;
    if ((ip[0] >> 4) != 4) return std::nullopt;
    const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0F) * 4;
    if (ihl < 20 || buf.size() < off + ihl) return std::nullopt;

    const std::uint16_t total = be16(ip + 2);
    // A zero total length shows up with segmentation offload; trust the capture.
    std::size_t end = total == 0 ? buf.size() : std::min(buf.size(), off + total);
    if (total != 0 && total < ihl) return std::nullopt;

    if ((be16(ip + 6) & 0x1FFF) != 0) return std::nullopt;  // non-first fragment

    NetworkLayer n;
    n.src = IpAddress::from_bytes({ip + 12, 4});
    n.dst = IpAddress::from_bytes({ip + 16, 4});
    n.protocol = ip[9];
    n.transport_offset = off + ihl;
    n.end = end;
    return n;
}

std::optional<NetworkLayer> decode_ipv6(std::span<const std::uint8_t> buf, std::size_t off) {
    if (buf.size() < off + 40) return std::nullopt;
    const std::uint8_t* ip = buf.data() + off;
    if ((ip[0] >> 4) != 6) return std::nullopt;

    NetworkLayer n;
    n.src = IpAddress::from_bytes({ip + 8, 16});
    n.dst = IpAddress::from_bytes({ip + 24, 16});
    n.end = std::min(buf.size(), off + 40 + be16(ip + 4));

    std::uint8_t next = ip[6];
    std::size_t pos = off + 40;
    for (int guard = 0; guard < 16; ++guard) {
        switch (next) {
            case 0:    // hop-by-hop
            case 43:   // routing
            case 60: { // destination options
                if (n.end < pos + 2) return std::nullopt;
                const std::size_t len = (static_cast<std::size_t>(buf[pos + 1]) + 1) * 8;
                next = buf[pos];
                pos += len;
                break;
            }
            case 44: {  // fragment
                if (n.end < pos + 8) return std::nullopt;
                if ((be16(buf.data() + pos + 2) >> 3) != 0) return std::nullopt;
                next = buf[pos];
                pos += 8;
                break;
            }
            case 51: {  // authentication header
                if (n.end < pos + 2) return std::nullopt;
                const std::size_t len = (static_cast<std::size_t>(buf[pos + 1]) + 2) * 4;
                next = buf[pos];
                pos += len;
                break;
            }
            default:
                n.protocol = next;
                n.transport_offset = pos;
                if (pos > n.end) return std::nullopt;
                return n;
        }
    }
    return std::nullopt;
}

}  // namespace

std::string_view to_string(Transport t) {
    switch (t) {
        case Transport::TCP: return "TCP";
        case Transport::UDP: return "UDP";
        default: return "OTHER";
    }
}

IpAddress IpAddress::v4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
    IpAddress ip;
    ip.bytes[0] = a;
    ip.bytes[1] = b;
    ip.bytes[2] = c;
    ip.bytes[3] = d;
    ip.length = 4;
    return ip;
}

IpAddress IpAddress::from_bytes(std::span<const std::uint8_t> raw) {
    IpAddress ip;
    ip.length = raw.size() == 16 ? 16 : 4;
    std::copy_n(raw.begin(), ip.length, ip.bytes.begin());
    return ip;
}

std::optional<IpAddress> IpAddress::parse(const std::string& text) {
    IpAddress ip;
    if (::inet_pton(AF_INET, text.c_str(), ip.bytes.data()) == 1) {
        ip.length = 4;
        return ip;
    }
    if (::inet_pton(AF_INET6, text.c_str(), ip.bytes.data()) == 1) {
        ip.length = 16;
        return ip;
    }
    return std::nullopt;
}

std::string IpAddress::to_string() const {
    char buf[INET6_ADDRSTRLEN] = {};
    ::inet_ntop(is_v6() ? AF_INET6 : AF_INET, bytes.data(), buf, sizeof buf);
    return buf;
}

std::optional<PacketRecord> decode_packet(std::span<const std::uint8_t> frame,
                                          std::uint32_t link_type,
                                          std::int64_t timestamp_us,
                                          std::optional<std::uint32_t> wire_length) {
    std::optional<NetworkLayer> net;

    switch (link_type) {
        case linktype::kEthernet: {
            if (frame.size() < 14) return std::nullopt;
            std::size_t off = 12;
            std::uint16_t ethertype = be16(frame.data() + off);
            while (ethertype == kEtherVlan || ethertype == kEtherQinQ || ethertype == kEtherQinQLegacy) {
                off += 4;
                if (frame.size() < off + 2) return std::nullopt;
                ethertype = be16(frame.data() + off);
            }
            off += 2;
            if (ethertype == kEtherIpv4) net = decode_ipv4(frame, off);
            else if (ethertype == kEtherIpv6) net = decode_ipv6(frame, off);
            else return std::nullopt;
            break;
        }
        case linktype::kRaw:
        case linktype::kRawBsd:
        case linktype::kIpv4:
        case linktype::kIpv6: {
            if (frame.empty()) return std::nullopt;
            const int version = frame[0] >> 4;
            if (version == 4) net = decode_ipv4(frame, 0);
            else if (version == 6) net = decode_ipv6(frame, 0);
            else return std::nullopt;
            break;
        }
        default:
            return std::nullopt;
    }
    if (!net) return std::nullopt;

    PacketRecord rec;
    rec.timestamp_us = timestamp_us;
    rec.src_ip = net->src;
    rec.dst_ip = net->dst;
    rec.total_length = wire_length.value_or(static_cast<std::uint32_t>(frame.size()));

    const std::size_t t = net->transport_offset;
    std::size_t payload_begin = 0;
    std::size_t payload_end = net->end;

    if (net->protocol == 17) {
        if (net->end < t + 8) return std::nullopt;
        rec.protocol = Transport::UDP;
        rec.src_port = be16(frame.data() + t);
        rec.dst_port = be16(frame.data() + t + 2);
        rec.transport_header_length = 8;
        const std::uint16_t udp_len = be16(frame.data() + t + 4);
        if (udp_len >= 8) payload_end = std::min(payload_end, t + udp_len);
        payload_begin = t + 8;
    } else if (net->protocol == 6) {
        if (net->end < t + 20) return std::nullopt;
        const std::size_t data_offset = static_cast<std::size_t>(frame[t + 12] >> 4) * 4;
        if (data_offset < 20 || net->end < t + data_offset) return std::nullopt;
        rec.protocol = Transport::TCP;
        rec.src_port = be16(frame.data() + t);
        rec.dst_port = be16(frame.data() + t + 2);
        rec.transport_header_length = static_cast<std::uint16_t>(data_offset);
        rec.tcp_flags = frame[t + 13];
        rec.tcp_window = be16(frame.data() + t + 14);
        payload_begin = t + data_offset;
    } else {
        return std::nullopt;
    }

    if (payload_end > payload_begin) {
        rec.payload.assign(frame.begin() + static_cast<std::ptrdiff_t>(payload_begin),
                           frame.begin() + static_cast<std::ptrdiff_t>(payload_end));
    }
    return rec;
}

std::optional<PacketRecord> decode_packet(const RawFrame& frame) {
    return decode_packet(frame.data, frame.link_type, frame.timestamp_us, frame.wire_length);
}

}  // namespace flowcam
