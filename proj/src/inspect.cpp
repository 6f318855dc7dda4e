#include "flowcam/inspect.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "flowcam/errors.hpp"

namespace flowcam {

namespace {

std::uint16_t be16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] << 8 | p[1]); }

std::uint32_t be32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) << 24 | static_cast<std::uint32_t>(p[1]) << 16 |
           static_cast<std::uint32_t>(p[2]) << 8 | p[3];
}

bool either(std::uint16_t a, std::uint16_t b, std::uint16_t port) { return a == port || b == port; }

bool is_rtcp_type(std::uint8_t pt) { return pt >= 200 && pt <= 206; }

std::string port_note_for(std::uint16_t src, std::uint16_t dst, Transport proto) {
    if (proto == Transport::UDP) {
        if (either(src, dst, ports::kZoom)) return "Zoom-associated port";
        if (either(src, dst, ports::kMeetStun)) return "Meet-associated port";
        if (either(src, dst, ports::kIpsecNatT)) return "IPsec NAT-T port";
        if (either(src, dst, ports::kQuic)) return "QUIC port";
    } else if (either(src, dst, 443)) {
        return "TLS port";
    }
    return {};
}

}  // namespace

std::string_view to_string(HintKind k) {
    switch (k) {
        case HintKind::RTP: return "RTP";
        case HintKind::RTCP: return "RTCP";
        case HintKind::QUIC_LONG: return "QUIC_LONG";
        case HintKind::QUIC_SHORT: return "QUIC_SHORT";
        case HintKind::IPSEC_NAT_T: return "IPSEC_NAT_T";
        case HintKind::UNKNOWN: return "UNKNOWN";
    }
    return "?";
}

std::string_view to_string(Media m) {
    switch (m) {
        case Media::AUDIO: return "AUDIO";
        case Media::VIDEO: return "VIDEO";
        case Media::UNKNOWN: return "UNKNOWN";
    }
    return "?";
}

std::string_view to_string(Confidence c) { return c == Confidence::STRONG ? "STRONG" : "WEAK"; }

std::string_view to_string(RtpDemux d) {
    switch (d) {
        case RtpDemux::RTP: return "RTP";
        case RtpDemux::RTCP: return "RTCP";
        case RtpDemux::NEITHER: return "NEITHER";
    }
    return "?";
}

std::optional<RtpHeader> parse_rtp_header(std::span<const std::uint8_t> payload) {
    if (payload.size() < 12) return std::nullopt;
    const std::uint8_t b0 = payload[0];
    const std::uint8_t b1 = payload[1];
    RtpHeader h;
    h.version = b0 >> 6;
    if (h.version != 2) return std::nullopt;
    h.padding = (b0 & 0x20) != 0;
    h.extension = (b0 & 0x10) != 0;
    h.csrc_count = b0 & 0x0F;
    h.marker = (b1 & 0x80) != 0;
    h.payload_type = b1 & 0x7F;
    h.sequence = be16(payload.data() + 2);
    h.timestamp = be32(payload.data() + 4);
    h.ssrc = be32(payload.data() + 8);
    return h;
}

std::optional<RtcpHeader> parse_rtcp_header(std::span<const std::uint8_t> payload) {
    if (payload.size() < 4) return std::nullopt;
    RtcpHeader h;
    h.version = payload[0] >> 6;
    if (h.version != 2) return std::nullopt;
    h.padding = (payload[0] & 0x20) != 0;
    h.report_info = payload[0] & 0x1F;
    h.packet_type = payload[1];
    if (!is_rtcp_type(h.packet_type)) return std::nullopt;
    h.length_words = be16(payload.data() + 2);
    return h;
}

RtpDemux demux_rtp_rtcp(std::span<const std::uint8_t> payload) {
    if (payload.size() < 2) return RtpDemux::NEITHER;
    if ((payload[0] >> 6) != 2) return RtpDemux::NEITHER;
    if (payload[0] & 0x10) return RtpDemux::RTP;
    if (is_rtcp_type(payload[1])) return RtpDemux::RTCP;
    return RtpDemux::NEITHER;
}

MediaHint media_hint(const RtpHeader& header, AppContext context) {
    const int pt = header.payload_type;
    switch (context) {
        case AppContext::SKYPE:
            if (pt == 9) return {Media::AUDIO, "G.722"};
            if (pt == 122 || pt == 123) return {Media::VIDEO, "Skype video"};
            break;
        case AppContext::TEAMS:
            if (pt == 104) return {Media::AUDIO, "Silk"};
            if (pt == 118) return {Media::AUDIO, "Comfort Noise"};
            if (pt == 122) return {Media::VIDEO, "H.264"};
            if (pt == 123) return {Media::VIDEO, "H.264 FEC"};
            break;
        case AppContext::MEET:
            if (pt == 111) return {Media::AUDIO, "Hangouts audio"};
            if (pt >= 96 && pt <= 100) return {Media::VIDEO, "dynamic video"};
            break;
        case AppContext::GENERIC:
            break;
    }
    if (pt >= 96) return {Media::UNKNOWN, "dynamic"};
    return {Media::UNKNOWN, "static"};
}

ProtocolHint classify_udp_payload(std::span<const std::uint8_t> payload, std::uint16_t src_port,
                                  std::uint16_t dst_port, AppContext context) {
    ProtocolHint hint;
    if (either(src_port, dst_port, ports::kQuic)) {
        if (payload.empty()) {
            hint.codec_note = "empty datagram on QUIC port";
            return hint;
        }
        hint.kind = (payload[0] & 0x80) ? HintKind::QUIC_LONG : HintKind::QUIC_SHORT;
        hint.confidence = Confidence::STRONG;
        return hint;
    }
    if (either(src_port, dst_port, ports::kIpsecNatT)) {
        hint.kind = HintKind::IPSEC_NAT_T;
        hint.codec_note = "UDP-encapsulated ESP";
        return hint;
    }
    if (either(src_port, dst_port, ports::kZoom)) {
        hint.codec_note = "Zoom-associated port";
        return hint;
    }

    switch (demux_rtp_rtcp(payload)) {
        case RtpDemux::RTP:
            if (auto h = parse_rtp_header(payload)) {
                const MediaHint m = media_hint(*h, context);
                hint.kind = HintKind::RTP;
                hint.media = m.media;
                hint.codec_note = m.codec_note;
                hint.payload_type = h->payload_type;
                return hint;
            }
            break;
        case RtpDemux::RTCP:
            hint.kind = HintKind::RTCP;
            hint.codec_note = "RTCP type " + std::to_string(payload[1]);
            return hint;
        case RtpDemux::NEITHER:
            break;
    }
    if (either(src_port, dst_port, ports::kMeetStun)) hint.codec_note = "Meet-associated port";
    return hint;
}

double rtp_stream_continuity(const std::vector<std::vector<std::uint8_t>>& payloads) {
    std::optional<std::uint32_t> ssrc;
    std::vector<std::uint16_t> sequences;
    for (const auto& p : payloads) {
        if (demux_rtp_rtcp(p) != RtpDemux::RTP) continue;
        const auto h = parse_rtp_header(p);
        if (!h) continue;
        if (!ssrc) ssrc = h->ssrc;
        if (h->ssrc == *ssrc) sequences.push_back(h->sequence);
    }
    if (sequences.size() < 2) {
        throw InsufficientRtp("need at least two RTP headers with a common SSRC, found " +
                              std::to_string(sequences.size()));
    }
    std::size_t in_order = 0;
    for (std::size_t i = 1; i < sequences.size(); ++i) {
        if (static_cast<std::uint16_t>(sequences[i] - sequences[i - 1]) == 1) ++in_order;
    }
    return static_cast<double>(in_order) / static_cast<double>(sequences.size() - 1);
}

std::vector<PortCount> port_profile(std::span<const FlowState> flows, PortSide side) {
    std::map<std::uint16_t, std::size_t> counts;
    std::size_t total = 0;
    for (const auto& f : flows) {
        if (side != PortSide::DST) {
            ++counts[f.initiator.port];
            ++total;
        }
        if (side != PortSide::SRC) {
            ++counts[f.responder.port];
            ++total;
        }
    }
    std::vector<PortCount> out;
    out.reserve(counts.size());
    for (const auto& [port, n] : counts) {
        out.push_back({port, n, static_cast<double>(n) / static_cast<double>(total)});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const PortCount& x, const PortCount& y) { return x.count > y.count; });
    return out;
}

InspectionReport inspect_flows(std::span<const FlowState> flows, AppContext context) {
    InspectionReport report;
    std::vector<FlowState> udp, tcp;

    for (const auto& f : flows) {
        FlowInspection fi;
        fi.flow_id = f.flow_id();
        fi.protocol = f.protocol();
        fi.src_port = f.initiator.port;
        fi.dst_port = f.responder.port;
        fi.packets = f.packets.size();
        fi.port_note = port_note_for(fi.src_port, fi.dst_port, fi.protocol);

        if (f.protocol() == Transport::UDP) {
            std::map<HintKind, ProtocolHint> first_of_kind;
            std::vector<std::vector<std::uint8_t>> payloads;
            for (const auto& p : f.packets) {
                const std::uint16_t sp = p.forward ? f.initiator.port : f.responder.port;
                const std::uint16_t dp = p.forward ? f.responder.port : f.initiator.port;
                ProtocolHint h = classify_udp_payload(p.payload_prefix, sp, dp, context);
                ++fi.kind_counts[h.kind];
                if (h.kind == HintKind::RTP) {
                    ++report.rtp_packets;
                    if (h.payload_type) ++report.payload_types[*h.payload_type];
                } else if (h.kind == HintKind::RTCP) {
                    ++report.rtcp_packets;
                }
                first_of_kind.try_emplace(h.kind, std::move(h));
                payloads.push_back(p.payload_prefix);
            }
            HintKind best = HintKind::UNKNOWN;
            std::size_t best_n = 0;
            for (const auto& [kind, n] : fi.kind_counts) {
                if (n > best_n) {
                    best = kind;
                    best_n = n;
                }
            }
            if (best_n > 0) fi.hint = first_of_kind.at(best);
            if (fi.kind_counts.count(HintKind::RTP)) {
                try {
                    fi.rtp_continuity = rtp_stream_continuity(payloads);
                } catch (const InsufficientRtp&) {
                }
            }
            udp.push_back(f);
        } else {
            tcp.push_back(f);
        }
        report.flows.push_back(std::move(fi));
    }
    report.udp_dst_ports = port_profile(udp, PortSide::DST);
    report.tcp_dst_ports = port_profile(tcp, PortSide::DST);
    return report;
}

std::string report_to_text(const InspectionReport& report, std::size_t max_flows) {
    std::ostringstream out;
    out << "flows: " << report.flows.size() << "\n";
    out << "rtp packets: " << report.rtp_packets << "  rtcp packets: " << report.rtcp_packets << "\n";

    auto ports = [&out](const char* title, const std::vector<PortCount>& table) {
        out << title << "\n";
        std::size_t shown = 0;
        for (const auto& pc : table) {
            if (shown++ == 10) break;
            char line[64];
            std::snprintf(line, sizeof line, "  %5u  %6zu  %6.2f%%\n", pc.port, pc.count, 100.0 * pc.proportion);
            out << line;
        }
    };
    ports("udp destination ports (flows):", report.udp_dst_ports);
    ports("tcp destination ports (flows):", report.tcp_dst_ports);

    out << "rtp payload types (packets):\n";
    for (const auto& [pt, n] : report.payload_types) out << "  " << pt << "  " << n << "\n";

    out << "per-flow hints:\n";
    std::size_t shown = 0;
    for (const auto& f : report.flows) {
        if (shown++ == max_flows) {
            out << "  ... " << (report.flows.size() - max_flows) << " more\n";
            break;
        }
        out << "  " << f.flow_id << "  " << to_string(f.protocol) << "  pkts=" << f.packets << "  "
            << to_string(f.hint.kind) << "/" << to_string(f.hint.confidence);
        if (f.hint.kind == HintKind::RTP) {
            out << "  media=" << to_string(f.hint.media);
            if (f.hint.payload_type) out << " pt=" << int(*f.hint.payload_type);
        }
        if (!f.hint.codec_note.empty()) out << "  [" << f.hint.codec_note << "]";
        if (f.rtp_continuity) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3f", *f.rtp_continuity);
            out << "  continuity=" << buf;
        }
        if (!f.port_note.empty()) out << "  (" << f.port_note << ")";
        out << "\n";
    }
    return out.str();
}

std::string report_to_json(const InspectionReport& report) {
    using nlohmann::json;
    auto ports = [](const std::vector<PortCount>& table) {
        json arr = json::array();
        for (const auto& pc : table) arr.push_back({{"port", pc.port}, {"count", pc.count}, {"proportion", pc.proportion}});
        return arr;
    };
    json j;
    j["flow_count"] = report.flows.size();
    j["rtp_packets"] = report.rtp_packets;
    j["rtcp_packets"] = report.rtcp_packets;
    j["udp_dst_ports"] = ports(report.udp_dst_ports);
    j["tcp_dst_ports"] = ports(report.tcp_dst_ports);
    json pts = json::object();
    for (const auto& [pt, n] : report.payload_types) pts[std::to_string(pt)] = n;
    j["payload_types"] = pts;
    json flows = json::array();
    for (const auto& f : report.flows) {
        json jf;
        jf["flow_id"] = f.flow_id;
        jf["protocol"] = std::string(to_string(f.protocol));
        jf["src_port"] = f.src_port;
        jf["dst_port"] = f.dst_port;
        jf["packets"] = f.packets;
        jf["kind"] = std::string(to_string(f.hint.kind));
        jf["confidence"] = std::string(to_string(f.hint.confidence));
        jf["media"] = std::string(to_string(f.hint.media));
        jf["note"] = f.hint.codec_note;
        if (f.hint.payload_type) jf["payload_type"] = *f.hint.payload_type;
        json kinds = json::object();
        for (const auto& [k, n] : f.kind_counts) kinds[std::string(to_string(k))] = n;
        jf["kind_counts"] = kinds;
        if (f.rtp_continuity) jf["rtp_continuity"] = *f.rtp_continuity;
        if (!f.port_note.empty()) jf["port_note"] = f.port_note;
        flows.push_back(std::move(jf));
    }
    j["flows"] = std::move(flows);
    return j.dump(2) + "\n";
}

}  // namespace flowcam
