#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowcam/flow.hpp"

namespace flowcam {

/// RTP fixed header (RFC 3550 section 5.1).
struct RtpHeader {
    std::uint8_t version = 0;
    bool padding = false;
    bool extension = false;
    std::uint8_t csrc_count = 0;
    bool marker = false;
    std::uint8_t payload_type = 0;
    std::uint16_t sequence = 0;
    std::uint32_t timestamp = 0;
    std::uint32_t ssrc = 0;

    bool operator==(const RtpHeader&) const = default;
};

/// First word of an RTCP packet. `report_info` is the raw 5-bit count/FMT
/// field; its meaning depends on the packet type and the application.
struct RtcpHeader {
    std::uint8_t version = 0;
    bool padding = false;
    std::uint8_t report_info = 0;
    std::uint8_t packet_type = 0;
    std::uint16_t length_words = 0;

    /// SR, RR, SDES, BYE or APP.
    bool is_standard() const noexcept { return packet_type >= 200 && packet_type <= 204; }
};

enum class HintKind { RTP, RTCP, QUIC_LONG, QUIC_SHORT, IPSEC_NAT_T, UNKNOWN };
enum class Media { AUDIO, VIDEO, UNKNOWN };
enum class Confidence { STRONG, WEAK };
enum class AppContext { SKYPE, TEAMS, MEET, GENERIC };
enum class RtpDemux { RTP, RTCP, NEITHER };
enum class PortSide { SRC, DST, BOTH };

std::string_view to_string(HintKind k);
std::string_view to_string(Media m);
std::string_view to_string(Confidence c);
std::string_view to_string(RtpDemux d);

/// Diagnostic result for one UDP payload. `media` is only set for RTP.
struct ProtocolHint {
    HintKind kind = HintKind::UNKNOWN;
    Media media = Media::UNKNOWN;
    std::string codec_note;
    Confidence confidence = Confidence::WEAK;
    std::optional<std::uint8_t> payload_type;
};

namespace ports {
inline constexpr std::uint16_t kQuic = 443;
inline constexpr std::uint16_t kIpsecNatT = 4500;
inline constexpr std::uint16_t kZoom = 8801;
inline constexpr std::uint16_t kMeetStun = 19305;
}  // namespace ports

/// Rejects payloads shorter than 12 bytes or with a version other than 2.
std::optional<RtpHeader> parse_rtp_header(std::span<const std::uint8_t> payload);

/// Rejects payloads shorter than 4 bytes, version other than 2, or a packet
/// type outside the RTCP range 200-206.
std::optional<RtcpHeader> parse_rtcp_header(std::span<const std::uint8_t> payload);

/// RTP/RTCP multiplexing rule observed for Skype-style media: with version 2,
/// the 0x10 bit of the first octet is set on RTP and clear on RTCP; an RTCP
/// decision additionally needs the second octet to be an RTCP packet type
/// (200-204, or feedback 205/206).
RtpDemux demux_rtp_rtcp(std::span<const std::uint8_t> payload);

struct MediaHint {
    Media media = Media::UNKNOWN;
    std::string codec_note;

    bool operator==(const MediaHint&) const = default;
};

/// Payload-type lookup per application.
MediaHint media_hint(const RtpHeader& header, AppContext context);

/// Classifies one UDP payload. Port 443 wins (QUIC, form from the first
/// bit), then 4500 (IPsec NAT-T), then 8801 (Zoom, never treated as RTP),
/// then the RTP/RTCP demux. Port-derived hints are diagnostics only.
ProtocolHint classify_udp_payload(std::span<const std::uint8_t> payload, std::uint16_t src_port,
                                  std::uint16_t dst_port, AppContext context = AppContext::GENERIC);

/// Fraction of consecutive RTP headers (of the first SSRC seen) whose
/// sequence numbers advance by exactly one, modulo 2^16. Payloads that do not
/// demux as RTP are ignored. Throws InsufficientRtp below two headers.
double rtp_stream_continuity(const std::vector<std::vector<std::uint8_t>>& payloads);

struct PortCount {
    std::uint16_t port = 0;
    std::size_t count = 0;
    double proportion = 0;
};

/// Flow count per port, sorted by count descending then port ascending.
/// SRC is the initiator's port, DST the responder's.
std::vector<PortCount> port_profile(std::span<const FlowState> flows, PortSide side);

struct FlowInspection {
    std::string flow_id;
    Transport protocol = Transport::UDP;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::size_t packets = 0;
    ProtocolHint hint;
    std::map<HintKind, std::size_t> kind_counts;
    std::string port_note;
    std::optional<double> rtp_continuity;
};

struct InspectionReport {
    std::vector<FlowInspection> flows;
    std::vector<PortCount> udp_dst_ports;
    std::vector<PortCount> tcp_dst_ports;
    /// RTP payload type -> packet count across all flows.
    std::map<int, std::size_t> payload_types;
    std::size_t rtp_packets = 0;
    std::size_t rtcp_packets = 0;
};

/// Builds the per-flow hint report. Flows must have been assembled with
/// payload prefixes of at least 12 bytes for RTP decoding.
InspectionReport inspect_flows(std::span<const FlowState> flows, AppContext context = AppContext::GENERIC);

std::string report_to_text(const InspectionReport& report, std::size_t max_flows = 50);
std::string report_to_json(const InspectionReport& report);

}  // namespace flowcam
