#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowcam/packet.hpp"

namespace flowcam {

enum class SynthKind { CAMERA, CONF, SHARE };

std::string_view to_string(SynthKind kind);
/// "camera", "conf" or "share" (case-insensitive).
std::optional<SynthKind> parse_synth_kind(std::string_view text);
/// Class label written into the manifest: IoTCam, Conf or Share.
std::string_view synth_label(SynthKind kind);

struct SynthProfile {
    SynthKind kind = SynthKind::CAMERA;
    std::size_t n_flows = 1;
    std::uint64_t seed = 42;
    /// Capture start, microseconds since the epoch.
    std::int64_t start_us = 1'600'000'000'000'000;
    /// Flow start times are spread uniformly over this window.
    std::int64_t spread_us = 300'000'000;
};

/// Ground truth for one generated flow.
struct SynthFlowInfo {
    std::size_t index = 0;
    SynthKind kind = SynthKind::CAMERA;
    Transport protocol = Transport::UDP;
    IpAddress client_ip;
    std::uint16_t client_port = 0;
    IpAddress server_ip;
    std::uint16_t server_port = 0;
    std::int64_t start_us = 0;
    std::int64_t end_us = 0;
    std::size_t fwd_packets = 0;
    std::size_t bwd_packets = 0;
    std::size_t pauses = 0;
    double mean_iat_us = 0;
    /// CONF only.
    std::string app;
    std::optional<std::uint8_t> payload_type;
    std::uint32_t ssrc_fwd = 0;
    std::uint32_t ssrc_bwd = 0;
    std::size_t rtp_packets = 0;
    std::size_t rtcp_packets = 0;

    std::size_t packets() const noexcept { return fwd_packets + bwd_packets; }
};

struct SynthPacket {
    std::int64_t timestamp_us = 0;
    std::size_t flow = 0;
    std::vector<std::uint8_t> frame;
};

struct SynthOutput {
    /// Ethernet frames ordered by (timestamp, flow, emission order).
    std::vector<SynthPacket> packets;
    std::vector<SynthFlowInfo> flows;
};

/// Pure function of the profile. Throws std::invalid_argument for n_flows of
/// 0 or above 50000 (client ports are unique per flow).
SynthOutput synthesize(const SynthProfile& profile);

/// One JSON object per line, one line per flow.
std::string manifest_to_jsonl(std::span<const SynthFlowInfo> flows);

/// Writes the pcap and a JSONL manifest (default: "<pcap>.manifest.jsonl").
/// Throws IoFailure.
std::vector<SynthFlowInfo> generate(const SynthProfile& profile, const std::filesystem::path& pcap_path,
                                    std::optional<std::filesystem::path> manifest_path = std::nullopt);

/// Parameters of one synthetic Ethernet/IPv4 frame.
struct FrameSpec {
    IpAddress src_ip;
    IpAddress dst_ip;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    Transport protocol = Transport::UDP;
    std::uint8_t tcp_flags = 0;
    std::uint32_t seq = 0;
    std::uint32_t ack = 0;
    std::uint16_t window = 0;
    /// Padded to a multiple of 4 bytes.
    std::vector<std::uint8_t> tcp_options;
    std::uint16_t ip_id = 0;
    std::uint8_t ttl = 64;
};

/// Builds Ethernet + IPv4 + TCP/UDP with valid checksums. IPv4 only.
std::vector<std::uint8_t> build_frame(const FrameSpec& spec, std::span<const std::uint8_t> payload);

/// RFC 1071 one's-complement sum, folded and inverted.
std::uint16_t internet_checksum(std::span<const std::uint8_t> data, std::uint32_t initial = 0);

}  // namespace flowcam
