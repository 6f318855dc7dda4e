#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowcam/pcap.hpp"

namespace flowcam {

enum class Transport : std::uint8_t { OTHER = 0, TCP = 6, UDP = 17 };

std::string_view to_string(Transport t);

/// IPv4 or IPv6 address held as raw network-order bytes. IPv6 is carried
/// opaquely: only compared, hashed and printed.
struct IpAddress {
    std::array<std::uint8_t, 16> bytes{};
    std::uint8_t length = 4;

    static IpAddress v4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d);
    static IpAddress from_bytes(std::span<const std::uint8_t> raw);
    /// Dotted quad or RFC 5952 text; nullopt if unparseable.
    static std::optional<IpAddress> parse(const std::string& text);

    bool is_v6() const noexcept { return length == 16; }
    std::string to_string() const;

    auto operator<=>(const IpAddress&) const = default;
};

namespace tcp_flag {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
inline constexpr std::uint8_t kUrg = 0x20;
inline constexpr std::uint8_t kEce = 0x40;
inline constexpr std::uint8_t kCwe = 0x80;  // CWR on the wire
}  // namespace tcp_flag

/// One decoded TCP or UDP packet.
struct PacketRecord {
    std::int64_t timestamp_us = 0;
    IpAddress src_ip;
    IpAddress dst_ip;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    Transport protocol = Transport::OTHER;
    /// Bytes on the wire for the whole frame.
    std::uint32_t total_length = 0;
    /// 8 for UDP, 4 * data offset for TCP.
    std::uint16_t transport_header_length = 0;
    /// Captured transport payload, bounded by both the IP length and the
    /// capture length (link-layer padding is excluded).
    std::vector<std::uint8_t> payload;
    std::uint8_t tcp_flags = 0;
    std::optional<std::uint16_t> tcp_window;

    std::size_t payload_length() const noexcept { return payload.size(); }
    bool has_flag(std::uint8_t flag) const noexcept { return (tcp_flags & flag) != 0; }
};

/// Decodes an Ethernet (optionally 802.1Q/802.1ad tagged) or raw-IP frame.
/// Returns nullopt for anything that is not the first fragment of an IPv4/IPv6
/// TCP or UDP packet. Never throws on malformed input.
std::optional<PacketRecord> decode_packet(std::span<const std::uint8_t> frame,
                                          std::uint32_t link_type,
                                          std::int64_t timestamp_us = 0,
                                          std::optional<std::uint32_t> wire_length = std::nullopt);

std::optional<PacketRecord> decode_packet(const RawFrame& frame);

}  // namespace flowcam
