#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowcam/flow.hpp"
#include "flowcam/packet.hpp"
#include "flowcam/rng.hpp"

namespace testutil {

inline std::filesystem::path tmp_path(const std::string& name) {
    std::filesystem::path dir = FLOWCAM_TEST_TMP;
    std::filesystem::create_directories(dir);
    return dir / name;
}

inline flowcam::PacketRecord packet(std::int64_t ts, const char* src, std::uint16_t sport, const char* dst,
                                    std::uint16_t dport, flowcam::Transport proto = flowcam::Transport::UDP,
                                    std::size_t payload = 0, std::uint8_t flags = 0) {
    flowcam::PacketRecord p;
    p.timestamp_us = ts;
    p.src_ip = *flowcam::IpAddress::parse(src);
    p.dst_ip = *flowcam::IpAddress::parse(dst);
    p.src_port = sport;
    p.dst_port = dport;
    p.protocol = proto;
    p.transport_header_length = proto == flowcam::Transport::TCP ? 20 : 8;
    p.payload.assign(payload, 0xAB);
    p.total_length = static_cast<std::uint32_t>(14 + 20 + p.transport_header_length + payload);
    p.tcp_flags = flags;
    if (proto == flowcam::Transport::TCP) p.tcp_window = 1024;
    return p;
}

/// A flow of random packets (1..max_packets), mixed directions, optional TCP
/// flags and windows, with gaps drawn from a mixture that crosses the 1 s and
/// 5 s boundaries.
inline flowcam::FlowState random_flow(flowcam::Rng& rng, std::size_t max_packets = 20) {
    using namespace flowcam;
    FlowState f;
    const bool tcp = rng.chance(0.5);
    f.key.protocol = tcp ? Transport::TCP : Transport::UDP;
    f.initiator = {IpAddress::v4(10, 0, 0, 1), 40000};
    f.responder = {IpAddress::v4(10, 0, 0, 2), 443};
    f.key.a = f.initiator;
    f.key.b = f.responder;
    const auto n = static_cast<std::size_t>(rng.between(1, static_cast<std::int64_t>(max_packets)));
    std::int64_t t = rng.between(0, 1'000'000'000);
    f.start_ts = t;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) {
            const auto mode = rng.below(4);
            t += mode == 0 ? 0 : mode == 1 ? rng.between(1, 1'000'000) : mode == 2 ? rng.between(900'000, 1'100'000)
                                                                                   : rng.between(4'000'000, 9'000'000);
        }
        FlowPacket p;
        p.timestamp_us = t;
        p.forward = i == 0 || rng.chance(0.55);
        p.payload_length = rng.chance(0.2) ? 0 : static_cast<std::uint32_t>(rng.between(1, 1460));
        p.header_length = tcp ? static_cast<std::uint16_t>(20 + 4 * rng.below(4)) : 8;
        p.total_length = 14 + 20 + p.header_length + p.payload_length;
        if (tcp) {
            p.tcp_flags = static_cast<std::uint8_t>(rng.below(256));
            p.tcp_window = static_cast<std::uint16_t>(rng.below(65536));
        }
        f.packets.push_back(p);
    }
    f.last_ts = t;
    return f;
}

}  // namespace testutil
