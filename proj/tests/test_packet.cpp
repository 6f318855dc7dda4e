#include <doctest.h>

#include <fstream>

#include "flowcam/errors.hpp"
#include "flowcam/io_util.hpp"
#include "flowcam/packet.hpp"
#include "flowcam/pcap.hpp"
#include "flowcam/rng.hpp"
#include "flowcam/synth.hpp"
#include "test_util.hpp"

using namespace flowcam;
using Bytes = std::vector<std::uint8_t>;

namespace {

void put_le32(Bytes& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_be32(Bytes& b, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

// magic as written by a little-endian host, version 2.4, Ethernet.
Bytes le_header(std::uint32_t magic) {
    Bytes b;
    put_le32(b, magic);
    b.push_back(2), b.push_back(0), b.push_back(4), b.push_back(0);
    put_le32(b, 0);
    put_le32(b, 0);
    put_le32(b, 65535);
    put_le32(b, 1);
    return b;
}

void write_bytes(const std::filesystem::path& p, const Bytes& b) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Ethernet + IPv4 + UDP 5000 -> 6000 with payload de ad be ef, laid out by hand.
const Bytes kUdpFrame = {
    0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0x08, 0x00,
    0x45, 0x00, 0x00, 0x20, 0x00, 0x01, 0x40, 0x00, 0x40, 0x11, 0x00, 0x00,
    0xc0, 0xa8, 0x01, 0x0a, 0xc0, 0xa8, 0x01, 0x14,
    0x13, 0x88, 0x17, 0x70, 0x00, 0x0c, 0x00, 0x00,
    0xde, 0xad, 0xbe, 0xef,
};

// Ethernet + IPv4 + TCP 1234 -> 80, SYN, window 65535, no options.
const Bytes kTcpSynFrame = {
    0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0x08, 0x00,
    0x45, 0x00, 0x00, 0x28, 0x00, 0x01, 0x40, 0x00, 0x40, 0x06, 0x00, 0x00,
    0xc0, 0xa8, 0x01, 0x0a, 0xc0, 0xa8, 0x01, 0x14,
    0x04, 0xd2, 0x00, 0x50, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x00,
    0x50, 0x02, 0xff, 0xff, 0x00, 0x00, 0x00, 0x00,
};

}  // namespace

TEST_CASE("capture with zero records yields an empty stream") {
    const auto p = testutil::tmp_path("empty_records.pcap");
    write_bytes(p, le_header(0xA1B2C3D4));
    CaptureReader r(p);
    CHECK_FALSE(r.next().has_value());
    CHECK(r.link_type() == linktype::kEthernet);
}

TEST_CASE("zero-length file is an empty capture") {
    const auto p = testutil::tmp_path("zero.pcap");
    write_bytes(p, {});
    CHECK(read_capture(p).empty());
}

TEST_CASE("nanosecond capture truncates to microseconds") {
    const auto p = testutil::tmp_path("nanos.pcap");
    Bytes b = le_header(0xA1B23C4D);
    put_le32(b, 1);
    put_le32(b, 5);
    put_le32(b, static_cast<std::uint32_t>(kUdpFrame.size()));
    put_le32(b, static_cast<std::uint32_t>(kUdpFrame.size()));
    b.insert(b.end(), kUdpFrame.begin(), kUdpFrame.end());
    write_bytes(p, b);
    CaptureReader r(p);
    CHECK(r.nanosecond_resolution());
    auto f = r.next();
    REQUIRE(f);
    CHECK(f->timestamp_us == 1'000'000);
    CHECK(f->data == kUdpFrame);
    CHECK_FALSE(r.next());
}

TEST_CASE("big-endian microsecond capture") {
    const auto p = testutil::tmp_path("bigendian.pcap");
    Bytes b;
    put_be32(b, 0xA1B2C3D4);
    b.push_back(0), b.push_back(2), b.push_back(0), b.push_back(4);
    put_be32(b, 0);
    put_be32(b, 0);
    put_be32(b, 65535);
    put_be32(b, 1);
    put_be32(b, 7);
    put_be32(b, 250);
    put_be32(b, static_cast<std::uint32_t>(kUdpFrame.size()));
    put_be32(b, 1000);
    b.insert(b.end(), kUdpFrame.begin(), kUdpFrame.end());
    write_bytes(p, b);
    const auto frames = read_capture(p);
    REQUIRE(frames.size() == 1);
    CHECK(frames[0].timestamp_us == 7'000'250);
    CHECK(frames[0].wire_length == 1000);
    const auto rec = decode_packet(frames[0]);
    REQUIRE(rec);
    CHECK(rec->total_length == 1000);
}

TEST_CASE("bad magic and partial header are malformed") {
    const auto p = testutil::tmp_path("badmagic.pcap");
    write_bytes(p, le_header(0x12345678));
    CHECK_THROWS_AS(CaptureReader{p}, MalformedCapture);
    write_bytes(p, Bytes{0xd4, 0xc3, 0xb2, 0xa1, 0x02});
    CHECK_THROWS_AS(CaptureReader{p}, MalformedCapture);
    CHECK_THROWS_AS(CaptureReader{testutil::tmp_path("does_not_exist.pcap")}, IoFailure);
}

TEST_CASE("truncated capture yields frames before the cut, then fails") {
    SynthProfile prof;
    prof.kind = SynthKind::CONF;
    const auto synth = synthesize(prof);
    const auto p = testutil::tmp_path("two_packets.pcap");
    {
        PcapWriter w(p);
        w.write(synth.packets[0].timestamp_us, synth.packets[0].frame);
        w.write(synth.packets[1].timestamp_us, synth.packets[1].frame);
        w.commit();
    }
    REQUIRE(read_capture(p).size() == 2);
    std::string bytes = read_file(p);
    bytes.resize(bytes.size() - 10);
    write_file_atomic(p, bytes);

    CaptureReader r(p);
    auto first = r.next();
    REQUIRE(first);
    CHECK(first->data == synth.packets[0].frame);
    CHECK_THROWS_AS(r.next(), MalformedCapture);

    // Cut inside the second record header.
    bytes.resize(24 + 16 + synth.packets[0].frame.size() + 7);
    write_file_atomic(p, bytes);
    CaptureReader r2(p);
    CHECK(r2.next());
    CHECK_THROWS_AS(r2.next(), MalformedCapture);
}

TEST_CASE("uncommitted writer leaves no file behind") {
    const auto p = testutil::tmp_path("never_committed.pcap");
    std::filesystem::remove(p);
    {
        PcapWriter w(p);
        w.write(0, kUdpFrame);
    }
    CHECK_FALSE(std::filesystem::exists(p));
}

TEST_CASE("ARP is skipped") {
    Bytes arp(42, 0);
    arp[12] = 0x08;
    arp[13] = 0x06;
    CHECK_FALSE(decode_packet(arp, linktype::kEthernet).has_value());
}

TEST_CASE("UDP field layout") {
    const auto rec = decode_packet(kUdpFrame, linktype::kEthernet, 42);
    REQUIRE(rec);
    CHECK(rec->protocol == Transport::UDP);
    CHECK(rec->src_port == 5000);
    CHECK(rec->dst_port == 6000);
    CHECK(rec->transport_header_length == 8);
    CHECK(rec->payload_length() == 4);
    CHECK(rec->payload == Bytes{0xde, 0xad, 0xbe, 0xef});
    CHECK(rec->src_ip.to_string() == "192.168.1.10");
    CHECK(rec->dst_ip.to_string() == "192.168.1.20");
    CHECK(rec->total_length == kUdpFrame.size());
    CHECK(rec->tcp_flags == 0);
    CHECK_FALSE(rec->tcp_window.has_value());
    CHECK(rec->timestamp_us == 42);
}

TEST_CASE("TCP SYN with window 65535") {
    const auto rec = decode_packet(kTcpSynFrame, linktype::kEthernet);
    REQUIRE(rec);
    CHECK(rec->protocol == Transport::TCP);
    CHECK(rec->tcp_flags == tcp_flag::kSyn);
    CHECK(rec->tcp_window == std::optional<std::uint16_t>(65535));
    CHECK(rec->transport_header_length == 20);
    CHECK(rec->src_port == 1234);
    CHECK(rec->dst_port == 80);
    CHECK(rec->payload_length() == 0);
}

TEST_CASE("TCP header length follows the data offset") {
    for (std::uint8_t words = 5; words <= 15; ++words) {
        Bytes f = kTcpSynFrame;
        f[14 + 20 + 12] = static_cast<std::uint8_t>(words << 4);
        const std::size_t extra = (words - 5u) * 4u;
        f.insert(f.begin() + 14 + 40, extra, 0x01);  // NOP options
        const auto total = static_cast<std::uint16_t>(40 + extra);
        f[16] = static_cast<std::uint8_t>(total >> 8);
        f[17] = static_cast<std::uint8_t>(total);
        const auto rec = decode_packet(f, linktype::kEthernet);
        REQUIRE(rec);
        CHECK(rec->transport_header_length == 4 * words);
        CHECK(rec->payload_length() == 0);
    }
}

TEST_CASE("802.1Q tag is unwrapped") {
    Bytes f = kUdpFrame;
    const Bytes tag = {0x81, 0x00, 0x00, 0x64};
    f.insert(f.begin() + 12, tag.begin(), tag.end());
    const auto rec = decode_packet(f, linktype::kEthernet);
    REQUIRE(rec);
    CHECK(rec->dst_port == 6000);
    CHECK(rec->payload_length() == 4);
}

TEST_CASE("only first IPv4 fragments are decoded") {
    Bytes first = kUdpFrame;
    first[20] = 0x20;  // MF, offset 0
    CHECK(decode_packet(first, linktype::kEthernet).has_value());
    Bytes later = kUdpFrame;
    later[20] = 0x00;
    later[21] = 0x10;  // offset 16 * 8
    CHECK_FALSE(decode_packet(later, linktype::kEthernet).has_value());
}

TEST_CASE("raw IP link type") {
    const Bytes ip(kUdpFrame.begin() + 14, kUdpFrame.end());
    const auto rec = decode_packet(ip, linktype::kRaw);
    REQUIRE(rec);
    CHECK(rec->src_port == 5000);
    CHECK(rec->total_length == ip.size());
}

TEST_CASE("IPv6 UDP is decoded and carried opaquely") {
    Bytes f = {0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0x86, 0xdd};
    const Bytes ip6 = {0x60, 0x00, 0x00, 0x00, 0x00, 0x0a, 0x11, 0x40};
    f.insert(f.end(), ip6.begin(), ip6.end());
    for (int i = 0; i < 16; ++i) f.push_back(i == 0 ? 0x20 : i == 15 ? 1 : 0);
    for (int i = 0; i < 16; ++i) f.push_back(i == 0 ? 0x20 : i == 15 ? 2 : 0);
    const Bytes udp = {0x13, 0x88, 0x17, 0x70, 0x00, 0x0a, 0x00, 0x00, 0x01, 0x02};
    f.insert(f.end(), udp.begin(), udp.end());
    const auto rec = decode_packet(f, linktype::kEthernet);
    REQUIRE(rec);
    CHECK(rec->src_ip.is_v6());
    CHECK(rec->src_ip.to_string() == "2000::1");
    CHECK(rec->payload_length() == 2);
}

TEST_CASE("ICMP is skipped") {
    Bytes f = kUdpFrame;
    f[23] = 1;
    CHECK_FALSE(decode_packet(f, linktype::kEthernet).has_value());
}

TEST_CASE("payload is bounded by the IP length, not link padding") {
    Bytes f = kUdpFrame;
    f.resize(60, 0);  // Ethernet minimum frame padding
    const auto rec = decode_packet(f, linktype::kEthernet);
    REQUIRE(rec);
    CHECK(rec->payload_length() == 4);
}

TEST_CASE("decode_packet is total on arbitrary bytes") {
    Rng rng(7);
    std::size_t decoded = 0;
    for (int i = 0; i < 20000; ++i) {
        Bytes f;
        if (i % 2 == 0) {
            f.resize(rng.below(120));
            for (auto& b : f) b = static_cast<std::uint8_t>(rng.below(256));
        } else {
            f = (i % 4 == 1) ? kUdpFrame : kTcpSynFrame;
            const auto flips = 1 + rng.below(6);
            for (std::uint64_t k = 0; k < flips; ++k) f[rng.below(f.size())] = static_cast<std::uint8_t>(rng.below(256));
            f.resize(rng.below(f.size() + 1));
        }
        const std::uint32_t lt = std::array<std::uint32_t, 4>{1, 101, 228, 229}[rng.below(4)];
        std::optional<PacketRecord> rec;
        REQUIRE_NOTHROW(rec = decode_packet(f, lt));
        if (rec) {
            ++decoded;
            CHECK(rec->payload_length() <= f.size());
            CHECK((rec->protocol == Transport::TCP || rec->protocol == Transport::UDP));
        }
    }
    CHECK(decoded > 0);
}

TEST_CASE("synthetic frames decode to the generator's intent") {
    for (auto kind : {SynthKind::CAMERA, SynthKind::CONF, SynthKind::SHARE}) {
        SynthProfile prof;
        prof.kind = kind;
        prof.n_flows = 5;
        prof.seed = 11;
        const auto out = synthesize(prof);
        for (const auto& sp : out.packets) {
            const auto rec = decode_packet(sp.frame, linktype::kEthernet, sp.timestamp_us);
            REQUIRE(rec);
            const auto& info = out.flows[sp.flow];
            CHECK(rec->protocol == info.protocol);
            const bool fwd = rec->src_ip == info.client_ip;
            CHECK(rec->src_port == (fwd ? info.client_port : info.server_port));
            CHECK(rec->dst_port == (fwd ? info.server_port : info.client_port));
            CHECK(rec->total_length == sp.frame.size());
            const std::size_t ip_hdr = 20;
            CHECK(14 + ip_hdr + rec->transport_header_length + rec->payload_length() == sp.frame.size());
            if (rec->protocol == Transport::TCP) {
                CHECK(rec->transport_header_length == 4 * (sp.frame[14 + 20 + 12] >> 4));
            } else {
                CHECK(rec->transport_header_length == 8);
            }
        }
    }
}

TEST_CASE("synthetic frames carry valid checksums") {
    SynthProfile prof;
    prof.kind = SynthKind::SHARE;
    const auto out = synthesize(prof);
    for (const auto& sp : out.packets) {
        const std::span<const std::uint8_t> f(sp.frame);
        CHECK(internet_checksum(f.subspan(14, 20)) == 0);
        std::uint32_t pseudo = 0;
        for (std::size_t i = 26; i < 34; i += 2) pseudo += static_cast<std::uint32_t>(f[i] << 8 | f[i + 1]);
        pseudo += f[23];
        pseudo += static_cast<std::uint32_t>(f.size() - 34);
        CHECK(internet_checksum(f.subspan(34), pseudo) == 0);
    }
}
