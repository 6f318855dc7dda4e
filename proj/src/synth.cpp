#include "flowcam/synth.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include <json.hpp>

#include "flowcam/errors.hpp"
#include "flowcam/io_util.hpp"
#include "flowcam/pcap.hpp"
#include "flowcam/rng.hpp"

namespace flowcam {

namespace {

constexpr std::size_t kMaxFlows = 50'000;
constexpr std::uint16_t kFirstClientPort = 10'000;

void put16(std::vector<std::uint8_t>& out, std::size_t at, std::uint16_t v) {
    out[at] = static_cast<std::uint8_t>(v >> 8);
    out[at + 1] = static_cast<std::uint8_t>(v);
}

void put32(std::vector<std::uint8_t>& out, std::size_t at, std::uint32_t v) {
    put16(out, at, static_cast<std::uint16_t>(v >> 16));
    put16(out, at + 2, static_cast<std::uint16_t>(v));
}

void push16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void push32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    push16(out, static_cast<std::uint16_t>(v >> 16));
    push16(out, static_cast<std::uint16_t>(v));
}

std::array<std::uint8_t, 6> mac_for(const IpAddress& ip) {
    return {0x02, 0x00, ip.bytes[0], ip.bytes[1], ip.bytes[2], ip.bytes[3]};
}

std::vector<std::uint8_t> random_bytes(Rng& rng, std::size_t n) {
    std::vector<std::uint8_t> out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng.below(256));
    return out;
}

// One packet of a flow before framing.
struct Emit {
    std::int64_t ts = 0;
    bool forward = true;
    std::uint8_t flags = 0;
    std::uint32_t seq = 0;
    std::uint32_t ack = 0;
    std::uint16_t window = 0;
    bool mss_option = false;
    std::vector<std::uint8_t> payload;
};

struct FlowPlan {
    SynthFlowInfo info;
    std::vector<Emit> packets;
};

IpAddress server_address(Rng& rng, std::uint8_t a, std::uint8_t b) {
    return IpAddress::v4(a, b, static_cast<std::uint8_t>(rng.below(256)),
                         static_cast<std::uint8_t>(1 + rng.below(254)));
}

// Long-lived upstream video: ~600 byte datagrams from the camera, a small
// control packet back every ~20 datagrams, occasional multi-second pauses.
void plan_camera(FlowPlan& plan, Rng& rng) {
    static constexpr std::array<std::uint16_t, 4> kServerPorts = {10001, 32100, 6001, 8000};
    auto& info = plan.info;
    info.protocol = Transport::UDP;
    info.server_ip = server_address(rng, 47, 88);
    info.server_port = kServerPorts[rng.below(kServerPorts.size())];

    const auto n_fwd = static_cast<std::size_t>(rng.between(80, 200));
    const double mean_iat = rng.uniform(25'000, 45'000);
    std::int64_t t = info.start_us;
    for (std::size_t i = 0; i < n_fwd; ++i) {
        if (i > 0) {
            t += 1'000 + static_cast<std::int64_t>(rng.exponential(mean_iat));
            if (rng.chance(0.01)) {
                t += rng.between(6'000'000, 12'000'000);
                ++info.pauses;
            }
        }
        Emit e;
        e.ts = t;
        e.payload = random_bytes(rng, static_cast<std::size_t>(rng.between(500, 700)));
        e.payload[0] = 0x01;  // vendor framing, never RTP-shaped
        plan.packets.push_back(std::move(e));
        if (rng.chance(0.05)) {
            Emit back;
            back.ts = t + rng.between(2'000, 10'000);
            back.forward = false;
            back.payload = random_bytes(rng, static_cast<std::size_t>(rng.between(40, 120)));
            back.payload[0] = 0x02;
            plan.packets.push_back(std::move(back));
        }
    }
    info.mean_iat_us = mean_iat + 1'000;
}

struct ConfApp {
    const char* name;
    std::uint16_t server_port;
    std::array<std::uint8_t, 2> payload_types;
};

constexpr std::array<ConfApp, 3> kConfApps = {{
    {"Skype", 0, {9, 122}},
    {"Teams", 3480, {104, 122}},
    {"Meet", 19305, {111, 97}},
}};

std::vector<std::uint8_t> rtp_packet(Rng& rng, std::uint8_t pt, bool marker, std::uint16_t seq, std::uint32_t ts,
                                     std::uint32_t ssrc) {
    std::vector<std::uint8_t> p;
    p.push_back(0x90);  // version 2, extension present
    p.push_back(static_cast<std::uint8_t>((marker ? 0x80 : 0x00) | pt));
    push16(p, seq);
    push32(p, ts);
    push32(p, ssrc);
    push16(p, 0xBEDE);
    push16(p, 0);
    const auto media = static_cast<std::size_t>(rng.between(200, 420)) - p.size();
    auto body = random_bytes(rng, media);
    p.insert(p.end(), body.begin(), body.end());
    return p;
}

std::vector<std::uint8_t> rtcp_sender_report(Rng& rng, std::uint32_t ssrc, std::uint32_t rtp_ts,
                                              std::uint32_t packets, std::uint32_t octets) {
    std::vector<std::uint8_t> p;
    p.push_back(0x80);
    p.push_back(200);
    push16(p, 6);
    push32(p, ssrc);
    push32(p, static_cast<std::uint32_t>(rng.next_u64()));
    push32(p, static_cast<std::uint32_t>(rng.next_u64()));
    push32(p, rtp_ts);
    push32(p, packets);
    push32(p, octets);
    return p;
}

// Symmetric RTP media in both directions with occasional sender reports.
void plan_conf(FlowPlan& plan, Rng& rng) {
    auto& info = plan.info;
    const ConfApp& app = kConfApps[rng.below(kConfApps.size())];
    info.protocol = Transport::UDP;
    info.app = app.name;
    info.server_ip = server_address(rng, 52, 112);
    info.server_port = app.server_port ? app.server_port : static_cast<std::uint16_t>(rng.between(30'000, 39'999));
    const std::uint8_t pt = app.payload_types[rng.below(2)];
    info.payload_type = pt;
    const bool video = pt >= 96 && pt != 104 && pt != 111;
    const std::uint32_t ts_step = video ? 3000 : 160;
    const double mean_iat = rng.uniform(18'000, 24'000);

    const auto n_per_dir = static_cast<std::size_t>(rng.between(60, 150));
    for (int dir = 0; dir < 2; ++dir) {
        const bool forward = dir == 0;
        const auto ssrc = static_cast<std::uint32_t>(rng.next_u64());
        (forward ? info.ssrc_fwd : info.ssrc_bwd) = ssrc;
        auto seq = static_cast<std::uint16_t>(rng.below(65536));
        auto rtp_ts = static_cast<std::uint32_t>(rng.next_u64());
        std::int64_t t = info.start_us + (forward ? 0 : rng.between(5'000, 60'000));
        std::uint32_t sent = 0;
        std::uint32_t octets = 0;
        for (std::size_t i = 0; i < n_per_dir; ++i) {
            if (i > 0) t += 2'000 + static_cast<std::int64_t>(rng.exponential(mean_iat - 2'000));
            Emit e;
            e.ts = t;
            e.forward = forward;
            e.payload = rtp_packet(rng, pt, video && i % 30 == 29, seq, rtp_ts, ssrc);
            octets += static_cast<std::uint32_t>(e.payload.size() - 12);
            ++sent;
            ++seq;
            rtp_ts += ts_step;
            ++info.rtp_packets;
            plan.packets.push_back(std::move(e));
            if (i % 50 == 49) {
                Emit sr;
                sr.ts = t + rng.between(100, 1'000);
                sr.forward = forward;
                sr.payload = rtcp_sender_report(rng, ssrc, rtp_ts, sent, octets);
                ++info.rtcp_packets;
                plan.packets.push_back(std::move(sr));
            }
        }
    }
    info.mean_iat_us = mean_iat;
}

// HTTPS-style download: handshake, a small request, bursts of full-size
// segments with sparse client ACKs, then FIN/FIN/ACK.
void plan_share(FlowPlan& plan, Rng& rng) {
    auto& info = plan.info;
    info.protocol = Transport::TCP;
    info.server_ip = server_address(rng, 142, 250);
    info.server_port = 443;

    const std::int64_t rtt = rng.between(10'000, 40'000);
    const auto client_win = static_cast<std::uint16_t>(rng.between(29'200, 64'240));
    const std::uint16_t server_win = 65'535;
    auto cseq = static_cast<std::uint32_t>(rng.next_u64());
    auto sseq = static_cast<std::uint32_t>(rng.next_u64());
    std::int64_t t = info.start_us;

    auto emit = [&](bool forward, std::uint8_t flags, std::vector<std::uint8_t> payload, bool mss = false) {
        Emit e;
        e.ts = t;
        e.forward = forward;
        e.flags = flags;
        e.seq = forward ? cseq : sseq;
        e.ack = (flags & tcp_flag::kAck) ? (forward ? sseq : cseq) : 0;
        e.window = forward ? client_win : server_win;
        e.mss_option = mss;
        const auto advance = static_cast<std::uint32_t>(payload.size()) +
                             ((flags & (tcp_flag::kSyn | tcp_flag::kFin)) ? 1u : 0u);
        (forward ? cseq : sseq) += advance;
        e.payload = std::move(payload);
        plan.packets.push_back(std::move(e));
    };

    emit(true, tcp_flag::kSyn, {}, true);
    t += rtt / 2;
    emit(false, tcp_flag::kSyn | tcp_flag::kAck, {}, true);
    t += rtt / 2;
    emit(true, tcp_flag::kAck, {});
    t += rng.between(50, 500);

    auto hello = random_bytes(rng, static_cast<std::size_t>(rng.between(300, 600)));
    hello[0] = 0x16;  // TLS handshake record
    hello[1] = 0x03;
    hello[2] = 0x01;
    emit(true, tcp_flag::kPsh | tcp_flag::kAck, std::move(hello));

    const auto n_segments = static_cast<std::size_t>(rng.between(60, 200));
    std::size_t since_ack = 0;
    std::size_t burst_left = static_cast<std::size_t>(rng.between(10, 40));
    t += rtt / 2;
    double iat_sum = 0;
    for (std::size_t i = 0; i < n_segments; ++i) {
        std::int64_t gap = 50 + static_cast<std::int64_t>(rng.exponential(1'500));
        if (burst_left == 0) {
            gap += rng.between(200'000, 2'000'000);
            burst_left = static_cast<std::size_t>(rng.between(10, 40));
        }
        if (i > 0) {
            t += gap;
            iat_sum += static_cast<double>(gap);
        }
        --burst_left;
        auto data = random_bytes(rng, static_cast<std::size_t>(rng.between(1400, 1460)));
        data[0] = 0x17;  // TLS application data
        data[1] = 0x03;
        data[2] = 0x03;
        const bool last_in_burst = burst_left == 0 || i + 1 == n_segments;
        emit(false, static_cast<std::uint8_t>(tcp_flag::kAck | (last_in_burst ? tcp_flag::kPsh : 0)), std::move(data));
        if (++since_ack >= 10 || (since_ack >= 2 && rng.chance(0.05))) {
            t += rng.between(20, 200);
            emit(true, tcp_flag::kAck, {});
            since_ack = 0;
        }
    }
    t += rng.between(1'000, 50'000);
    emit(true, tcp_flag::kFin | tcp_flag::kAck, {});
    t += rtt / 2;
    emit(false, tcp_flag::kFin | tcp_flag::kAck, {});
    t += rtt / 2;
    emit(true, tcp_flag::kAck, {});
    info.mean_iat_us = n_segments > 1 ? iat_sum / static_cast<double>(n_segments - 1) : 0;
}

std::vector<std::uint8_t> mss_option() { return {0x02, 0x04, 0x05, 0xB4}; }

}  // namespace

std::string_view to_string(SynthKind kind) {
    switch (kind) {
        case SynthKind::CAMERA: return "camera";
        case SynthKind::CONF: return "conf";
        case SynthKind::SHARE: return "share";
    }
    return "camera";
}

std::optional<SynthKind> parse_synth_kind(std::string_view text) {
    std::string lower(text);
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (auto k : {SynthKind::CAMERA, SynthKind::CONF, SynthKind::SHARE}) {
        if (lower == to_string(k)) return k;
    }
    return std::nullopt;
}

std::string_view synth_label(SynthKind kind) {
    switch (kind) {
        case SynthKind::CAMERA: return "IoTCam";
        case SynthKind::CONF: return "Conf";
        case SynthKind::SHARE: return "Share";
    }
    return "Others";
}

std::uint16_t internet_checksum(std::span<const std::uint8_t> data, std::uint32_t initial) {
    std::uint64_t sum = initial;
    std::size_t i = 0;
    for (; i + 1 < data.size(); i += 2) sum += static_cast<std::uint32_t>(data[i] << 8 | data[i + 1]);
    if (i < data.size()) sum += static_cast<std::uint32_t>(data[i] << 8);
    while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
    return static_cast<std::uint16_t>(~sum & 0xFFFF);
}

std::vector<std::uint8_t> build_frame(const FrameSpec& spec, std::span<const std::uint8_t> payload) {
    if (spec.src_ip.is_v6() || spec.dst_ip.is_v6()) throw std::invalid_argument("build_frame supports IPv4 only");
    if (spec.protocol == Transport::OTHER) throw std::invalid_argument("build_frame needs TCP or UDP");
    const bool tcp = spec.protocol == Transport::TCP;

    std::vector<std::uint8_t> options = spec.tcp_options;
    while (options.size() % 4) options.push_back(0);
    const std::size_t l4_header = tcp ? 20 + options.size() : 8;
    const std::size_t ip_total = 20 + l4_header + payload.size();
    if (ip_total > 65'535 || l4_header > 60) throw std::invalid_argument("frame too large");

    std::vector<std::uint8_t> f(14 + ip_total, 0);
    const auto dmac = mac_for(spec.dst_ip);
    const auto smac = mac_for(spec.src_ip);
    std::copy(dmac.begin(), dmac.end(), f.begin());
    std::copy(smac.begin(), smac.end(), f.begin() + 6);
    put16(f, 12, 0x0800);

    constexpr std::size_t ip = 14;
    f[ip] = 0x45;
    put16(f, ip + 2, static_cast<std::uint16_t>(ip_total));
    put16(f, ip + 4, spec.ip_id);
    put16(f, ip + 6, 0x4000);  // DF
    f[ip + 8] = spec.ttl;
    f[ip + 9] = static_cast<std::uint8_t>(spec.protocol);
    std::copy_n(spec.src_ip.bytes.begin(), 4, f.begin() + ip + 12);
    std::copy_n(spec.dst_ip.bytes.begin(), 4, f.begin() + ip + 16);
    put16(f, ip + 10, internet_checksum(std::span(f).subspan(ip, 20)));

    constexpr std::size_t l4 = ip + 20;
    put16(f, l4, spec.src_port);
    put16(f, l4 + 2, spec.dst_port);
    std::size_t checksum_at = 0;
    if (tcp) {
        put32(f, l4 + 4, spec.seq);
        put32(f, l4 + 8, spec.ack);
        f[l4 + 12] = static_cast<std::uint8_t>((l4_header / 4) << 4);
        f[l4 + 13] = spec.tcp_flags;
        put16(f, l4 + 14, spec.window);
        std::copy(options.begin(), options.end(), f.begin() + l4 + 20);
        checksum_at = l4 + 16;
    } else {
        put16(f, l4 + 4, static_cast<std::uint16_t>(l4_header + payload.size()));
        checksum_at = l4 + 6;
    }
    std::copy(payload.begin(), payload.end(), f.begin() + static_cast<std::ptrdiff_t>(l4 + l4_header));

    std::uint32_t pseudo = 0;
    for (std::size_t i = 0; i < 4; i += 2) {
        pseudo += static_cast<std::uint32_t>(spec.src_ip.bytes[i] << 8 | spec.src_ip.bytes[i + 1]);
        pseudo += static_cast<std::uint32_t>(spec.dst_ip.bytes[i] << 8 | spec.dst_ip.bytes[i + 1]);
    }
    pseudo += static_cast<std::uint32_t>(spec.protocol);
    pseudo += static_cast<std::uint32_t>(ip_total - 20);
    std::uint16_t sum = internet_checksum(std::span(f).subspan(l4), pseudo);
    if (!tcp && sum == 0) sum = 0xFFFF;
    put16(f, checksum_at, sum);
    return f;
}

SynthOutput synthesize(const SynthProfile& profile) {
    if (profile.n_flows == 0) throw std::invalid_argument("n_flows must be at least 1");
    if (profile.n_flows > kMaxFlows) throw std::invalid_argument("n_flows must not exceed 50000");
    if (profile.spread_us < 0) throw std::invalid_argument("spread must be non-negative");

    const auto kind_salt = static_cast<std::uint64_t>(profile.kind) + 1;
    const std::uint8_t subnet = profile.kind == SynthKind::CAMERA ? 10 : profile.kind == SynthKind::CONF ? 20 : 30;

    SynthOutput out;
    std::vector<std::tuple<std::int64_t, std::size_t, std::size_t>> order;
    std::vector<FlowPlan> plans(profile.n_flows);
    for (std::size_t i = 0; i < profile.n_flows; ++i) {
        Rng rng(mix_seed(profile.seed, kind_salt << 32 | i));
        FlowPlan& plan = plans[i];
        plan.info.index = i;
        plan.info.kind = profile.kind;
        plan.info.client_ip = IpAddress::v4(192, 168, subnet, static_cast<std::uint8_t>(2 + i % 250));
        plan.info.client_port = static_cast<std::uint16_t>(kFirstClientPort + i);
        plan.info.start_us = profile.start_us + rng.between(0, profile.spread_us);
        switch (profile.kind) {
            case SynthKind::CAMERA: plan_camera(plan, rng); break;
            case SynthKind::CONF: plan_conf(plan, rng); break;
            case SynthKind::SHARE: plan_share(plan, rng); break;
        }
        std::stable_sort(plan.packets.begin(), plan.packets.end(),
                         [](const Emit& a, const Emit& b) { return a.ts < b.ts; });
        plan.info.end_us = plan.packets.back().ts;
        for (std::size_t p = 0; p < plan.packets.size(); ++p) {
            (plan.packets[p].forward ? plan.info.fwd_packets : plan.info.bwd_packets)++;
            order.emplace_back(plan.packets[p].ts, i, p);
        }
    }
    std::sort(order.begin(), order.end());

    out.packets.reserve(order.size());
    std::vector<std::uint16_t> ip_ids(profile.n_flows * 2, 0);
    for (const auto& [ts, flow, p] : order) {
        const FlowPlan& plan = plans[flow];
        const Emit& e = plan.packets[p];
        FrameSpec spec;
        spec.src_ip = e.forward ? plan.info.client_ip : plan.info.server_ip;
        spec.dst_ip = e.forward ? plan.info.server_ip : plan.info.client_ip;
        spec.src_port = e.forward ? plan.info.client_port : plan.info.server_port;
        spec.dst_port = e.forward ? plan.info.server_port : plan.info.client_port;
        spec.protocol = plan.info.protocol;
        spec.tcp_flags = e.flags;
        spec.seq = e.seq;
        spec.ack = e.ack;
        spec.window = e.window;
        if (e.mss_option) spec.tcp_options = mss_option();
        spec.ip_id = ip_ids[flow * 2 + (e.forward ? 0 : 1)]++;
        spec.ttl = e.forward ? 64 : 54;
        out.packets.push_back({ts, flow, build_frame(spec, e.payload)});
    }
    out.flows.reserve(plans.size());
    for (auto& plan : plans) out.flows.push_back(std::move(plan.info));
    return out;
}

std::string manifest_to_jsonl(std::span<const SynthFlowInfo> flows) {
    std::string out;
    for (const auto& f : flows) {
        nlohmann::ordered_json j;
        j["flow"] = f.index;
        j["kind"] = to_string(f.kind);
        j["label"] = synth_label(f.kind);
        j["protocol"] = to_string(f.protocol);
        j["client"] = f.client_ip.to_string() + ":" + std::to_string(f.client_port);
        j["server"] = f.server_ip.to_string() + ":" + std::to_string(f.server_port);
        j["start_us"] = f.start_us;
        j["end_us"] = f.end_us;
        j["packets"] = f.packets();
        j["fwd_packets"] = f.fwd_packets;
        j["bwd_packets"] = f.bwd_packets;
        j["pauses"] = f.pauses;
        j["mean_iat_us"] = f.mean_iat_us;
        if (!f.app.empty()) j["app"] = f.app;
        if (f.payload_type) {
            j["payload_type"] = *f.payload_type;
            j["ssrc_fwd"] = f.ssrc_fwd;
            j["ssrc_bwd"] = f.ssrc_bwd;
            j["rtp_packets"] = f.rtp_packets;
            j["rtcp_packets"] = f.rtcp_packets;
        }
        std::vector<std::string> markers;
        if (f.rtp_packets) markers.emplace_back("rtp-v2");
        if (f.rtcp_packets) markers.emplace_back("rtcp-sr");
        if (f.kind == SynthKind::SHARE) markers.emplace_back("tls-records");
        j["markers"] = markers;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<SynthFlowInfo> generate(const SynthProfile& profile, const std::filesystem::path& pcap_path,
                                    std::optional<std::filesystem::path> manifest_path) {
    SynthOutput synth = synthesize(profile);
    PcapWriter writer(pcap_path);
    for (const auto& p : synth.packets) writer.write(p.timestamp_us, p.frame);
    const auto manifest = manifest_path.value_or(std::filesystem::path(pcap_path.string() + ".manifest.jsonl"));
    write_file_atomic(manifest, manifest_to_jsonl(synth.flows));
    writer.commit();
    return std::move(synth.flows);
}

}  // namespace flowcam
