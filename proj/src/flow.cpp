#include "flowcam/flow.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "flowcam/errors.hpp"

namespace flowcam {

namespace {

constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();

void sort_by_start(std::vector<FlowState>& flows) {
    std::sort(flows.begin(), flows.end(), [](const FlowState& x, const FlowState& y) {
        return std::tie(x.start_ts, x.ordinal) < std::tie(y.start_ts, y.ordinal);
    });
}

}  // namespace

std::size_t FlowKeyHash::operator()(const FlowKey& k) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 0x100000001b3ULL;
    };
    for (const Endpoint* e : {&k.a, &k.b}) {
        for (std::size_t i = 0; i < e->ip.length; ++i) mix(e->ip.bytes[i]);
        mix(e->port);
    }
    mix(static_cast<std::uint64_t>(k.protocol));
    return static_cast<std::size_t>(h);
}

FlowKey canonical_key(const PacketRecord& pkt) {
    Endpoint src{pkt.src_ip, pkt.src_port};
    Endpoint dst{pkt.dst_ip, pkt.dst_port};
    if (dst < src) std::swap(src, dst);
    return FlowKey{src, dst, pkt.protocol};
}

std::string_view to_string(Termination t) {
    switch (t) {
        case Termination::TIMEOUT: return "TIMEOUT";
        case Termination::TCP_FIN: return "TCP_FIN";
        case Termination::TCP_RST: return "TCP_RST";
        case Termination::END_OF_CAPTURE: return "END_OF_CAPTURE";
    }
    return "?";
}

std::size_t FlowState::fwd_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(packets.begin(), packets.end(), [](const FlowPacket& p) { return p.forward; }));
}

std::size_t FlowState::bwd_count() const noexcept { return packets.size() - fwd_count(); }

std::string FlowState::flow_id() const {
    return initiator.ip.to_string() + "-" + responder.ip.to_string() + "-" +
           std::to_string(initiator.port) + "-" + std::to_string(responder.port) + "-" +
           std::to_string(static_cast<int>(key.protocol)) + "-" + std::to_string(ordinal);
}

FlowAssembler::FlowAssembler(AssemblerConfig config) : config_(config) {}

std::int64_t FlowAssembler::timeout_deadline(const OpenFlow& f) const {
    // Expired once a packet arrives strictly later than start + timeout.
    return f.state.start_ts + config_.flow_timeout_us + 1;
}

std::int64_t FlowAssembler::fin_deadline(const OpenFlow& f) const {
    if (!(f.fin_fwd || f.fin_bwd)) return kNever;
    return f.state.last_ts + config_.fin_idle_us;
}

void FlowAssembler::schedule(OpenFlow& f) {
    expiry_.erase({f.expire_at, f.state.ordinal});
    f.expire_at = std::min(timeout_deadline(f), fin_deadline(f));
    expiry_.emplace(ExpiryKey{f.expire_at, f.state.ordinal}, f.state.key);
}

FlowState FlowAssembler::finish(const FlowKey& key, Termination why) {
    auto it = open_.find(key);
    expiry_.erase({it->second.expire_at, it->second.state.ordinal});
    FlowState out = std::move(it->second.state);
    out.termination = why;
    open_.erase(it);
    return out;
}

std::vector<FlowState> FlowAssembler::ingest(const PacketRecord& pkt) {
    if (pkt.protocol != Transport::TCP && pkt.protocol != Transport::UDP) {
        throw std::invalid_argument("flow assembler accepts only TCP and UDP packets");
    }
    if (last_ts_ && pkt.timestamp_us < *last_ts_) {
        throw OutOfOrderTimestamp("packet at " + std::to_string(pkt.timestamp_us) +
                                  " us precedes previous packet at " + std::to_string(*last_ts_) + " us");
    }
    last_ts_ = pkt.timestamp_us;

    std::vector<FlowState> done;
    while (!expiry_.empty() && expiry_.begin()->first.first <= pkt.timestamp_us) {
        const FlowKey key = expiry_.begin()->second;
        const OpenFlow& f = open_.at(key);
        const Termination why =
            fin_deadline(f) <= timeout_deadline(f) ? Termination::TCP_FIN : Termination::TIMEOUT;
        done.push_back(finish(key, why));
    }

    const FlowKey key = canonical_key(pkt);
    auto [it, inserted] = open_.try_emplace(key);
    OpenFlow& flow = it->second;
    if (inserted) {
        flow.state.key = key;
        flow.state.initiator = Endpoint{pkt.src_ip, pkt.src_port};
        flow.state.responder = Endpoint{pkt.dst_ip, pkt.dst_port};
        flow.state.ordinal = next_ordinal_++;
        flow.state.start_ts = pkt.timestamp_us;
        flow.expire_at = kNever;
    }

    const bool forward = Endpoint{pkt.src_ip, pkt.src_port} == flow.state.initiator;
    FlowPacket fp;
    fp.timestamp_us = pkt.timestamp_us;
    fp.total_length = pkt.total_length;
    fp.header_length = pkt.transport_header_length;
    fp.payload_length = static_cast<std::uint32_t>(pkt.payload_length());
    fp.tcp_flags = pkt.tcp_flags;
    fp.tcp_window = pkt.tcp_window;
    fp.forward = forward;
    if (config_.payload_prefix_bytes > 0) {
        const auto n = std::min(config_.payload_prefix_bytes, pkt.payload.size());
        fp.payload_prefix.assign(pkt.payload.begin(), pkt.payload.begin() + static_cast<std::ptrdiff_t>(n));
    }
    flow.state.packets.push_back(std::move(fp));
    flow.state.last_ts = pkt.timestamp_us;

    if (pkt.protocol == Transport::TCP) {
        const bool both_fins_before = flow.fin_fwd && flow.fin_bwd;
        if (pkt.has_flag(tcp_flag::kRst)) {
            done.push_back(finish(key, Termination::TCP_RST));
            return done;
        }
        if (both_fins_before && pkt.has_flag(tcp_flag::kAck)) {
            done.push_back(finish(key, Termination::TCP_FIN));
            return done;
        }
        if (pkt.has_flag(tcp_flag::kFin)) (forward ? flow.fin_fwd : flow.fin_bwd) = true;
    }
    schedule(flow);
    return done;
}

std::vector<FlowState> FlowAssembler::flush() {
    std::vector<FlowState> done;
    done.reserve(open_.size());
    for (auto& [key, f] : open_) {
        f.state.termination = Termination::END_OF_CAPTURE;
        done.push_back(std::move(f.state));
    }
    open_.clear();
    expiry_.clear();
    sort_by_start(done);
    return done;
}

std::vector<FlowState> assemble_flows(const std::vector<PacketRecord>& packets,
                                      const AssemblerConfig& config) {
    FlowAssembler assembler(config);
    std::vector<FlowState> flows;
    for (const auto& p : packets) {
        if (p.protocol != Transport::TCP && p.protocol != Transport::UDP) continue;
        for (auto& f : assembler.ingest(p)) flows.push_back(std::move(f));
    }
    for (auto& f : assembler.flush()) flows.push_back(std::move(f));
    sort_by_start(flows);
    return flows;
}

}  // namespace flowcam
