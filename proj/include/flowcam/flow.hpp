#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowcam/packet.hpp"

namespace flowcam {

struct Endpoint {
    IpAddress ip;
    std::uint16_t port = 0;

    auto operator<=>(const Endpoint&) const = default;
};

/// Direction-independent flow identity: endpoints are stored in ascending
/// order so both directions of a conversation map to the same key.
struct FlowKey {
    Endpoint a;
    Endpoint b;
    Transport protocol = Transport::UDP;

    auto operator<=>(const FlowKey&) const = default;
};

struct FlowKeyHash {
    std::size_t operator()(const FlowKey& k) const noexcept;
};

FlowKey canonical_key(const PacketRecord& pkt);

enum class Termination { TIMEOUT, TCP_FIN, TCP_RST, END_OF_CAPTURE };

std::string_view to_string(Termination t);

/// Per-packet data retained by a flow.
struct FlowPacket {
    std::int64_t timestamp_us = 0;
    std::uint32_t total_length = 0;
    std::uint16_t header_length = 0;
    std::uint32_t payload_length = 0;
    std::uint8_t tcp_flags = 0;
    std::optional<std::uint16_t> tcp_window;
    bool forward = true;
    /// Leading payload bytes, kept only when the assembler is configured to.
    std::vector<std::uint8_t> payload_prefix;
};

struct FlowState {
    FlowKey key;
    /// Sender of the first packet; defines the forward direction.
    Endpoint initiator;
    Endpoint responder;
    /// Order in which the assembler opened this flow (0-based).
    std::uint64_t ordinal = 0;
    std::int64_t start_ts = 0;
    std::int64_t last_ts = 0;
    /// All packets in arrival order, each tagged with its direction.
    std::vector<FlowPacket> packets;
    Termination termination = Termination::END_OF_CAPTURE;

    Transport protocol() const noexcept { return key.protocol; }
    std::size_t fwd_count() const noexcept;
    std::size_t bwd_count() const noexcept;
    /// "<src>-<dst>-<sport>-<dport>-<proto>-<ordinal>", oriented by the initiator.
    std::string flow_id() const;
};

struct AssemblerConfig {
    std::int64_t flow_timeout_us = 600'000'000;
    /// Silence after a FIN that closes a half-closed TCP flow.
    std::int64_t fin_idle_us = 1'000'000;
    /// Payload bytes to keep per packet (0 keeps none).
    std::size_t payload_prefix_bytes = 0;
};

/// Groups time-ordered packets into bidirectional flows.
///
/// A flow is emitted when a later packet (of any flow) arrives more than
/// flow_timeout after the flow's first packet, on RST, on the first ACK after
/// FINs in both directions, after fin_idle of silence following any FIN, or at
/// flush(). A packet whose key matches an already emitted flow opens a new one.
class FlowAssembler {
public:
    explicit FlowAssembler(AssemblerConfig config = {});

    /// Throws OutOfOrderTimestamp if pkt is older than the previous packet.
    /// Packets with protocol OTHER are rejected with std::invalid_argument.
    std::vector<FlowState> ingest(const PacketRecord& pkt);

    /// Emits all open flows ordered by (start_ts, ordinal).
    std::vector<FlowState> flush();

    std::size_t open_flows() const noexcept { return open_.size(); }
    const AssemblerConfig& config() const noexcept { return config_; }

private:
    struct OpenFlow {
        FlowState state;
        bool fin_fwd = false;
        bool fin_bwd = false;
        std::int64_t expire_at = 0;
    };
    using ExpiryKey = std::pair<std::int64_t, std::uint64_t>;

    std::int64_t timeout_deadline(const OpenFlow& f) const;
    std::int64_t fin_deadline(const OpenFlow& f) const;
    void schedule(OpenFlow& f);
    FlowState finish(const FlowKey& key, Termination why);

    AssemblerConfig config_;
    std::unordered_map<FlowKey, OpenFlow, FlowKeyHash> open_;
    std::map<ExpiryKey, FlowKey> expiry_;
    std::optional<std::int64_t> last_ts_;
    std::uint64_t next_ordinal_ = 0;
};

/// Runs a complete packet sequence through an assembler and returns every
/// flow, ordered by (start_ts, ordinal).
std::vector<FlowState> assemble_flows(const std::vector<PacketRecord>& packets,
                                      const AssemblerConfig& config = {});

}  // namespace flowcam
