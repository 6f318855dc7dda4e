#include <doctest.h>

#include "flowcam/errors.hpp"
#include "flowcam/flow.hpp"
#include "test_util.hpp"

using namespace flowcam;
using testutil::packet;

namespace tf = tcp_flag;

TEST_CASE("canonical key is direction independent") {
    const auto a = packet(0, "10.0.0.1", 5000, "10.0.0.2", 6000);
    const auto b = packet(0, "10.0.0.2", 6000, "10.0.0.1", 5000);
    CHECK(canonical_key(a) == canonical_key(b));
}

TEST_CASE("protocol is part of the key") {
    const auto u = packet(0, "10.0.0.1", 5000, "10.0.0.2", 6000, Transport::UDP);
    const auto t = packet(0, "10.0.0.1", 5000, "10.0.0.2", 6000, Transport::TCP);
    CHECK_FALSE(canonical_key(u) == canonical_key(t));
}

TEST_CASE("self flow is a valid key") {
    const auto k = canonical_key(packet(0, "10.0.0.1", 80, "10.0.0.1", 80));
    CHECK(k.a == k.b);
}

TEST_CASE("flow window of 600 s splits flows") {
    FlowAssembler as;
    CHECK(as.ingest(packet(0, "10.0.0.1", 5000, "10.0.0.2", 6000)).empty());
    const auto done = as.ingest(packet(601'000'000, "10.0.0.1", 5000, "10.0.0.2", 6000));
    REQUIRE(done.size() == 1);
    CHECK(done[0].packets.size() == 1);
    CHECK(done[0].termination == Termination::TIMEOUT);
    CHECK(as.open_flows() == 1);
    const auto rest = as.flush();
    REQUIRE(rest.size() == 1);
    CHECK(rest[0].start_ts == 601'000'000);
    CHECK(rest[0].flow_id() != done[0].flow_id());
}

TEST_CASE("packet exactly at the window edge stays in the flow") {
    FlowAssembler as;
    as.ingest(packet(0, "10.0.0.1", 5000, "10.0.0.2", 6000));
    CHECK(as.ingest(packet(600'000'000, "10.0.0.2", 6000, "10.0.0.1", 5000)).empty());
    const auto flows = as.flush();
    REQUIRE(flows.size() == 1);
    CHECK(flows[0].packets.size() == 2);
}

TEST_CASE("TCP handshake and FIN close") {
    FlowAssembler as;
    const char* c = "10.0.0.1";
    const char* s = "10.0.0.2";
    std::vector<FlowState> done;
    auto feed = [&](const PacketRecord& p) {
        auto out = as.ingest(p);
        done.insert(done.end(), out.begin(), out.end());
    };
    feed(packet(0, c, 40000, s, 443, Transport::TCP, 0, tf::kSyn));
    feed(packet(10, s, 443, c, 40000, Transport::TCP, 0, tf::kSyn | tf::kAck));
    feed(packet(20, c, 40000, s, 443, Transport::TCP, 0, tf::kAck));
    feed(packet(30, c, 40000, s, 443, Transport::TCP, 0, tf::kFin | tf::kAck));
    feed(packet(40, s, 443, c, 40000, Transport::TCP, 0, tf::kFin | tf::kAck));
    CHECK(done.empty());
    feed(packet(50, c, 40000, s, 443, Transport::TCP, 0, tf::kAck));
    REQUIRE(done.size() == 1);
    CHECK(done[0].termination == Termination::TCP_FIN);
    CHECK(done[0].packets.size() == 6);
    CHECK(done[0].fwd_count() == 4);
    CHECK(done[0].bwd_count() == 2);
    CHECK(as.open_flows() == 0);
}

TEST_CASE("RST closes immediately") {
    FlowAssembler as;
    as.ingest(packet(0, "10.0.0.1", 1, "10.0.0.2", 2, Transport::TCP, 0, tf::kSyn));
    const auto done = as.ingest(packet(5, "10.0.0.2", 2, "10.0.0.1", 1, Transport::TCP, 0, tf::kRst));
    REQUIRE(done.size() == 1);
    CHECK(done[0].termination == Termination::TCP_RST);
    CHECK(done[0].packets.size() == 2);
}

TEST_CASE("half-closed flow ends after one second of silence") {
    FlowAssembler as;
    as.ingest(packet(0, "10.0.0.1", 1, "10.0.0.2", 2, Transport::TCP, 10, tf::kAck));
    as.ingest(packet(100, "10.0.0.1", 1, "10.0.0.2", 2, Transport::TCP, 0, tf::kFin | tf::kAck));
    CHECK(as.ingest(packet(999'000, "10.0.0.9", 9, "10.0.0.8", 8)).empty());
    const auto done = as.ingest(packet(1'000'100, "10.0.0.9", 9, "10.0.0.8", 8));
    REQUIRE(done.size() == 1);
    CHECK(done[0].termination == Termination::TCP_FIN);
    CHECK(done[0].packets.size() == 2);
}

TEST_CASE("a reused key after close opens a new flow") {
    FlowAssembler as;
    as.ingest(packet(0, "10.0.0.1", 1, "10.0.0.2", 2, Transport::TCP, 0, tf::kSyn));
    const auto first = as.ingest(packet(1, "10.0.0.1", 1, "10.0.0.2", 2, Transport::TCP, 0, tf::kRst));
    as.ingest(packet(2, "10.0.0.2", 2, "10.0.0.1", 1, Transport::TCP, 0, tf::kSyn));
    const auto second = as.flush();
    REQUIRE(first.size() == 1);
    REQUIRE(second.size() == 1);
    CHECK(first[0].flow_id() != second[0].flow_id());
    // The responder of the first flow initiated the second.
    CHECK(second[0].initiator.port == 2);
}

TEST_CASE("flush semantics") {
    FlowAssembler as;
    CHECK(as.flush().empty());
    as.ingest(packet(30, "10.0.0.1", 1, "10.0.0.2", 2));
    as.ingest(packet(40, "10.0.0.3", 1, "10.0.0.2", 2));
    as.ingest(packet(40, "10.0.0.4", 1, "10.0.0.2", 2));
    const auto flows = as.flush();
    REQUIRE(flows.size() == 3);
    for (const auto& f : flows) CHECK(f.termination == Termination::END_OF_CAPTURE);
    CHECK(flows[0].start_ts <= flows[1].start_ts);
    CHECK(flows[1].ordinal < flows[2].ordinal);
    CHECK(as.flush().empty());
}

TEST_CASE("single packet then end of capture") {
    const auto flows = assemble_flows({packet(5, "10.0.0.1", 1, "10.0.0.2", 2)});
    REQUIRE(flows.size() == 1);
    CHECK(flows[0].termination == Termination::END_OF_CAPTURE);
}

TEST_CASE("out of order input is rejected") {
    FlowAssembler as;
    as.ingest(packet(10, "10.0.0.1", 1, "10.0.0.2", 2));
    CHECK_THROWS_AS(as.ingest(packet(9, "10.0.0.1", 1, "10.0.0.2", 2)), OutOfOrderTimestamp);
    PacketRecord other = packet(11, "10.0.0.1", 1, "10.0.0.2", 2);
    other.protocol = Transport::OTHER;
    CHECK_THROWS_AS(as.ingest(other), std::invalid_argument);
}

TEST_CASE("flow id is oriented by the initiator") {
    const auto flows = assemble_flows({packet(0, "10.0.0.9", 7, "10.0.0.2", 8)});
    CHECK(flows[0].flow_id() == "10.0.0.9-10.0.0.2-7-8-17-0");
}

namespace {

std::vector<PacketRecord> random_trace(Rng& rng, std::size_t n) {
    static const char* hosts[] = {"10.0.0.1", "10.0.0.2", "10.0.0.3"};
    std::vector<PacketRecord> out;
    std::int64_t t = 0;
    for (std::size_t i = 0; i < n; ++i) {
        t += rng.chance(0.05) ? rng.between(100'000'000, 400'000'000) : rng.between(0, 3'000'000);
        const bool tcp = rng.chance(0.5);
        const auto a = rng.below(3), b = rng.below(3);
        std::uint8_t flags = 0;
        if (tcp) {
            flags = tf::kAck;
            if (rng.chance(0.08)) flags |= tf::kFin;
            if (rng.chance(0.02)) flags |= tf::kRst;
            if (rng.chance(0.05)) flags = tf::kSyn;
        }
        out.push_back(packet(t, hosts[a], static_cast<std::uint16_t>(1000 + rng.below(3)), hosts[b],
                             static_cast<std::uint16_t>(2000 + rng.below(2)), tcp ? Transport::TCP : Transport::UDP,
                             rng.below(100), flags));
    }
    return out;
}

}  // namespace

TEST_CASE("conservation, direction and window properties on random traces") {
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const auto trace = random_trace(rng, 400);
        const auto flows = assemble_flows(trace);
        std::size_t total = 0;
        for (const auto& f : flows) {
            total += f.fwd_count() + f.bwd_count();
            REQUIRE_FALSE(f.packets.empty());
            CHECK(f.packets.front().forward);
            CHECK(f.fwd_count() >= 1);
            CHECK(f.last_ts - f.start_ts <= 600'000'000);
            CHECK(f.packets.back().timestamp_us - f.packets.front().timestamp_us <= 600'000'000);
        }
        CHECK(total == trace.size());
    }
}

TEST_CASE("every stored packet matches its flow key") {
    Rng rng(77);
    const auto trace = random_trace(rng, 2000);
    const auto flows = assemble_flows(trace);
    std::size_t checked = 0;
    for (const auto& f : flows) {
        CHECK(f.key == FlowKey{std::min(f.initiator, f.responder), std::max(f.initiator, f.responder), f.key.protocol});
        for (const auto& p : f.packets) CHECK(p.timestamp_us >= f.start_ts);
        checked += f.packets.size();
    }
    CHECK(checked == trace.size());
}

TEST_CASE("a packet is forward iff it comes from the initiator") {
    Rng rng(78);
    std::vector<PacketRecord> trace;
    const bool a_first = rng.chance(0.5);
    for (std::size_t i = 0; i < 500; ++i) {
        const bool from_a = i == 0 ? a_first : rng.chance(0.5);
        // Even payloads come from the first sender, odd ones from the peer.
        const std::size_t len = 2 * i + (from_a == a_first ? 0 : 1);
        trace.push_back(from_a ? packet(static_cast<std::int64_t>(i) * 1000, "10.0.0.1", 1, "10.0.0.2", 2,
                                        Transport::UDP, len)
                               : packet(static_cast<std::int64_t>(i) * 1000, "10.0.0.2", 2, "10.0.0.1", 1,
                                        Transport::UDP, len));
    }
    const auto flows = assemble_flows(trace);
    REQUIRE(flows.size() == 1);
    for (const auto& p : flows[0].packets) CHECK(p.forward == (p.payload_length % 2 == 0));
}

TEST_CASE("assembly is deterministic") {
    Rng r1(5), r2(5);
    const auto t1 = random_trace(r1, 1000);
    const auto t2 = random_trace(r2, 1000);
    const auto a = assemble_flows(t1);
    const auto b = assemble_flows(t2);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].flow_id() == b[i].flow_id());
        CHECK(a[i].packets.size() == b[i].packets.size());
        CHECK(a[i].termination == b[i].termination);
    }
}
