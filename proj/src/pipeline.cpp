#include "flowcam/pipeline.hpp"

#include <algorithm>

#include "flowcam/pcap.hpp"

namespace flowcam {

LoadedPackets load_packets(const std::filesystem::path& path) {
    LoadedPackets out;
    CaptureReader reader(path);
    while (auto frame = reader.next()) {
        ++out.stats.frames;
        auto pkt = decode_packet(*frame);
        if (!pkt) {
            ++out.stats.skipped;
            continue;
        }
        if (!out.packets.empty() && pkt->timestamp_us < out.packets.back().timestamp_us) out.stats.reordered = true;
        out.packets.push_back(std::move(*pkt));
    }
    out.stats.decoded = out.packets.size();
    if (out.stats.reordered) {
        std::stable_sort(out.packets.begin(), out.packets.end(),
                         [](const PacketRecord& a, const PacketRecord& b) { return a.timestamp_us < b.timestamp_us; });
    }
    return out;
}

std::vector<LabeledRecord> records_from_flows(std::span<const FlowState> flows, const FeatureConfig& config,
                                              const std::string& label) {
    std::vector<LabeledRecord> records;
    records.reserve(flows.size());
    for (const auto& flow : flows) {
        FeatureVector fv = compute_features(flow, config);
        records.push_back({std::move(fv.identity), fv.values, label});
    }
    return records;
}

ExtractResult extract(const std::filesystem::path& pcap, const ExtractConfig& config) {
    ExtractResult result;
    LoadedPackets loaded = load_packets(pcap);
    result.stats = loaded.stats;
    result.flows = assemble_flows(loaded.packets, config.assembler);
    result.records = records_from_flows(result.flows, config.features, config.label);
    return result;
}

}  // namespace flowcam
