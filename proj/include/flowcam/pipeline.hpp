#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "flowcam/dataset.hpp"
#include "flowcam/features.hpp"
#include "flowcam/flow.hpp"
#include "flowcam/packet.hpp"

namespace flowcam {

struct LoadStats {
    std::size_t frames = 0;
    std::size_t decoded = 0;
    std::size_t skipped = 0;
    /// True when the capture was not in timestamp order and had to be sorted.
    bool reordered = false;
};

struct LoadedPackets {
    std::vector<PacketRecord> packets;
    LoadStats stats;
};

/// Reads and decodes a capture. Non-TCP/UDP frames are counted as skipped;
/// the result is stably sorted by timestamp.
LoadedPackets load_packets(const std::filesystem::path& path);

struct ExtractConfig {
    AssemblerConfig assembler;
    FeatureConfig features;
    /// Written to every record; may be empty.
    std::string label;
};

struct ExtractResult {
    std::vector<FlowState> flows;
    std::vector<LabeledRecord> records;
    LoadStats stats;
};

/// Features for already assembled flows, in the given order.
std::vector<LabeledRecord> records_from_flows(std::span<const FlowState> flows, const FeatureConfig& config,
                                              const std::string& label);

/// pcap -> packets -> flows -> records, flows ordered by start time.
ExtractResult extract(const std::filesystem::path& pcap, const ExtractConfig& config);

}  // namespace flowcam
