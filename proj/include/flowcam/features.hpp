#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "flowcam/flow.hpp"

namespace flowcam {

inline constexpr std::size_t kFeatureCount = 77;
inline constexpr std::string_view kFeatureSchemaVersion = "flowcam-cic77/1";

/// Column positions of the flow statistics. The order is the published
/// catalog of the CICFlowMeter CSV and is frozen; see docs/feature_schema.md.
namespace feature {
enum Index : std::size_t {
    FlowDuration,
    TotalFwdPackets,
    TotalBwdPackets,
    TotalLengthFwd,
    TotalLengthBwd,
    FwdPacketLengthMax,
    FwdPacketLengthMin,
    FwdPacketLengthMean,
    FwdPacketLengthStd,
    BwdPacketLengthMax,
    BwdPacketLengthMin,
    BwdPacketLengthMean,
    BwdPacketLengthStd,
    FlowBytesPerSec,
    FlowPacketsPerSec,
    FlowIatMean,
    FlowIatStd,
    FlowIatMax,
    FlowIatMin,
    FwdIatTotal,
    FwdIatMean,
    FwdIatStd,
    FwdIatMax,
    FwdIatMin,
    BwdIatTotal,
    BwdIatMean,
    BwdIatStd,
    BwdIatMax,
    BwdIatMin,
    FwdPshFlags,
    BwdPshFlags,
    FwdUrgFlags,
    BwdUrgFlags,
    FwdHeaderLength,
    BwdHeaderLength,
    FwdPacketsPerSec,
    BwdPacketsPerSec,
    MinPacketLength,
    MaxPacketLength,
    PacketLengthMean,
    PacketLengthStd,
    PacketLengthVariance,
    FinFlagCount,
    SynFlagCount,
    RstFlagCount,
    PshFlagCount,
    AckFlagCount,
    UrgFlagCount,
    CweFlagCount,
    EceFlagCount,
    DownUpRatio,
    AveragePacketSize,
    AvgFwdSegmentSize,
    AvgBwdSegmentSize,
    FwdHeaderLengthDup,
    FwdAvgBytesPerBulk,
    FwdAvgPacketsPerBulk,
    FwdAvgBulkRate,
    BwdAvgBytesPerBulk,
    BwdAvgPacketsPerBulk,
    BwdAvgBulkRate,
    SubflowFwdPackets,
    SubflowFwdBytes,
    SubflowBwdPackets,
    SubflowBwdBytes,
    InitWinBytesFwd,
    InitWinBytesBwd,
    ActDataPktFwd,
    MinSegSizeFwd,
    ActiveMean,
    ActiveStd,
    ActiveMax,
    ActiveMin,
    IdleMean,
    IdleStd,
    IdleMax,
    IdleMin,
};
}  // namespace feature

static_assert(feature::IdleMin + 1 == kFeatureCount);

const std::array<std::string_view, kFeatureCount>& feature_names();

/// Finds a feature by its catalog name.
std::optional<std::size_t> feature_index(std::string_view name);

using FeatureValues = std::array<double, kFeatureCount>;

/// Identity columns carried alongside a feature vector. These never enter
/// the model.
struct FlowIdentity {
    std::string flow_id;
    std::string src_ip;
    std::string dst_ip;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    int protocol = 0;

    bool operator==(const FlowIdentity&) const = default;
};

struct FeatureVector {
    FeatureValues values{};
    FlowIdentity identity;
    std::string label;
};

struct StatSummary {
    double min = 0;
    double max = 0;
    double mean = 0;
    double std = 0;  // sample (n - 1) normalization
    double variance = 0;
    double total = 0;
};

/// Single-pass accumulator (Welford) behind every min/max/mean/std feature.
class RunningStats {
public:
    void add(double x);
    std::size_t count() const noexcept { return n_; }
    StatSummary summary() const;

private:
    std::size_t n_ = 0;
    double mean_ = 0;
    double m2_ = 0;
    double min_ = 0;
    double max_ = 0;
    double total_ = 0;
};

/// Empty input gives all zeros; a single value has zero std and variance.
StatSummary stat_summary(std::span<const double> values);

struct ActivitySegments {
    /// (start, end) timestamps of each active period, in microseconds.
    std::vector<std::pair<std::int64_t, std::int64_t>> active;
    /// Length of each gap that exceeded the threshold, in microseconds.
    std::vector<std::int64_t> idle;
    std::int64_t threshold = 0;
};

/// Splits sorted timestamps at every gap strictly greater than threshold.
ActivitySegments activity_segments(std::span<const std::int64_t> timestamps, std::int64_t threshold);

struct FeatureConfig {
    std::int64_t activity_threshold_us = 5'000'000;
    /// Maximum gap between consecutive packets of one bulk.
    std::int64_t bulk_gap_us = 1'000'000;
    std::size_t bulk_min_packets = 4;
    /// A gap longer than this starts a new subflow.
    std::int64_t subflow_gap_us = 1'000'000;
};

/// Incremental feature computation over a flow's packets in arrival order.
class FlowFeatureAccumulator {
public:
    explicit FlowFeatureAccumulator(FeatureConfig config = {});

    void add(const FlowPacket& pkt);
    FeatureValues finish() const;

private:
    struct BulkTotals {
        double count = 0;
        double packets = 0;
        double bytes = 0;
        double duration_us = 0;
    };
    struct BulkRun {
        bool forward = true;
        std::size_t packets = 0;
        double bytes = 0;
        std::int64_t start = 0;
        std::int64_t last = 0;
    };

    void close_bulk_run(BulkTotals (&totals)[2], const BulkRun& run) const;

    FeatureConfig config_;
    std::size_t packets_ = 0;
    std::int64_t first_ts_ = 0;
    std::int64_t last_ts_ = 0;
    std::optional<std::int64_t> last_fwd_ts_;
    std::optional<std::int64_t> last_bwd_ts_;

    RunningStats fwd_len_, bwd_len_, all_len_, wire_len_;
    RunningStats flow_iat_, fwd_iat_, bwd_iat_;
    RunningStats active_, idle_;
    std::int64_t segment_start_ = 0;

    double fwd_header_ = 0, bwd_header_ = 0;
    double fwd_psh_ = 0, bwd_psh_ = 0, fwd_urg_ = 0, bwd_urg_ = 0;
    std::array<double, 8> flag_counts_{};
    double fwd_data_packets_ = 0;
    double min_fwd_header_ = 0;
    std::optional<std::uint16_t> init_win_fwd_, init_win_bwd_;
    bool seen_fwd_ = false, seen_bwd_ = false;
    std::size_t subflows_ = 0;

    BulkTotals bulk_[2];  // [0] forward, [1] backward
    std::optional<BulkRun> run_;
};

/// All 77 statistics for a completed flow, plus its identity columns.
FeatureVector compute_features(const FlowState& flow, const FeatureConfig& config = {});
FeatureVector compute_features(const FlowState& flow, std::int64_t activity_threshold_us);

FlowIdentity flow_identity(const FlowState& flow);

}  // namespace flowcam
