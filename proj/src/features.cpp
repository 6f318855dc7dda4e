#include "flowcam/features.hpp"

#include <algorithm>
#include <cmath>

namespace flowcam {

namespace {

constexpr std::array<std::string_view, kFeatureCount> kNames = {
    "Flow Duration",
    "Total Fwd Packets",
    "Total Backward Packets",
    "Total Length of Fwd Packets",
    "Total Length of Bwd Packets",
    "Fwd Packet Length Max",
    "Fwd Packet Length Min",
    "Fwd Packet Length Mean",
    "Fwd Packet Length Std",
    "Bwd Packet Length Max",
    "Bwd Packet Length Min",
    "Bwd Packet Length Mean",
    "Bwd Packet Length Std",
    "Flow Bytes/s",
    "Flow Packets/s",
    "Flow IAT Mean",
    "Flow IAT Std",
    "Flow IAT Max",
    "Flow IAT Min",
    "Fwd IAT Total",
    "Fwd IAT Mean",
    "Fwd IAT Std",
    "Fwd IAT Max",
    "Fwd IAT Min",
    "Bwd IAT Total",
    "Bwd IAT Mean",
    "Bwd IAT Std",
    "Bwd IAT Max",
    "Bwd IAT Min",
    "Fwd PSH Flags",
    "Bwd PSH Flags",
    "Fwd URG Flags",
    "Bwd URG Flags",
    "Fwd Header Length",
    "Bwd Header Length",
    "Fwd Packets/s",
    "Bwd Packets/s",
    "Min Packet Length",
    "Max Packet Length",
    "Packet Length Mean",
    "Packet Length Std",
    "Packet Length Variance",
    "FIN Flag Count",
    "SYN Flag Count",
    "RST Flag Count",
    "PSH Flag Count",
    "ACK Flag Count",
    "URG Flag Count",
    "CWE Flag Count",
    "ECE Flag Count",
    "Down/Up Ratio",
    "Average Packet Size",
    "Avg Fwd Segment Size",
    "Avg Bwd Segment Size",
    "Fwd Header Length.1",
    "Fwd Avg Bytes/Bulk",
    "Fwd Avg Packets/Bulk",
    "Fwd Avg Bulk Rate",
    "Bwd Avg Bytes/Bulk",
    "Bwd Avg Packets/Bulk",
    "Bwd Avg Bulk Rate",
    "Subflow Fwd Packets",
    "Subflow Fwd Bytes",
    "Subflow Bwd Packets",
    "Subflow Bwd Bytes",
    "Init Win Bytes Fwd",
    "Init Win Bytes Bwd",
    "Act Data Pkt Fwd",
    "Min Seg Size Fwd",
    "Active Mean",
    "Active Std",
    "Active Max",
    "Active Min",
    "Idle Mean",
    "Idle Std",
    "Idle Max",
    "Idle Min",
};

// Flag-count columns in catalog order, FIN through ECE.
constexpr std::array<std::uint8_t, 8> kFlagOrder = {
    tcp_flag::kFin, tcp_flag::kSyn, tcp_flag::kRst, tcp_flag::kPsh,
    tcp_flag::kAck, tcp_flag::kUrg, tcp_flag::kCwe, tcp_flag::kEce,
};

double per_second(double amount, std::int64_t duration_us) {
    return duration_us > 0 ? amount / (static_cast<double>(duration_us) / 1e6) : 0.0;
}

void put_stats(FeatureValues& v, std::size_t max_i, std::size_t min_i, std::size_t mean_i,
               std::size_t std_i, const StatSummary& s) {
    v[max_i] = s.max;
    v[min_i] = s.min;
    v[mean_i] = s.mean;
    v[std_i] = s.std;
}

}  // namespace

const std::array<std::string_view, kFeatureCount>& feature_names() { return kNames; }

std::optional<std::size_t> feature_index(std::string_view name) {
    const auto it = std::find(kNames.begin(), kNames.end(), name);
    if (it == kNames.end()) return std::nullopt;
    return static_cast<std::size_t>(it - kNames.begin());
}

void RunningStats::add(double x) {
    ++n_;
    if (n_ == 1) {
        min_ = max_ = x;
    } else {
        min_ = std::min(min_, x);
        max_ = std::max(max_, x);
    }
    total_ += x;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
}

StatSummary RunningStats::summary() const {
    StatSummary s;
    if (n_ == 0) return s;
    s.min = min_;
    s.max = max_;
    s.mean = mean_;
    s.total = total_;
    if (n_ >= 2) {
        s.variance = std::max(0.0, m2_ / static_cast<double>(n_ - 1));
        s.std = std::sqrt(s.variance);
    }
    return s;
}

StatSummary stat_summary(std::span<const double> values) {
    RunningStats rs;
    for (double x : values) rs.add(x);
    return rs.summary();
}

ActivitySegments activity_segments(std::span<const std::int64_t> timestamps, std::int64_t threshold) {
    ActivitySegments out;
    out.threshold = threshold;
    if (timestamps.empty()) return out;
    std::int64_t start = timestamps.front();
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
        const std::int64_t gap = timestamps[i] - timestamps[i - 1];
        if (gap > threshold) {
            out.active.emplace_back(start, timestamps[i - 1]);
            out.idle.push_back(gap);
            start = timestamps[i];
        }
    }
    out.active.emplace_back(start, timestamps.back());
    return out;
}

FlowFeatureAccumulator::FlowFeatureAccumulator(FeatureConfig config) : config_(config) {}

void FlowFeatureAccumulator::close_bulk_run(BulkTotals (&totals)[2], const BulkRun& run) const {
    if (run.packets < config_.bulk_min_packets) return;
    BulkTotals& t = totals[run.forward ? 0 : 1];
    t.count += 1;
    t.packets += static_cast<double>(run.packets);
    t.bytes += run.bytes;
    t.duration_us += static_cast<double>(run.last - run.start);
}

void FlowFeatureAccumulator::add(const FlowPacket& pkt) {
    const std::int64_t ts = pkt.timestamp_us;
    const double len = pkt.payload_length;

    if (packets_ == 0) {
        first_ts_ = ts;
        segment_start_ = ts;
        subflows_ = 1;
    } else {
        const std::int64_t gap = ts - last_ts_;
        flow_iat_.add(static_cast<double>(gap));
        if (gap > config_.activity_threshold_us) {
            active_.add(static_cast<double>(last_ts_ - segment_start_));
            idle_.add(static_cast<double>(gap));
            segment_start_ = ts;
        }
        if (gap > config_.subflow_gap_us) ++subflows_;
    }
    last_ts_ = ts;
    ++packets_;

    if (pkt.forward) {
        if (last_fwd_ts_) fwd_iat_.add(static_cast<double>(ts - *last_fwd_ts_));
        last_fwd_ts_ = ts;
        fwd_len_.add(len);
        fwd_header_ += pkt.header_length;
        if (pkt.tcp_flags & tcp_flag::kPsh) fwd_psh_ += 1;
        if (pkt.tcp_flags & tcp_flag::kUrg) fwd_urg_ += 1;
        if (pkt.payload_length > 0) fwd_data_packets_ += 1;
        if (!seen_fwd_) {
            seen_fwd_ = true;
            init_win_fwd_ = pkt.tcp_window;
            min_fwd_header_ = pkt.header_length;
        } else {
            min_fwd_header_ = std::min<double>(min_fwd_header_, pkt.header_length);
        }
    } else {
        if (last_bwd_ts_) bwd_iat_.add(static_cast<double>(ts - *last_bwd_ts_));
        last_bwd_ts_ = ts;
        bwd_len_.add(len);
        bwd_header_ += pkt.header_length;
        if (pkt.tcp_flags & tcp_flag::kPsh) bwd_psh_ += 1;
        if (pkt.tcp_flags & tcp_flag::kUrg) bwd_urg_ += 1;
        if (!seen_bwd_) {
            seen_bwd_ = true;
            init_win_bwd_ = pkt.tcp_window;
        }
    }

    all_len_.add(len);
    wire_len_.add(pkt.total_length);
    for (std::size_t i = 0; i < kFlagOrder.size(); ++i) {
        if (pkt.tcp_flags & kFlagOrder[i]) flag_counts_[i] += 1;
    }

    if (pkt.payload_length > 0) {
        if (run_ && run_->forward == pkt.forward && ts - run_->last <= config_.bulk_gap_us) {
            ++run_->packets;
            run_->bytes += len;
            run_->last = ts;
        } else {
            if (run_) close_bulk_run(bulk_, *run_);
            run_ = BulkRun{pkt.forward, 1, len, ts, ts};
        }
    }
}

FeatureValues FlowFeatureAccumulator::finish() const {
    using namespace feature;
    FeatureValues v{};
    if (packets_ == 0) return v;

    const std::int64_t duration = last_ts_ - first_ts_;
    const StatSummary fwd = fwd_len_.summary();
    const StatSummary bwd = bwd_len_.summary();
    const StatSummary all = all_len_.summary();
    const double n_fwd = static_cast<double>(fwd_len_.count());
    const double n_bwd = static_cast<double>(bwd_len_.count());

    v[FlowDuration] = static_cast<double>(duration);
    v[TotalFwdPackets] = n_fwd;
    v[TotalBwdPackets] = n_bwd;
    v[TotalLengthFwd] = fwd.total;
    v[TotalLengthBwd] = bwd.total;
    put_stats(v, FwdPacketLengthMax, FwdPacketLengthMin, FwdPacketLengthMean, FwdPacketLengthStd, fwd);
    put_stats(v, BwdPacketLengthMax, BwdPacketLengthMin, BwdPacketLengthMean, BwdPacketLengthStd, bwd);
    v[FlowBytesPerSec] = per_second(all.total, duration);
    v[FlowPacketsPerSec] = per_second(static_cast<double>(packets_), duration);

    const StatSummary flow_iat = flow_iat_.summary();
    v[FlowIatMean] = flow_iat.mean;
    v[FlowIatStd] = flow_iat.std;
    v[FlowIatMax] = flow_iat.max;
    v[FlowIatMin] = flow_iat.min;

    const StatSummary fwd_iat = fwd_iat_.summary();
    v[FwdIatTotal] = fwd_iat.total;
    v[FwdIatMean] = fwd_iat.mean;
    v[FwdIatStd] = fwd_iat.std;
    v[FwdIatMax] = fwd_iat.max;
    v[FwdIatMin] = fwd_iat.min;

    const StatSummary bwd_iat = bwd_iat_.summary();
    v[BwdIatTotal] = bwd_iat.total;
    v[BwdIatMean] = bwd_iat.mean;
    v[BwdIatStd] = bwd_iat.std;
    v[BwdIatMax] = bwd_iat.max;
    v[BwdIatMin] = bwd_iat.min;

    v[FwdPshFlags] = fwd_psh_;
    v[BwdPshFlags] = bwd_psh_;
    v[FwdUrgFlags] = fwd_urg_;
    v[BwdUrgFlags] = bwd_urg_;
    v[FwdHeaderLength] = fwd_header_;
    v[BwdHeaderLength] = bwd_header_;
    v[FwdPacketsPerSec] = per_second(n_fwd, duration);
    v[BwdPacketsPerSec] = per_second(n_bwd, duration);

    v[MinPacketLength] = all.min;
    v[MaxPacketLength] = all.max;
    v[PacketLengthMean] = all.mean;
    v[PacketLengthStd] = all.std;
    v[PacketLengthVariance] = all.variance;

    for (std::size_t i = 0; i < flag_counts_.size(); ++i) v[FinFlagCount + i] = flag_counts_[i];

    v[DownUpRatio] = n_fwd > 0 ? std::floor(n_bwd / n_fwd) : 0.0;
    v[AveragePacketSize] = wire_len_.summary().mean;
    v[AvgFwdSegmentSize] = fwd.mean;
    v[AvgBwdSegmentSize] = bwd.mean;
    v[FwdHeaderLengthDup] = fwd_header_;

    BulkTotals bulk[2] = {bulk_[0], bulk_[1]};
    if (run_) close_bulk_run(bulk, *run_);
    for (int d = 0; d < 2; ++d) {
        const std::size_t base = d == 0 ? FwdAvgBytesPerBulk : BwdAvgBytesPerBulk;
        const BulkTotals& b = bulk[d];
        if (b.count > 0) {
            v[base] = b.bytes / b.count;
            v[base + 1] = b.packets / b.count;
            v[base + 2] = b.duration_us > 0 ? b.bytes / (b.duration_us / 1e6) : 0.0;
        }
    }

    const double subflows = static_cast<double>(subflows_);
    v[SubflowFwdPackets] = n_fwd / subflows;
    v[SubflowFwdBytes] = fwd.total / subflows;
    v[SubflowBwdPackets] = n_bwd / subflows;
    v[SubflowBwdBytes] = bwd.total / subflows;

    v[InitWinBytesFwd] = init_win_fwd_.value_or(0);
    v[InitWinBytesBwd] = init_win_bwd_.value_or(0);
    v[ActDataPktFwd] = fwd_data_packets_;
    v[MinSegSizeFwd] = min_fwd_header_;

    RunningStats active = active_;
    active.add(static_cast<double>(last_ts_ - segment_start_));
    const StatSummary act = active.summary();
    const StatSummary idle = idle_.summary();
    v[ActiveMean] = act.mean;
    v[ActiveStd] = act.std;
    v[ActiveMax] = act.max;
    v[ActiveMin] = act.min;
    v[IdleMean] = idle.mean;
    v[IdleStd] = idle.std;
    v[IdleMax] = idle.max;
    v[IdleMin] = idle.min;
    return v;
}

FlowIdentity flow_identity(const FlowState& flow) {
    FlowIdentity id;
    id.flow_id = flow.flow_id();
    id.src_ip = flow.initiator.ip.to_string();
    id.dst_ip = flow.responder.ip.to_string();
    id.src_port = flow.initiator.port;
    id.dst_port = flow.responder.port;
    id.protocol = static_cast<int>(flow.key.protocol);
    return id;
}

FeatureVector compute_features(const FlowState& flow, const FeatureConfig& config) {
    FlowFeatureAccumulator acc(config);
    for (const auto& p : flow.packets) acc.add(p);
    FeatureVector fv;
    fv.values = acc.finish();
    fv.identity = flow_identity(flow);
    return fv;
}

FeatureVector compute_features(const FlowState& flow, std::int64_t activity_threshold_us) {
    FeatureConfig cfg;
    cfg.activity_threshold_us = activity_threshold_us;
    return compute_features(flow, cfg);
}

}  // namespace flowcam
