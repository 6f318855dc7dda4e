#pragma once

// Straight-line recomputation of the flow statistics: every quantity is
// rebuilt from explicit per-direction lists with two-pass moments, and the
// result is keyed by catalog name rather than by index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "flowcam/features.hpp"
#include "flowcam/flow.hpp"

namespace oracle {

struct Moments {
    double min = 0, max = 0, mean = 0, std = 0, var = 0, sum = 0;
};

inline Moments moments(const std::vector<double>& xs) {
    Moments m;
    if (xs.empty()) return m;
    m.min = *std::min_element(xs.begin(), xs.end());
    m.max = *std::max_element(xs.begin(), xs.end());
    m.sum = std::accumulate(xs.begin(), xs.end(), 0.0);
    m.mean = m.sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0;
        for (double x : xs) ss += (x - m.mean) * (x - m.mean);
        m.var = ss / static_cast<double>(xs.size() - 1);
        m.std = std::sqrt(m.var);
    }
    return m;
}

inline std::vector<double> gaps(const std::vector<std::int64_t>& ts) {
    std::vector<double> out;
    for (std::size_t i = 1; i < ts.size(); ++i) out.push_back(static_cast<double>(ts[i] - ts[i - 1]));
    return out;
}

inline double rate(double amount, double duration_us) { return duration_us > 0 ? amount * 1e6 / duration_us : 0; }

inline std::map<std::string, double> brute_force_features(const flowcam::FlowState& flow,
                                                           const flowcam::FeatureConfig& cfg = {}) {
    using flowcam::FlowPacket;
    namespace tf = flowcam::tcp_flag;
    std::map<std::string, double> f;

    std::vector<const FlowPacket*> fwd, bwd, all;
    for (const auto& p : flow.packets) {
        all.push_back(&p);
        (p.forward ? fwd : bwd).push_back(&p);
    }
    auto lens = [](const std::vector<const FlowPacket*>& ps) {
        std::vector<double> v;
        for (auto* p : ps) v.push_back(p->payload_length);
        return v;
    };
    auto stamps = [](const std::vector<const FlowPacket*>& ps) {
        std::vector<std::int64_t> v;
        for (auto* p : ps) v.push_back(p->timestamp_us);
        return v;
    };
    auto count_if = [](const std::vector<const FlowPacket*>& ps, auto pred) {
        double n = 0;
        for (auto* p : ps) n += pred(*p) ? 1 : 0;
        return n;
    };

    const auto ts_all = stamps(all);
    const double duration = all.empty() ? 0 : static_cast<double>(ts_all.back() - ts_all.front());
    const Moments lf = moments(lens(fwd)), lb = moments(lens(bwd)), la = moments(lens(all));

    f["Flow Duration"] = duration;
    f["Total Fwd Packets"] = static_cast<double>(fwd.size());
    f["Total Backward Packets"] = static_cast<double>(bwd.size());
    f["Total Length of Fwd Packets"] = lf.sum;
    f["Total Length of Bwd Packets"] = lb.sum;
    f["Fwd Packet Length Max"] = lf.max;
    f["Fwd Packet Length Min"] = lf.min;
    f["Fwd Packet Length Mean"] = lf.mean;
    f["Fwd Packet Length Std"] = lf.std;
    f["Bwd Packet Length Max"] = lb.max;
    f["Bwd Packet Length Min"] = lb.min;
    f["Bwd Packet Length Mean"] = lb.mean;
    f["Bwd Packet Length Std"] = lb.std;
    f["Flow Bytes/s"] = rate(la.sum, duration);
    f["Flow Packets/s"] = rate(static_cast<double>(all.size()), duration);

    const Moments ia = moments(gaps(ts_all));
    f["Flow IAT Mean"] = ia.mean;
    f["Flow IAT Std"] = ia.std;
    f["Flow IAT Max"] = ia.max;
    f["Flow IAT Min"] = ia.min;
    const Moments iff = moments(gaps(stamps(fwd)));
    f["Fwd IAT Total"] = iff.sum;
    f["Fwd IAT Mean"] = iff.mean;
    f["Fwd IAT Std"] = iff.std;
    f["Fwd IAT Max"] = iff.max;
    f["Fwd IAT Min"] = iff.min;
    const Moments ib = moments(gaps(stamps(bwd)));
    f["Bwd IAT Total"] = ib.sum;
    f["Bwd IAT Mean"] = ib.mean;
    f["Bwd IAT Std"] = ib.std;
    f["Bwd IAT Max"] = ib.max;
    f["Bwd IAT Min"] = ib.min;

    auto has = [](std::uint8_t bit) { return [bit](const FlowPacket& p) { return (p.tcp_flags & bit) != 0; }; };
    f["Fwd PSH Flags"] = count_if(fwd, has(tf::kPsh));
    f["Bwd PSH Flags"] = count_if(bwd, has(tf::kPsh));
    f["Fwd URG Flags"] = count_if(fwd, has(tf::kUrg));
    f["Bwd URG Flags"] = count_if(bwd, has(tf::kUrg));

    double fwd_hdr = 0, bwd_hdr = 0;
    for (auto* p : fwd) fwd_hdr += p->header_length;
    for (auto* p : bwd) bwd_hdr += p->header_length;
    f["Fwd Header Length"] = fwd_hdr;
    f["Bwd Header Length"] = bwd_hdr;
    f["Fwd Header Length.1"] = fwd_hdr;
    f["Fwd Packets/s"] = rate(static_cast<double>(fwd.size()), duration);
    f["Bwd Packets/s"] = rate(static_cast<double>(bwd.size()), duration);

    f["Min Packet Length"] = la.min;
    f["Max Packet Length"] = la.max;
    f["Packet Length Mean"] = la.mean;
    f["Packet Length Std"] = la.std;
    f["Packet Length Variance"] = la.var;

    f["FIN Flag Count"] = count_if(all, has(tf::kFin));
    f["SYN Flag Count"] = count_if(all, has(tf::kSyn));
    f["RST Flag Count"] = count_if(all, has(tf::kRst));
    f["PSH Flag Count"] = count_if(all, has(tf::kPsh));
    f["ACK Flag Count"] = count_if(all, has(tf::kAck));
    f["URG Flag Count"] = count_if(all, has(tf::kUrg));
    f["CWE Flag Count"] = count_if(all, has(tf::kCwe));
    f["ECE Flag Count"] = count_if(all, has(tf::kEce));

    f["Down/Up Ratio"] = fwd.empty() ? 0 : static_cast<double>(bwd.size() / fwd.size());
    std::vector<double> wire;
    for (auto* p : all) wire.push_back(p->total_length);
    f["Average Packet Size"] = moments(wire).mean;
    f["Avg Fwd Segment Size"] = lf.mean;
    f["Avg Bwd Segment Size"] = lb.mean;

    // Bulks: group the data-bearing packets into maximal same-direction runs
    // with gaps <= bulk_gap, then keep runs of at least bulk_min_packets.
    std::vector<std::vector<const FlowPacket*>> groups;
    for (auto* p : all) {
        if (p->payload_length == 0) continue;
        if (!groups.empty()) {
            auto* prev = groups.back().back();
            if (prev->forward == p->forward && p->timestamp_us - prev->timestamp_us <= cfg.bulk_gap_us) {
                groups.back().push_back(p);
                continue;
            }
        }
        groups.push_back({p});
    }
    for (bool dir : {true, false}) {
        double n = 0, pkts = 0, bytes = 0, dur = 0;
        for (const auto& g : groups) {
            if (g.front()->forward != dir || g.size() < cfg.bulk_min_packets) continue;
            n += 1;
            pkts += static_cast<double>(g.size());
            for (auto* p : g) bytes += p->payload_length;
            dur += static_cast<double>(g.back()->timestamp_us - g.front()->timestamp_us);
        }
        const std::string side = dir ? "Fwd" : "Bwd";
        f[side + " Avg Bytes/Bulk"] = n > 0 ? bytes / n : 0;
        f[side + " Avg Packets/Bulk"] = n > 0 ? pkts / n : 0;
        f[side + " Avg Bulk Rate"] = n > 0 && dur > 0 ? bytes * 1e6 / dur : 0;
    }

    double subflows = 1;
    for (double g : gaps(ts_all)) subflows += g > static_cast<double>(cfg.subflow_gap_us) ? 1 : 0;
    f["Subflow Fwd Packets"] = static_cast<double>(fwd.size()) / subflows;
    f["Subflow Fwd Bytes"] = lf.sum / subflows;
    f["Subflow Bwd Packets"] = static_cast<double>(bwd.size()) / subflows;
    f["Subflow Bwd Bytes"] = lb.sum / subflows;

    f["Init Win Bytes Fwd"] = !fwd.empty() && fwd.front()->tcp_window ? *fwd.front()->tcp_window : 0;
    f["Init Win Bytes Bwd"] = !bwd.empty() && bwd.front()->tcp_window ? *bwd.front()->tcp_window : 0;
    f["Act Data Pkt Fwd"] = count_if(fwd, [](const FlowPacket& p) { return p.payload_length > 0; });
    double min_hdr = 0;
    for (std::size_t i = 0; i < fwd.size(); ++i) {
        min_hdr = i == 0 ? fwd[i]->header_length : std::min<double>(min_hdr, fwd[i]->header_length);
    }
    f["Min Seg Size Fwd"] = min_hdr;

    // Active periods are the spans between gaps above the threshold.
    std::vector<double> active, idle;
    if (!ts_all.empty()) {
        std::int64_t seg_start = ts_all.front();
        for (std::size_t i = 1; i < ts_all.size(); ++i) {
            if (ts_all[i] - ts_all[i - 1] > cfg.activity_threshold_us) {
                active.push_back(static_cast<double>(ts_all[i - 1] - seg_start));
                idle.push_back(static_cast<double>(ts_all[i] - ts_all[i - 1]));
                seg_start = ts_all[i];
            }
        }
        active.push_back(static_cast<double>(ts_all.back() - seg_start));
    }
    const Moments ma = moments(active), mi = moments(idle);
    f["Active Mean"] = ma.mean;
    f["Active Std"] = ma.std;
    f["Active Max"] = ma.max;
    f["Active Min"] = ma.min;
    f["Idle Mean"] = mi.mean;
    f["Idle Std"] = mi.std;
    f["Idle Max"] = mi.max;
    f["Idle Min"] = mi.min;
    return f;
}

/// |a - b| <= rel * max(|a|, |b|); exact equality required at zero.
inline bool close_relative(double a, double b, double rel) {
    if (a == b) return true;
    return std::fabs(a - b) <= rel * std::max(std::fabs(a), std::fabs(b));
}

}  // namespace oracle
