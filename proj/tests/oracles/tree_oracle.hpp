#pragma once

// Exhaustive split search written without sharing code with the library:
// every (feature, midpoint) pair is scored by explicit counting.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <vector>

namespace oracle {

struct Sample {
    std::vector<double> x;
    std::size_t y = 0;
};

struct OracleSplit {
    std::size_t feature = 0;
    double threshold = 0;
    double gain = 0;
};

inline double gini_closed_form(const std::vector<std::size_t>& labels) {
    if (labels.empty()) return 0.0;
    std::map<std::size_t, double> freq;
    for (auto y : labels) freq[y] += 1;
    double sum_sq = 0;
    for (const auto& [y, c] : freq) {
        const double p = c / static_cast<double>(labels.size());
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

inline std::vector<double> midpoints(const std::vector<Sample>& s, std::size_t f) {
    std::vector<double> vals;
    for (const auto& e : s) vals.push_back(e.x[f]);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        double m = vals[i] + (vals[i + 1] - vals[i]) / 2;
        if (!(m < vals[i + 1])) m = vals[i];
        out.push_back(m);
    }
    return out;
}

inline double split_gain(const std::vector<Sample>& s, std::size_t f, double t) {
    std::vector<std::size_t> all, left, right;
    for (const auto& e : s) {
        all.push_back(e.y);
        (e.x[f] <= t ? left : right).push_back(e.y);
    }
    const double n = static_cast<double>(s.size());
    return gini_closed_form(all) - static_cast<double>(left.size()) / n * gini_closed_form(left) -
           static_cast<double>(right.size()) / n * gini_closed_form(right);
}

/// Best split with gains within eps treated as equal; ties resolved by the
/// lowest feature index, then the lowest threshold. nullopt if no gain > eps.
inline std::optional<OracleSplit> exhaustive_best_split(const std::vector<Sample>& s, std::size_t n_features,
                                                        double eps = 1e-12) {
    std::vector<OracleSplit> all;
    for (std::size_t f = 0; f < n_features; ++f) {
        for (double t : midpoints(s, f)) all.push_back({f, t, split_gain(s, f, t)});
    }
    double top = 0;
    for (const auto& c : all) top = std::max(top, c.gain);
    if (top <= eps) return std::nullopt;
    // Smallest (feature, threshold) whose gain is within eps of the maximum.
    std::optional<OracleSplit> best;
    for (const auto& c : all) {
        if (c.gain < top - eps) continue;
        if (!best || c.feature < best->feature || (c.feature == best->feature && c.threshold < best->threshold)) {
            best = c;
        }
    }
    return best;
}

}  // namespace oracle
