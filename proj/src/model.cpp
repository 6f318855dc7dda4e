#include "flowcam/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "flowcam/errors.hpp"
#include "flowcam/io_util.hpp"
#include "flowcam/rng.hpp"

namespace flowcam {

namespace {

using json = nlohmann::json;

constexpr std::string_view kModelFormat = "flowcam-decision-tree";
constexpr int kModelVersion = 1;

std::vector<std::uint64_t> count_classes(const Dataset& data, std::span<const std::size_t> samples) {
    std::vector<std::uint64_t> counts(data.n_classes(), 0);
    for (std::size_t i : samples) ++counts[data.labels[i]];
    return counts;
}

double midpoint(double lo, double hi) {
    double mid = lo + (hi - lo) / 2.0;
    // Adjacent doubles can round the midpoint up onto hi.
    if (!(mid < hi)) mid = lo;
    return mid;
}

class TreeBuilder {
public:
    TreeBuilder(const Dataset& data, const TrainParams& params, std::vector<std::size_t> features)
        : data_(data), params_(params), features_(std::move(features)) {}

    std::vector<TreeNode> build() {
        std::vector<std::size_t> all(data_.size());
        std::iota(all.begin(), all.end(), 0);
        grow(all, 0);
        return std::move(nodes_);
    }

private:
    std::int32_t grow(const std::vector<std::size_t>& samples, int depth) {
        const auto id = static_cast<std::int32_t>(nodes_.size());
        nodes_.push_back(TreeNode{});
        nodes_[id].class_counts = count_classes(data_, samples);

        const auto& counts = nodes_[id].class_counts;
        const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
        if (depth >= params_.max_depth || pure || samples.size() < params_.min_samples_split) return id;

        const auto split = best_split(data_, samples, features_);
        if (!split) return id;

        std::vector<std::size_t> left, right;
        for (std::size_t i : samples) {
            (data_.at(i, split->feature) <= split->threshold ? left : right).push_back(i);
        }
        nodes_[id].feature = static_cast<std::int32_t>(split->feature);
        nodes_[id].threshold = split->threshold;
        const std::int32_t l = grow(left, depth + 1);
        const std::int32_t r = grow(right, depth + 1);
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    const Dataset& data_;
    const TrainParams& params_;
    std::vector<std::size_t> features_;
    std::vector<TreeNode> nodes_;
};

const TreeNode& find_leaf(const DecisionTreeModel& model, std::span<const double> x) {
    if (x.size() != model.feature_names.size()) {
        throw DimensionMismatch("model expects " + std::to_string(model.feature_names.size()) +
                                " features, got " + std::to_string(x.size()));
    }
    if (model.nodes.empty()) throw CorruptModel("model has no nodes");
    const TreeNode* node = &model.nodes[0];
    while (!node->is_leaf()) {
        node = &model.nodes[x[static_cast<std::size_t>(node->feature)] <= node->threshold ? node->left : node->right];
    }
    return *node;
}

double sample_std(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double ss = 0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

json body_to_json(const DecisionTreeModel& m) {
    json nodes = json::array();
    for (const auto& n : m.nodes) nodes.push_back(json::array({n.feature, n.threshold, n.left, n.right, n.class_counts}));
    json meta;
    meta["seed"] = m.meta.seed;
    meta["n_samples"] = m.meta.n_samples;
    meta["importance_threshold"] = m.meta.importance_threshold ? json(*m.meta.importance_threshold) : json(nullptr);
    meta["selected_features"] = m.meta.selected_features;

    json j;
    j["format"] = kModelFormat;
    j["version"] = kModelVersion;
    j["schema_hash"] = m.schema_hash();
    j["feature_names"] = m.feature_names;
    j["class_names"] = m.class_names;
    j["max_depth"] = m.max_depth;
    j["min_samples_split"] = m.min_samples_split;
    j["meta"] = std::move(meta);
    j["nodes"] = std::move(nodes);
    return j;
}

}  // namespace

void Dataset::add(std::span<const double> row, std::size_t label) {
    if (row.size() != n_features()) {
        throw DimensionMismatch("row has " + std::to_string(row.size()) + " values, dataset has " +
                                std::to_string(n_features()) + " features");
    }
    values.insert(values.end(), row.begin(), row.end());
    labels.push_back(label);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.feature_names = feature_names;
    out.class_names = class_names;
    out.values.reserve(indices.size() * n_features());
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) out.add(row(i), labels[i]);
    return out;
}

std::uint64_t TreeNode::samples() const noexcept {
    return std::accumulate(class_counts.begin(), class_counts.end(), std::uint64_t{0});
}

int DecisionTreeModel::depth() const {
    if (nodes.empty()) return 0;
    int deepest = 0;
    std::vector<std::pair<std::int32_t, int>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [id, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        const auto& n = nodes[static_cast<std::size_t>(id)];
        if (!n.is_leaf()) {
            stack.emplace_back(n.left, d + 1);
            stack.emplace_back(n.right, d + 1);
        }
    }
    return deepest;
}

std::size_t DecisionTreeModel::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

std::string DecisionTreeModel::schema_hash() const { return flowcam::schema_hash(feature_names); }

std::string schema_hash(std::span<const std::string> feature_names) {
    std::string joined;
    for (const auto& n : feature_names) {
        joined += n;
        joined += '\n';
    }
    return to_hex(fnv1a64(joined));
}

double gini(std::span<const std::uint64_t> class_counts) {
    const double total = static_cast<double>(
        std::accumulate(class_counts.begin(), class_counts.end(), std::uint64_t{0}));
    if (total == 0) return 0.0;
    double sum_sq = 0;
    for (auto c : class_counts) {
        const double p = static_cast<double>(c) / total;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

std::optional<Split> best_split(const Dataset& data, std::span<const std::size_t> samples,
                                std::span<const std::size_t> candidate_features) {
    if (samples.size() < 2) return std::nullopt;
    const std::vector<std::uint64_t> parent = count_classes(data, samples);
    const double n = static_cast<double>(samples.size());
    const double parent_gini = gini(parent);

    std::optional<Split> best;
    double best_gain = 0.0;
    std::vector<std::size_t> order(samples.begin(), samples.end());
    std::vector<std::uint64_t> left(parent.size()), right(parent.size());

    for (std::size_t f : candidate_features) {
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double va = data.at(a, f), vb = data.at(b, f);
            return va < vb || (va == vb && a < b);
        });
        std::fill(left.begin(), left.end(), 0);
        right = parent;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            const std::size_t label = data.labels[order[i]];
            ++left[label];
            --right[label];
            const double lo = data.at(order[i], f);
            const double hi = data.at(order[i + 1], f);
            if (!(lo < hi)) continue;
            const double nl = static_cast<double>(i + 1);
            const double nr = n - nl;
            const double gain = parent_gini - (nl / n) * gini(left) - (nr / n) * gini(right);
            if (gain > best_gain + kGainTieEpsilon) {
                best_gain = gain;
                best = Split{f, midpoint(lo, hi), gain};
            }
        }
    }
    return best;
}

DecisionTreeModel train(const Dataset& data, const TrainParams& params) {
    if (data.size() == 0) throw EmptyDataset("cannot train on an empty dataset");
    if (data.n_classes() == 0) throw EmptyDataset("dataset declares no classes");
    for (std::size_t i = 0; i < data.values.size(); ++i) {
        if (!std::isfinite(data.values[i])) {
            throw UncleanData("non-finite value at row " + std::to_string(i / data.n_features()) +
                              ", feature " + std::to_string(i % data.n_features()));
        }
    }
    if (params.max_depth < 0) throw std::invalid_argument("max_depth must be >= 0");

    std::vector<std::size_t> features = params.features;
    if (features.empty()) {
        features.resize(data.n_features());
        std::iota(features.begin(), features.end(), 0);
    }
    std::sort(features.begin(), features.end());
    features.erase(std::unique(features.begin(), features.end()), features.end());
    for (std::size_t f : features) {
        if (f >= data.n_features()) throw DimensionMismatch("feature index " + std::to_string(f) + " out of range");
    }

    DecisionTreeModel model;
    model.max_depth = params.max_depth;
    model.min_samples_split = params.min_samples_split;
    model.feature_names = data.feature_names;
    model.class_names = data.class_names;
    model.meta.seed = params.seed;
    model.meta.n_samples = data.size();
    model.meta.selected_features = features;
    model.nodes = TreeBuilder(data, params, features).build();
    return model;
}

std::size_t predict(const DecisionTreeModel& model, std::span<const double> features) {
    const auto& counts = find_leaf(model, features).class_counts;
    return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

const std::string& predict_label(const DecisionTreeModel& model, std::span<const double> features) {
    return model.class_names.at(predict(model, features));
}

std::vector<double> predict_proba(const DecisionTreeModel& model, std::span<const double> features) {
    const TreeNode& leaf = find_leaf(model, features);
    const double total = static_cast<double>(leaf.samples());
    std::vector<double> p(leaf.class_counts.size(), 0.0);
    if (total == 0) return p;
    for (std::size_t c = 0; c < p.size(); ++c) p[c] = static_cast<double>(leaf.class_counts[c]) / total;
    return p;
}

std::vector<double> feature_importances(const DecisionTreeModel& model) {
    std::vector<double> imp(model.feature_names.size(), 0.0);
    if (model.nodes.empty()) return imp;
    const double root = static_cast<double>(model.nodes[0].samples());
    if (root == 0) return imp;

    auto weighted = [root](const TreeNode& n) { return static_cast<double>(n.samples()) / root * gini(n.class_counts); };
    for (const auto& n : model.nodes) {
        if (n.is_leaf()) continue;
        const auto& l = model.nodes[static_cast<std::size_t>(n.left)];
        const auto& r = model.nodes[static_cast<std::size_t>(n.right)];
        imp[static_cast<std::size_t>(n.feature)] += weighted(n) - weighted(l) - weighted(r);
    }
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (total <= 0) return std::vector<double>(imp.size(), 0.0);
    for (double& v : imp) v = std::max(0.0, v / total);
    return imp;
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::size_t> labels,
                                                       std::size_t n_classes, std::size_t k,
                                                       std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("k must be at least 2");
    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(labels[i]).push_back(i);

    Rng rng(seed);
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t dealt = 0;
    for (auto& members : by_class) {
        rng.shuffle(std::span<std::size_t>(members));
        for (std::size_t idx : members) folds[dealt++ % k].push_back(idx);
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

CvReport cross_validate(const Dataset& data, std::size_t k, const TrainParams& params, std::uint64_t seed) {
    if (data.size() == 0) throw EmptyDataset("cannot cross-validate an empty dataset");
    if (k < 2) throw std::invalid_argument("k must be at least 2");
    std::vector<std::size_t> per_class(data.n_classes(), 0);
    for (std::size_t l : data.labels) ++per_class[l];
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        if (per_class[c] > 0 && per_class[c] < k) {
            throw InsufficientSamples("class '" + data.class_names[c] + "' has " + std::to_string(per_class[c]) +
                                      " samples, fewer than k=" + std::to_string(k));
        }
    }

    const auto folds = stratified_folds(data.labels, data.n_classes(), k, seed);
    CvReport report;
    report.k = k;
    report.seed = seed;
    report.max_depth = params.max_depth;
    report.min_samples_split = params.min_samples_split;
    report.class_names = data.class_names;
    report.n_features_used = params.features.empty() ? data.n_features() : params.features.size();
    report.confusion.assign(data.n_classes(), std::vector<std::uint64_t>(data.n_classes(), 0));

    std::vector<char> in_test(data.size());
    for (const auto& test : folds) {
        std::fill(in_test.begin(), in_test.end(), 0);
        for (std::size_t i : test) in_test[i] = 1;
        std::vector<std::size_t> train_idx;
        train_idx.reserve(data.size() - test.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (!in_test[i]) train_idx.push_back(i);
        }
        const DecisionTreeModel model = train(data.subset(train_idx), params);
        std::size_t correct = 0;
        for (std::size_t i : test) {
            const std::size_t predicted = predict(model, data.row(i));
            ++report.confusion[data.labels[i]][predicted];
            if (predicted == data.labels[i]) ++correct;
        }
        report.fold_accuracies.push_back(test.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test.size()));
    }
    report.mean = std::accumulate(report.fold_accuracies.begin(), report.fold_accuracies.end(), 0.0) /
                  static_cast<double>(report.fold_accuracies.size());
    report.std = sample_std(report.fold_accuracies);
    return report;
}

std::string cv_report_to_text(const CvReport& report) {
    std::ostringstream out;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu-fold cross-validation: mean accuracy %.4f +/- %.4f (depth %d, %zu features)\n",
                  report.k, report.mean, report.std, report.max_depth, report.n_features_used);
    out << buf;
    out << "fold accuracies:";
    for (double a : report.fold_accuracies) {
        std::snprintf(buf, sizeof buf, " %.4f", a);
        out << buf;
    }
    out << "\nconfusion matrix (rows = true, columns = predicted):\n";
    std::size_t width = 8;
    for (const auto& c : report.class_names) width = std::max(width, c.size() + 2);
    auto pad = [width](const std::string& s) { return s + std::string(width > s.size() ? width - s.size() : 1, ' '); };
    out << pad("");
    for (const auto& c : report.class_names) out << pad(c);
    out << "\n";
    for (std::size_t t = 0; t < report.confusion.size(); ++t) {
        out << pad(report.class_names[t]);
        for (auto v : report.confusion[t]) out << pad(std::to_string(v));
        out << "\n";
    }
    out << "row-normalized (%):\n";
    for (std::size_t t = 0; t < report.confusion.size(); ++t) {
        const auto row_total = std::accumulate(report.confusion[t].begin(), report.confusion[t].end(), std::uint64_t{0});
        out << pad(report.class_names[t]);
        for (auto v : report.confusion[t]) {
            std::snprintf(buf, sizeof buf, "%.2f", row_total ? 100.0 * static_cast<double>(v) / static_cast<double>(row_total) : 0.0);
            out << pad(buf);
        }
        out << "\n";
    }
    return out.str();
}

std::string cv_report_to_json(const CvReport& report) {
    json j;
    j["k"] = report.k;
    j["seed"] = report.seed;
    j["max_depth"] = report.max_depth;
    j["min_samples_split"] = report.min_samples_split;
    j["n_features_used"] = report.n_features_used;
    j["fold_accuracies"] = report.fold_accuracies;
    j["mean"] = report.mean;
    j["std"] = report.std;
    j["class_names"] = report.class_names;
    j["confusion"] = report.confusion;
    return j.dump(2) + "\n";
}

PruneResult prune_features(const Dataset& data, const TrainParams& params, double threshold,
                           std::size_t k, std::uint64_t cv_seed) {
    PruneResult result;
    result.full_model = train(data, params);
    result.importances = feature_importances(result.full_model);
    for (std::size_t f = 0; f < result.importances.size(); ++f) {
        if (result.importances[f] >= threshold) result.selected.push_back(f);
    }
    if (result.selected.empty()) {
        throw AllFeaturesPruned("no feature has importance >= " + std::to_string(threshold));
    }

    TrainParams pruned_params = params;
    pruned_params.features = result.selected;
    result.pruned_model = train(data, pruned_params);
    result.pruned_model.meta.importance_threshold = threshold;

    if (k > 0) {
        result.full_cv = cross_validate(data, k, params, cv_seed);
        result.pruned_cv = cross_validate(data, k, pruned_params, cv_seed);
    }
    return result;
}

std::string serialize_model(const DecisionTreeModel& model) {
    json body = body_to_json(model);
    const std::string checksum = to_hex(fnv1a64(body.dump()));
    body["checksum"] = checksum;
    return body.dump(1) + "\n";
}

DecisionTreeModel parse_model(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw CorruptModel(std::string("model is not valid JSON: ") + e.what());
    }
    try {
        if (!j.is_object() || j.value("format", "") != kModelFormat) throw CorruptModel("not a flowcam model file");
        if (j.at("version").get<int>() != kModelVersion) {
            throw CorruptModel("unsupported model version " + j.at("version").dump());
        }
        const std::string stored = j.at("checksum").get<std::string>();
        json body = j;
        body.erase("checksum");
        if (to_hex(fnv1a64(body.dump())) != stored) throw CorruptModel("model checksum mismatch");

        DecisionTreeModel m;
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
        m.max_depth = j.at("max_depth").get<int>();
        m.min_samples_split = j.at("min_samples_split").get<std::size_t>();
        const json& meta = j.at("meta");
        m.meta.seed = meta.at("seed").get<std::uint64_t>();
        m.meta.n_samples = meta.at("n_samples").get<std::size_t>();
        if (!meta.at("importance_threshold").is_null()) m.meta.importance_threshold = meta.at("importance_threshold").get<double>();
        m.meta.selected_features = meta.at("selected_features").get<std::vector<std::size_t>>();
        if (j.at("schema_hash").get<std::string>() != m.schema_hash()) throw CorruptModel("schema hash does not match feature names");

        for (const auto& jn : j.at("nodes")) {
            TreeNode n;
            n.feature = jn.at(0).get<std::int32_t>();
            n.threshold = jn.at(1).get<double>();
            n.left = jn.at(2).get<std::int32_t>();
            n.right = jn.at(3).get<std::int32_t>();
            n.class_counts = jn.at(4).get<std::vector<std::uint64_t>>();
            m.nodes.push_back(std::move(n));
        }
        if (m.nodes.empty()) throw CorruptModel("model has no nodes");
        const auto n_nodes = static_cast<std::int32_t>(m.nodes.size());
        for (std::size_t i = 0; i < m.nodes.size(); ++i) {
            const auto& n = m.nodes[i];
            if (n.class_counts.size() != m.class_names.size()) throw CorruptModel("node class count width mismatch");
            if (n.is_leaf()) continue;
            if (static_cast<std::size_t>(n.feature) >= m.feature_names.size()) throw CorruptModel("node feature out of range");
            // Preorder layout: children always follow their parent.
            if (n.left <= static_cast<std::int32_t>(i) || n.right <= static_cast<std::int32_t>(i) ||
                n.left >= n_nodes || n.right >= n_nodes) {
                throw CorruptModel("node child index out of range");
            }
        }
        return m;
    } catch (const json::exception& e) {
        throw CorruptModel(std::string("malformed model: ") + e.what());
    }
}

void save_model(const DecisionTreeModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_model(model));
}

DecisionTreeModel load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

}  // namespace flowcam
