#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flowcam {

/// Dense labeled design matrix, row-major.
struct Dataset {
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names;
    std::vector<double> values;
    std::vector<std::size_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t n_features() const noexcept { return feature_names.size(); }
    std::size_t n_classes() const noexcept { return class_names.size(); }

    std::span<const double> row(std::size_t i) const {
        return {values.data() + i * n_features(), n_features()};
    }
    double at(std::size_t i, std::size_t f) const { return values[i * n_features() + f]; }

    void add(std::span<const double> row, std::size_t label);
    Dataset subset(std::span<const std::size_t> indices) const;
};

/// Leaves have feature == -1. Children satisfy left = x[feature] <= threshold.
struct TreeNode {
    std::int32_t feature = -1;
    double threshold = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::vector<std::uint64_t> class_counts;

    bool is_leaf() const noexcept { return feature < 0; }
    std::uint64_t samples() const noexcept;
    bool operator==(const TreeNode&) const = default;
};

struct TrainingMeta {
    std::uint64_t seed = 0;
    std::size_t n_samples = 0;
    std::optional<double> importance_threshold;
    /// Features the tree was allowed to split on, ascending.
    std::vector<std::size_t> selected_features;

    bool operator==(const TrainingMeta&) const = default;
};

struct DecisionTreeModel {
    /// Preorder; nodes[0] is the root.
    std::vector<TreeNode> nodes;
    int max_depth = 0;
    std::size_t min_samples_split = 2;
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names;
    TrainingMeta meta;

    /// Edges on the longest root-to-leaf path (a lone leaf has depth 0).
    int depth() const;
    std::size_t leaf_count() const;
    std::string schema_hash() const;

    bool operator==(const DecisionTreeModel&) const = default;
};

/// Hex FNV-1a of the newline-joined feature names.
std::string schema_hash(std::span<const std::string> feature_names);

/// Gains closer than this are ties; ties go to the lower feature index, then
/// the lower threshold.
inline constexpr double kGainTieEpsilon = 1e-12;

/// Importance pruning presets: negligible and default threshold.
inline constexpr double kNegligibleImportance = 1e-6;
inline constexpr double kDefaultImportanceThreshold = 1e-4;

/// 1 - sum p_i^2; zero for an empty node.
double gini(std::span<const std::uint64_t> class_counts);

struct Split {
    std::size_t feature = 0;
    double threshold = 0;
    double gain = 0;
};

/// Exhaustive search over midpoints between consecutive distinct values of
/// each candidate feature, maximizing the size-weighted Gini decrease.
/// Returns nullopt when no split has positive gain.
std::optional<Split> best_split(const Dataset& data, std::span<const std::size_t> samples,
                                std::span<const std::size_t> candidate_features);

struct TrainParams {
    int max_depth = 11;
    std::size_t min_samples_split = 2;
    std::uint64_t seed = 42;
    /// Restrict splits to these feature indices; all features when empty.
    std::vector<std::size_t> features;
};

/// Throws EmptyDataset or UncleanData (non-finite values).
DecisionTreeModel train(const Dataset& data, const TrainParams& params);

/// Class index with the largest leaf count; ties go to the lowest index.
/// Throws DimensionMismatch when the vector length differs from the model.
std::size_t predict(const DecisionTreeModel& model, std::span<const double> features);
const std::string& predict_label(const DecisionTreeModel& model, std::span<const double> features);

/// Leaf class frequencies.
std::vector<double> predict_proba(const DecisionTreeModel& model, std::span<const double> features);

/// Normalized Gini importance per feature; all zero for a single leaf.
std::vector<double> feature_importances(const DecisionTreeModel& model);

/// Stratified fold assignment: each class is shuffled with the seed and dealt
/// round-robin, continuing across classes. Returns the test indices of each
/// fold.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::size_t> labels,
                                                       std::size_t n_classes, std::size_t k,
                                                       std::uint64_t seed);

struct CvReport {
    std::vector<double> fold_accuracies;
    double mean = 0;
    double std = 0;  // sample standard deviation across folds
    /// confusion[true][predicted], summed over folds.
    std::vector<std::vector<std::uint64_t>> confusion;
    std::vector<std::string> class_names;
    std::size_t k = 0;
    std::uint64_t seed = 0;
    int max_depth = 0;
    std::size_t min_samples_split = 0;
    std::size_t n_features_used = 0;
};

/// Throws InsufficientSamples when any class present has fewer than k rows.
CvReport cross_validate(const Dataset& data, std::size_t k, const TrainParams& params, std::uint64_t seed);

std::string cv_report_to_text(const CvReport& report);
std::string cv_report_to_json(const CvReport& report);

struct PruneResult {
    std::vector<double> importances;
    std::vector<std::size_t> selected;
    DecisionTreeModel full_model;
    DecisionTreeModel pruned_model;
    std::optional<CvReport> full_cv;
    std::optional<CvReport> pruned_cv;
};

/// One pass: train, keep features with importance >= threshold, retrain on
/// the survivors. Cross-validates both models when k > 0. Throws
/// AllFeaturesPruned when nothing survives.
PruneResult prune_features(const Dataset& data, const TrainParams& params, double threshold,
                           std::size_t k = 0, std::uint64_t cv_seed = 42);

std::string serialize_model(const DecisionTreeModel& model);
/// Throws CorruptModel on bad structure, version or checksum.
DecisionTreeModel parse_model(const std::string& text);

void save_model(const DecisionTreeModel& model, const std::filesystem::path& path);
DecisionTreeModel load_model(const std::filesystem::path& path);

}  // namespace flowcam
