#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowcam/features.hpp"
#include "flowcam/model.hpp"

namespace flowcam {

/// One CSV row: 6 identity columns, 77 features, label.
struct LabeledRecord {
    FlowIdentity identity;
    FeatureValues values{};
    std::string label;
};

inline constexpr std::size_t kIdentityColumns = 6;
inline constexpr std::size_t kCsvColumns = kIdentityColumns + kFeatureCount + 1;
static_assert(kCsvColumns == 84);

/// The 84 header names in file order.
const std::vector<std::string>& csv_header();

/// Hash of the 77 feature names; matches DecisionTreeModel::schema_hash()
/// for models trained on CSV data.
std::string csv_schema_hash();

/// Maps application labels (Skype, Ezviz, ...) to traffic classes.
class LabelTaxonomy {
public:
    /// IoTCam, Conf, Share, Others with the applications of the reference
    /// corpus.
    static LabelTaxonomy defaults();

    /// {"classes": [...], "apps": {"App": "Class", ...}}. Throws ParseError.
    static LabelTaxonomy from_json(std::string_view text);

    /// Adds or replaces an application mapping. Throws std::invalid_argument
    /// for an undeclared class.
    void map(std::string app, const std::string& cls);
    void add_class(std::string cls);

    /// The class for an application or class name, nullopt if unknown.
    std::optional<std::string> resolve(std::string_view label) const;

    const std::vector<std::string>& classes() const noexcept { return classes_; }
    const std::map<std::string, std::string, std::less<>>& apps() const noexcept { return apps_; }

private:
    std::vector<std::string> classes_;
    std::map<std::string, std::string, std::less<>> apps_;
};

struct CsvReadOptions {
    /// Replace application labels with their class; unknown labels are a
    /// ParseError. When false labels are kept verbatim.
    bool resolve_labels = true;
    LabelTaxonomy taxonomy = LabelTaxonomy::defaults();
};

/// RFC 4180 CSV with a "# schema:" line before the header. Numbers use the
/// shortest representation that round-trips; non-finite values are written
/// as NaN, Infinity and -Infinity.
std::string format_csv(std::span<const LabeledRecord> records);
void write_csv(std::span<const LabeledRecord> records, const std::filesystem::path& path);

/// Throws SchemaMismatch for a wrong header or schema version and ParseError
/// (with row number) for bad rows. Non-finite cells are kept as-is.
std::vector<LabeledRecord> parse_csv(std::string_view text, const CsvReadOptions& options = {});
std::vector<LabeledRecord> read_csv(const std::filesystem::path& path, const CsvReadOptions& options = {});

/// format_csv with extra trailing columns; extra_cells holds one row per
/// record.
std::string format_csv(std::span<const LabeledRecord> records, std::span<const std::string> extra_header,
                       std::span<const std::vector<std::string>> extra_cells);

/// Schema-free view of a CSV file: '#' preamble lines, header, data rows.
struct CsvTable {
    std::vector<std::string> comments;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    /// 1-based source line of each data row.
    std::vector<std::size_t> lines;

    /// Column index by header name.
    std::optional<std::size_t> column(std::string_view name) const;
};

/// Throws ParseError on an unterminated quote.
CsvTable parse_csv_table(std::string_view text);

struct CleanReport {
    std::size_t replacements = 0;
    std::size_t rows_affected = 0;
};

/// Replaces every NaN, Inf and -Inf feature value with 0 in place.
CleanReport clean(std::vector<LabeledRecord>& records);

/// Per-class deterministic partition. Each class is shuffled with the seed;
/// partition boundaries are round(n * cumulative fraction) with halves
/// rounded up. Partitions keep input order. Throws EmptyClass for empty
/// input or unlabeled records.
std::vector<std::vector<LabeledRecord>> stratified_split(std::span<const LabeledRecord> records,
                                                         std::span<const double> fractions,
                                                         std::uint64_t seed);

/// Builds a training matrix. Classes follow `class_order` (labels not listed
/// there are appended in sorted order); classes without records are dropped.
/// Throws EmptyClass for unlabeled records.
Dataset to_dataset(std::span<const LabeledRecord> records, const std::vector<std::string>& class_order = {});

}  // namespace flowcam
