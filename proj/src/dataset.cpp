#include "flowcam/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include <json.hpp>

#include "flowcam/errors.hpp"
#include "flowcam/io_util.hpp"
#include "flowcam/rng.hpp"

namespace flowcam {

namespace {

constexpr std::string_view kSchemaPrefix = "# schema: ";

const std::array<std::string_view, kIdentityColumns> kIdentityNames = {
    "Flow ID", "Src IP", "Dst IP", "Src Port", "Dst Port", "Protocol",
};

bool needs_quotes(std::string_view s) { return s.find_first_of(",\"\r\n") != std::string_view::npos; }

void append_field(std::string& out, std::string_view s) {
    if (!needs_quotes(s)) {
        out += s;
        return;
    }
    out += '"';
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
}

void append_number(std::string& out, double v) {
    if (std::isnan(v)) {
        out += "NaN";
        return;
    }
    if (std::isinf(v)) {
        out += v > 0 ? "Infinity" : "-Infinity";
        return;
    }
    if (v == std::trunc(v) && std::fabs(v) < 1e15 && !(v == 0 && std::signbit(v))) {
        out += std::to_string(static_cast<long long>(v));
        return;
    }
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    bool negative = false;
    std::string_view body = s;
    if (body.front() == '+' || body.front() == '-') {
        negative = body.front() == '-';
        body.remove_prefix(1);
    }
    if (iequals(body, "nan")) return std::nan("");
    if (iequals(body, "inf") || iequals(body, "infinity")) {
        return negative ? -HUGE_VAL : HUGE_VAL;
    }
    if (body.empty() || body.front() == '+' || body.front() == '-') return std::nullopt;
    double v = 0;
    const auto res = std::from_chars(body.data(), body.data() + body.size(), v);
    if (res.ec != std::errc{} || res.ptr != body.data() + body.size()) return std::nullopt;
    return negative ? -v : v;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s, long long lo, long long hi) {
    s = trim(s);
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size() || v < lo || v > hi) return std::nullopt;
    return static_cast<Int>(v);
}

struct CsvRow {
    std::size_t line = 0;  // 1-based line where the record starts
    std::vector<std::string> fields;
};

// RFC 4180 tokenizer; also collects leading '#' comment lines.
std::vector<CsvRow> tokenize(std::string_view text, std::vector<std::string>& comments) {
    std::vector<CsvRow> rows;
    std::size_t i = 0;
    std::size_t line = 1;
    bool at_header = true;
    while (i < text.size()) {
        if (at_header && text[i] == '#') {
            const std::size_t end = text.find('\n', i);
            std::string_view c = text.substr(i, end == std::string_view::npos ? std::string_view::npos : end - i);
            if (!c.empty() && c.back() == '\r') c.remove_suffix(1);
            comments.emplace_back(c);
            i = end == std::string_view::npos ? text.size() : end + 1;
            ++line;
            continue;
        }
        at_header = false;
        CsvRow row;
        row.line = line;
        std::string field;
        bool quoted = false;
        bool row_done = false;
        while (i < text.size() && !row_done) {
            const char c = text[i];
            if (quoted) {
                if (c == '"') {
                    if (i + 1 < text.size() && text[i + 1] == '"') {
                        field += '"';
                        i += 2;
                    } else {
                        quoted = false;
                        ++i;
                    }
                } else {
                    if (c == '\n') ++line;
                    field += c;
                    ++i;
                }
                continue;
            }
            switch (c) {
                case '"':
                    quoted = true;
                    ++i;
                    break;
                case ',':
                    row.fields.push_back(std::move(field));
                    field.clear();
                    ++i;
                    break;
                case '\r':
                    ++i;
                    break;
                case '\n':
                    ++i;
                    ++line;
                    row_done = true;
                    break;
                default:
                    field += c;
                    ++i;
            }
        }
        if (quoted) throw ParseError(row.line, "unterminated quoted field");
        row.fields.push_back(std::move(field));
        if (row.fields.size() == 1 && row.fields[0].empty()) continue;  // blank line
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

const std::vector<std::string>& csv_header() {
    static const std::vector<std::string> header = [] {
        std::vector<std::string> h;
        for (auto n : kIdentityNames) h.emplace_back(n);
        for (auto n : feature_names()) h.emplace_back(n);
        h.emplace_back("Label");
        return h;
    }();
    return header;
}

std::string csv_schema_hash() {
    std::vector<std::string> names(feature_names().begin(), feature_names().end());
    return schema_hash(names);
}

LabelTaxonomy LabelTaxonomy::defaults() {
    LabelTaxonomy t;
    for (const char* c : {"IoTCam", "Conf", "Share", "Others"}) t.add_class(c);
    for (const char* app : {"Prime", "YouTube"}) t.map(app, "Share");
    for (const char* app : {"Meet", "Teams", "Skype", "Zoom"}) t.map(app, "Conf");
    for (const char* app : {"Netatmo", "Alarm Spy Clock", "Canary", "D3D", "Ezviz", "V380 Spy Bulb"}) {
        t.map(app, "IoTCam");
    }
    return t;
}

LabelTaxonomy LabelTaxonomy::from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        LabelTaxonomy t;
        for (const auto& c : j.at("classes")) t.add_class(c.get<std::string>());
        for (const auto& [app, cls] : j.at("apps").items()) t.map(app, cls.get<std::string>());
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(1, std::string("bad taxonomy: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ParseError(1, std::string("bad taxonomy: ") + e.what());
    }
}

void LabelTaxonomy::add_class(std::string cls) {
    if (std::find(classes_.begin(), classes_.end(), cls) == classes_.end()) classes_.push_back(std::move(cls));
}

void LabelTaxonomy::map(std::string app, const std::string& cls) {
    if (std::find(classes_.begin(), classes_.end(), cls) == classes_.end()) {
        throw std::invalid_argument("class '" + cls + "' is not declared");
    }
    apps_[std::move(app)] = cls;
}

std::optional<std::string> LabelTaxonomy::resolve(std::string_view label) const {
    if (std::find(classes_.begin(), classes_.end(), label) != classes_.end()) return std::string(label);
    if (auto it = apps_.find(label); it != apps_.end()) return it->second;
    return std::nullopt;
}

std::string format_csv(std::span<const LabeledRecord> records) { return format_csv(records, {}, {}); }

std::string format_csv(std::span<const LabeledRecord> records, std::span<const std::string> extra_header,
                       std::span<const std::vector<std::string>> extra_cells) {
    if (!extra_header.empty() && extra_cells.size() != records.size()) {
        throw std::invalid_argument("one row of extra cells is required per record");
    }
    std::string out;
    out.reserve(128 + records.size() * 900);
    out += kSchemaPrefix;
    out += kFeatureSchemaVersion;
    out += '\n';
    const auto& header = csv_header();
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out += ',';
        append_field(out, header[i]);
    }
    for (const auto& h : extra_header) {
        out += ',';
        append_field(out, h);
    }
    out += '\n';
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        append_field(out, rec.identity.flow_id);
        out += ',';
        append_field(out, rec.identity.src_ip);
        out += ',';
        append_field(out, rec.identity.dst_ip);
        out += ',';
        out += std::to_string(rec.identity.src_port);
        out += ',';
        out += std::to_string(rec.identity.dst_port);
        out += ',';
        out += std::to_string(rec.identity.protocol);
        for (double v : rec.values) {
            out += ',';
            append_number(out, v);
        }
        out += ',';
        append_field(out, rec.label);
        if (!extra_header.empty()) {
            if (extra_cells[r].size() != extra_header.size()) {
                throw std::invalid_argument("extra cell count does not match extra header");
            }
            for (const auto& c : extra_cells[r]) {
                out += ',';
                append_field(out, c);
            }
        }
        out += '\n';
    }
    return out;
}

std::optional<std::size_t> CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    return std::nullopt;
}

CsvTable parse_csv_table(std::string_view text) {
    CsvTable table;
    std::vector<CsvRow> rows = tokenize(text, table.comments);
    if (rows.empty()) return table;
    for (auto& h : rows.front().fields) table.header.emplace_back(trim(h));
    table.rows.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        table.lines.push_back(rows[r].line);
        table.rows.push_back(std::move(rows[r].fields));
    }
    return table;
}

void write_csv(std::span<const LabeledRecord> records, const std::filesystem::path& path) {
    write_file_atomic(path, format_csv(records));
}

std::vector<LabeledRecord> parse_csv(std::string_view text, const CsvReadOptions& options) {
    const CsvTable table = parse_csv_table(text);

    for (const auto& c : table.comments) {
        if (c.rfind(kSchemaPrefix, 0) == 0) {
            const std::string_view version = trim(std::string_view(c).substr(kSchemaPrefix.size()));
            if (version != kFeatureSchemaVersion) {
                throw SchemaMismatch("CSV schema '" + std::string(version) + "' does not match '" +
                                     std::string(kFeatureSchemaVersion) + "'");
            }
        }
    }
    if (table.header.empty()) throw SchemaMismatch("CSV has no header row");

    const auto& expected = csv_header();
    if (table.header.size() != expected.size()) {
        throw SchemaMismatch("CSV header has " + std::to_string(table.header.size()) + " columns, expected " +
                             std::to_string(expected.size()));
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (table.header[i] != expected[i]) {
            throw SchemaMismatch("CSV column " + std::to_string(i + 1) + " is '" + table.header[i] +
                                 "', expected '" + expected[i] + "'");
        }
    }

    std::vector<LabeledRecord> records;
    records.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const CsvRow row{table.lines[r], table.rows[r]};
        const std::size_t row_no = row.line;
        if (row.fields.size() != expected.size()) {
            throw ParseError(row_no, "expected " + std::to_string(expected.size()) + " columns, found " +
                                         std::to_string(row.fields.size()));
        }
        LabeledRecord rec;
        rec.identity.flow_id = row.fields[0];
        rec.identity.src_ip = std::string(trim(row.fields[1]));
        rec.identity.dst_ip = std::string(trim(row.fields[2]));
        const auto sp = parse_int<std::uint16_t>(row.fields[3], 0, 65535);
        const auto dp = parse_int<std::uint16_t>(row.fields[4], 0, 65535);
        const auto proto = parse_int<int>(row.fields[5], 0, 255);
        if (!sp || !dp) throw ParseError(row_no, "bad port number");
        if (!proto) throw ParseError(row_no, "bad protocol number");
        rec.identity.src_port = *sp;
        rec.identity.dst_port = *dp;
        rec.identity.protocol = *proto;
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            const auto v = parse_number(row.fields[kIdentityColumns + f]);
            if (!v) {
                throw ParseError(row_no, "column '" + expected[kIdentityColumns + f] + "': cannot parse '" +
                                             row.fields[kIdentityColumns + f] + "'");
            }
            rec.values[f] = *v;
        }
        std::string label(trim(row.fields.back()));
        if (options.resolve_labels && !label.empty()) {
            auto cls = options.taxonomy.resolve(label);
            if (!cls) throw ParseError(row_no, "unknown label '" + label + "'");
            label = std::move(*cls);
        }
        rec.label = std::move(label);
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<LabeledRecord> read_csv(const std::filesystem::path& path, const CsvReadOptions& options) {
    return parse_csv(read_file(path), options);
}

CleanReport clean(std::vector<LabeledRecord>& records) {
    CleanReport report;
    for (auto& r : records) {
        bool touched = false;
        for (double& v : r.values) {
            if (!std::isfinite(v)) {
                v = 0.0;
                ++report.replacements;
                touched = true;
            }
        }
        if (touched) ++report.rows_affected;
    }
    return report;
}

std::vector<std::vector<LabeledRecord>> stratified_split(std::span<const LabeledRecord> records,
                                                         std::span<const double> fractions,
                                                         std::uint64_t seed) {
    if (fractions.empty()) throw std::invalid_argument("at least one fraction is required");
    double sum = 0;
    for (double f : fractions) {
        if (f < 0) throw std::invalid_argument("fractions must be non-negative");
        sum += f;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw std::invalid_argument("fractions must sum to 1");
    if (records.empty()) throw EmptyClass("cannot split an empty record set");

    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].label.empty()) throw EmptyClass("record " + std::to_string(i) + " has no label");
        by_class[records[i].label].push_back(i);
    }

    std::vector<std::size_t> assignment(records.size(), 0);
    Rng rng(seed);
    for (auto& [label, members] : by_class) {
        rng.shuffle(std::span<std::size_t>(members));
        const double n = static_cast<double>(members.size());
        double cumulative = 0;
        std::size_t begin = 0;
        for (std::size_t p = 0; p < fractions.size(); ++p) {
            cumulative += fractions[p];
            std::size_t end = p + 1 == fractions.size()
                                  ? members.size()
                                  : std::min(members.size(), static_cast<std::size_t>(std::floor(n * cumulative + 0.5)));
            end = std::max(end, begin);
            for (std::size_t m = begin; m < end; ++m) assignment[members[m]] = p;
            begin = end;
        }
    }

    std::vector<std::vector<LabeledRecord>> parts(fractions.size());
    for (std::size_t i = 0; i < records.size(); ++i) parts[assignment[i]].push_back(records[i]);
    return parts;
}

Dataset to_dataset(std::span<const LabeledRecord> records, const std::vector<std::string>& class_order) {
    std::set<std::string> present;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].label.empty()) throw EmptyClass("record " + std::to_string(i) + " has no label");
        present.insert(records[i].label);
    }

    Dataset d;
    d.feature_names.assign(feature_names().begin(), feature_names().end());
    for (const auto& c : class_order) {
        if (present.erase(c)) d.class_names.push_back(c);
    }
    for (const auto& c : present) d.class_names.push_back(c);

    d.values.reserve(records.size() * kFeatureCount);
    for (const auto& r : records) {
        const auto it = std::find(d.class_names.begin(), d.class_names.end(), r.label);
        d.add(r.values, static_cast<std::size_t>(it - d.class_names.begin()));
    }
    return d;
}

}  // namespace flowcam
