#include "flowcam/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include <CLI11.hpp>

#include "flowcam/dataset.hpp"
#include "flowcam/errors.hpp"
#include "flowcam/features.hpp"
#include "flowcam/inspect.hpp"
#include "flowcam/io_util.hpp"
#include "flowcam/model.hpp"
#include "flowcam/pipeline.hpp"
#include "flowcam/synth.hpp"

namespace flowcam {

namespace {

class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string shortest(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::int64_t seconds_to_us(double s) { return static_cast<std::int64_t>(std::llround(s * 1e6)); }

LabelTaxonomy load_taxonomy(const std::string& path) {
    if (path.empty()) return LabelTaxonomy::defaults();
    return LabelTaxonomy::from_json(read_file(path));
}

struct LoadedCsv {
    std::vector<LabeledRecord> records;
    CleanReport cleaned;
};

LoadedCsv load_records(const std::vector<std::string>& paths, const CsvReadOptions& options) {
    LoadedCsv out;
    for (const auto& p : paths) {
        auto part = read_csv(p, options);
        out.records.insert(out.records.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    out.cleaned = clean(out.records);
    return out;
}

void print_clean(std::ostream& out, const CleanReport& c) {
    if (c.replacements) {
        out << "cleaned " << c.replacements << " non-finite values in " << c.rows_affected << " rows\n";
    }
}

AppContext parse_app(const std::string& s) {
    if (s == "skype") return AppContext::SKYPE;
    if (s == "teams") return AppContext::TEAMS;
    if (s == "meet") return AppContext::MEET;
    return AppContext::GENERIC;
}

struct Options {
    std::vector<std::string> inputs;
    std::string output;
    std::string label;
    std::string taxonomy;
    double flow_timeout_s = 600;
    double activity_threshold_s = 5;
    int max_depth = 11;
    std::size_t min_samples_split = 2;
    double importance_threshold = kDefaultImportanceThreshold;
    bool no_prune = false;
    std::size_t k = 10;
    std::uint64_t seed = 42;
    bool json = false;
    std::string report_out;
    std::string app = "generic";
    std::size_t max_flows = 50;
    std::string kind;
    std::size_t n_flows = 1;
    std::string manifest;
    std::string model;
};

int cmd_extract(const Options& o, std::ostream& out) {
    ExtractConfig config;
    config.assembler.flow_timeout_us = seconds_to_us(o.flow_timeout_s);
    config.features.activity_threshold_us = seconds_to_us(o.activity_threshold_s);
    config.label = o.label;
    if (!o.label.empty() && !load_taxonomy(o.taxonomy).resolve(o.label)) {
        throw UsageError("label '" + o.label + "' is not a known class or application");
    }
    std::vector<LabeledRecord> records;
    LoadStats total;
    for (const auto& in : o.inputs) {
        ExtractResult r = extract(in, config);
        total.frames += r.stats.frames;
        total.decoded += r.stats.decoded;
        total.skipped += r.stats.skipped;
        records.insert(records.end(), std::make_move_iterator(r.records.begin()), std::make_move_iterator(r.records.end()));
    }
    write_csv(records, o.output);
    out << "extracted " << records.size() << " flows from " << total.decoded << " packets (" << total.skipped
        << " frames skipped) -> " << o.output << "\n";
    return 0;
}

int cmd_inspect(const Options& o, std::ostream& out) {
    AssemblerConfig ac;
    ac.flow_timeout_us = seconds_to_us(o.flow_timeout_s);
    ac.payload_prefix_bytes = 64;
    const LoadedPackets loaded = load_packets(o.inputs.front());
    const auto flows = assemble_flows(loaded.packets, ac);
    const auto report = inspect_flows(flows, parse_app(o.app));
    const std::string text = o.json ? report_to_json(report) : report_to_text(report, o.max_flows);
    if (o.output.empty()) {
        out << text;
    } else {
        write_file_atomic(o.output, text);
        out << "inspected " << flows.size() << " flows -> " << o.output << "\n";
    }
    return 0;
}

int cmd_synth(const Options& o, std::ostream& out) {
    const auto kind = parse_synth_kind(o.kind);
    if (!kind) throw UsageError("unknown kind '" + o.kind + "' (camera, conf, share)");
    SynthProfile profile;
    profile.kind = *kind;
    profile.n_flows = o.n_flows;
    profile.seed = o.seed;
    std::optional<std::filesystem::path> manifest;
    if (!o.manifest.empty()) manifest = o.manifest;
    const auto flows = generate(profile, o.output, manifest);
    std::size_t packets = 0;
    for (const auto& f : flows) packets += f.packets();
    out << "generated " << flows.size() << " " << to_string(*kind) << " flows, " << packets << " packets -> "
        << o.output << "\n";
    return 0;
}

TrainParams train_params(const Options& o) {
    TrainParams p;
    p.max_depth = o.max_depth;
    p.min_samples_split = o.min_samples_split;
    p.seed = o.seed;
    return p;
}

int cmd_train(const Options& o, std::ostream& out) {
    const LabelTaxonomy taxonomy = load_taxonomy(o.taxonomy);
    CsvReadOptions ro;
    ro.taxonomy = taxonomy;
    LoadedCsv csv = load_records(o.inputs, ro);
    print_clean(out, csv.cleaned);
    const Dataset data = to_dataset(csv.records, taxonomy.classes());
    const TrainParams params = train_params(o);

    DecisionTreeModel model;
    if (o.no_prune) {
        model = train(data, params);
        if (o.k > 0) {
            out << "all features:\n" << cv_report_to_text(cross_validate(data, o.k, params, o.seed));
        }
    } else {
        PruneResult pr = prune_features(data, params, o.importance_threshold, o.k, o.seed);
        out << "importance threshold " << shortest(o.importance_threshold) << ": kept " << pr.selected.size()
            << " of " << data.n_features() << " features\n";
        if (pr.full_cv && pr.pruned_cv) {
            out << "all features:\n" << cv_report_to_text(*pr.full_cv);
            out << "pruned features:\n" << cv_report_to_text(*pr.pruned_cv);
        }
        model = std::move(pr.pruned_model);
    }
    save_model(model, o.output);
    out << "model: depth " << model.depth() << ", " << model.leaf_count() << " leaves, " << data.size()
        << " samples, classes";
    for (const auto& c : model.class_names) out << " " << c;
    out << " -> " << o.output << "\n";
    return 0;
}

int cmd_cv(const Options& o, std::ostream& out) {
    const LabelTaxonomy taxonomy = load_taxonomy(o.taxonomy);
    CsvReadOptions ro;
    ro.taxonomy = taxonomy;
    LoadedCsv csv = load_records(o.inputs, ro);
    print_clean(out, csv.cleaned);
    const Dataset data = to_dataset(csv.records, taxonomy.classes());
    const CvReport report = cross_validate(data, o.k, train_params(o), o.seed);
    const std::string text = o.json ? cv_report_to_json(report) : cv_report_to_text(report);
    out << text;
    if (!o.report_out.empty()) write_file_atomic(o.report_out, text);
    return 0;
}

int cmd_predict(const Options& o, std::ostream& out, std::ostream& err) {
    const DecisionTreeModel model = load_model(o.model);
    const std::string expected = csv_schema_hash();
    if (model.schema_hash() != expected) {
        throw SchemaMismatch("schema hash mismatch: model " + model.schema_hash() + ", input " + expected);
    }
    CsvReadOptions ro;
    ro.resolve_labels = false;
    LoadedCsv csv = load_records(o.inputs, ro);
    print_clean(err, csv.cleaned);

    std::vector<std::string> predicted;
    std::vector<double> probability;
    std::vector<std::vector<std::string>> cells;
    predicted.reserve(csv.records.size());
    for (const auto& r : csv.records) {
        const auto proba = predict_proba(model, r.values);
        const std::size_t cls = predict(model, r.values);
        predicted.push_back(model.class_names[cls]);
        probability.push_back(proba[cls]);
        cells.push_back({predicted.back(), shortest(probability.back())});
    }
    const std::vector<std::string> extra = {"Predicted", "Probability"};
    const std::string text = format_csv(csv.records, extra, cells);
    if (o.output.empty()) {
        out << text;
    } else {
        write_file_atomic(o.output, text);
        out << format_prediction_report(predicted, probability, model.class_names);
    }
    return 0;
}

int report_model(const DecisionTreeModel& model, std::ostream& out) {
    const auto imp = feature_importances(model);
    std::vector<std::size_t> order(imp.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return imp[a] > imp[b]; });
    out << "model: depth " << model.depth() << ", " << model.leaf_count() << " leaves, schema " << model.schema_hash()
        << "\nfeature importances:\n";
    for (std::size_t i : order) {
        if (imp[i] <= 0) break;
        out << "  " << fixed(imp[i], 6) << "  " << model.feature_names[i] << "\n";
    }
    for (double t : {kNegligibleImportance, kDefaultImportanceThreshold}) {
        const auto n = std::count_if(imp.begin(), imp.end(), [t](double v) { return v >= t; });
        out << "features with importance >= " << shortest(t) << ": " << n << " of " << imp.size() << "\n";
    }
    return 0;
}

int cmd_report(const Options& o, std::ostream& out) {
    const std::string text = read_file(o.inputs.front());
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') return report_model(parse_model(text), out);

    const CsvTable table = parse_csv_table(text);
    const auto pcol = table.column("Predicted");
    const auto qcol = table.column("Probability");
    if (!pcol || !qcol) throw SchemaMismatch("expected a predictions CSV with Predicted and Probability columns");
    const auto lcol = table.column("Label");
    const LabelTaxonomy taxonomy = load_taxonomy(o.taxonomy);

    std::vector<std::string> predicted, truth;
    std::vector<double> probability;
    bool all_labeled = lcol.has_value();
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() != table.header.size()) throw ParseError(table.lines[r], "wrong column count");
        predicted.push_back(row[*pcol]);
        double p = 0;
        const auto& cell = row[*qcol];
        const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), p);
        if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
            throw ParseError(table.lines[r], "bad probability '" + cell + "'");
        }
        probability.push_back(p);
        if (all_labeled) {
            const auto cls = taxonomy.resolve(row[*lcol]);
            if (cls) {
                truth.push_back(*cls);
            } else {
                all_labeled = false;
            }
        }
    }
    if (!all_labeled) truth.clear();
    out << format_prediction_report(predicted, probability, taxonomy.classes(), truth);
    return 0;
}

}  // namespace

double confident_fraction(std::span<const double> probability) {
    if (probability.empty()) return 0;
    const auto n = std::count_if(probability.begin(), probability.end(), [](double p) { return p >= 0.9; });
    return static_cast<double>(n) / static_cast<double>(probability.size());
}

std::string format_prediction_report(std::span<const std::string> predicted, std::span<const double> probability,
                                     const std::vector<std::string>& class_order, std::span<const std::string> truth) {
    if (predicted.size() != probability.size()) throw std::invalid_argument("prediction and probability counts differ");
    const std::size_t n = predicted.size();
    std::vector<std::string> classes;
    for (const auto& c : class_order) {
        if (std::find(predicted.begin(), predicted.end(), c) != predicted.end()) classes.push_back(c);
    }
    std::vector<std::string> rest;
    for (const auto& p : predicted) {
        if (std::find(classes.begin(), classes.end(), p) == classes.end() &&
            std::find(rest.begin(), rest.end(), p) == rest.end()) {
            rest.push_back(p);
        }
    }
    std::sort(rest.begin(), rest.end());
    classes.insert(classes.end(), rest.begin(), rest.end());

    auto pct = [n](std::size_t k) { return fixed(n ? 100.0 * static_cast<double>(k) / static_cast<double>(n) : 0.0, 2); };
    std::string out = "flows: " + std::to_string(n) + "\npredicted classes:\n";
    for (const auto& c : classes) {
        const auto k = static_cast<std::size_t>(std::count(predicted.begin(), predicted.end(), c));
        out += "  " + c + std::string(c.size() < 10 ? 10 - c.size() : 1, ' ') + std::to_string(k) + "  " + pct(k) +
               "%\n";
    }
    std::array<std::size_t, 10> bins{};
    for (double p : probability) {
        const std::size_t b = p >= 0.9 ? 9 : static_cast<std::size_t>(std::clamp(std::floor(p * 10), 0.0, 8.0));
        ++bins[b];
    }
    out += "class probability histogram:\n";
    for (std::size_t b = 0; b < bins.size(); ++b) {
        out += "  [" + fixed(b / 10.0, 1) + ", " + fixed((b + 1) / 10.0, 1) + (b == 9 ? "]" : ")") + "  " +
               std::to_string(bins[b]) + "\n";
    }
    out += "flows with class probability in [0.9, 1.0]: " + std::to_string(bins[9]) + " of " + std::to_string(n) +
           " (" + pct(bins[9]) + "%)\n";
    if (!truth.empty() && truth.size() == n) {
        std::size_t correct = 0;
        for (std::size_t i = 0; i < n; ++i) correct += predicted[i] == truth[i];
        out += "accuracy against labels: " + fixed(n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0, 4) +
               " (" + std::to_string(correct) + " of " + std::to_string(n) + ")\n";
    }
    return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"flowcam: flow features, media protocol hints and decision-tree traffic classification"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "flowcam 0.1.0");
    Options o;

    auto add_flow_opts = [&](CLI::App* sub) {
        sub->add_option("--flow-timeout", o.flow_timeout_s, "flow window in seconds")
            ->capture_default_str()
            ->check(CLI::PositiveNumber);
    };
    auto add_model_opts = [&](CLI::App* sub) {
        sub->add_option("--max-depth", o.max_depth, "maximum tree depth")->capture_default_str()->check(CLI::NonNegativeNumber);
        sub->add_option("--min-samples-split", o.min_samples_split, "smallest node that may be split")
            ->capture_default_str()
            ->check(CLI::Range(std::size_t{2}, std::numeric_limits<std::size_t>::max()));
        sub->add_option("--seed", o.seed, "fold shuffling seed")->capture_default_str();
        sub->add_option("--taxonomy", o.taxonomy, "label taxonomy JSON")->check(CLI::ExistingFile);
    };

    auto* extract_cmd = app.add_subcommand("extract", "pcap -> 84-column flow CSV");
    extract_cmd->add_option("pcap", o.inputs, "input captures")->required()->check(CLI::ExistingFile);
    extract_cmd->add_option("-o,--output", o.output, "output CSV")->required();
    extract_cmd->add_option("--label", o.label, "label for every flow (class or application)");
    extract_cmd->add_option("--activity-threshold", o.activity_threshold_s, "active/idle gap in seconds")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    extract_cmd->add_option("--taxonomy", o.taxonomy, "label taxonomy JSON")->check(CLI::ExistingFile);
    add_flow_opts(extract_cmd);

    auto* inspect_cmd = app.add_subcommand("inspect", "RTP/RTCP/QUIC hints and port profiles");
    inspect_cmd->add_option("pcap", o.inputs, "input capture")->required()->expected(1)->check(CLI::ExistingFile);
    inspect_cmd->add_option("--app", o.app, "codec table")
        ->capture_default_str()
        ->check(CLI::IsMember({"skype", "teams", "meet", "generic"}));
    inspect_cmd->add_flag("--json", o.json, "JSON output");
    inspect_cmd->add_option("--max-flows", o.max_flows, "flows listed in the text report")->capture_default_str();
    inspect_cmd->add_option("-o,--output", o.output, "write the report here instead of stdout");
    add_flow_opts(inspect_cmd);

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic capture");
    synth_cmd->add_option("--kind", o.kind, "camera, conf or share")->required();
    synth_cmd->add_option("-n,--flows", o.n_flows, "number of flows")
        ->capture_default_str()
        ->check(CLI::Range(std::size_t{1}, std::size_t{50'000}));
    synth_cmd->add_option("--seed", o.seed, "generator seed")->capture_default_str();
    synth_cmd->add_option("-o,--output", o.output, "output pcap")->required();
    synth_cmd->add_option("--manifest", o.manifest, "manifest path (default <pcap>.manifest.jsonl)");

    auto* train_cmd = app.add_subcommand("train", "train a decision tree (with importance pruning)");
    train_cmd->add_option("csv", o.inputs, "training CSV files")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("-o,--output", o.output, "model file")->required();
    train_cmd->add_option("--importance-threshold", o.importance_threshold,
                          "drop features below this Gini importance (1e-6 keeps all but negligible ones)")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    train_cmd->add_flag("--no-prune", o.no_prune, "train on all features");
    train_cmd->add_option("-k,--folds", o.k, "cross-validation folds; 0 skips CV")->capture_default_str();
    add_model_opts(train_cmd);

    auto* cv_cmd = app.add_subcommand("cv", "stratified k-fold cross-validation");
    cv_cmd->add_option("csv", o.inputs, "CSV files")->required()->check(CLI::ExistingFile);
    cv_cmd->add_option("-k,--folds", o.k, "number of folds")
        ->capture_default_str()
        ->check(CLI::Range(std::size_t{2}, std::size_t{1'000'000}));
    cv_cmd->add_flag("--json", o.json, "JSON output");
    cv_cmd->add_option("--report-out", o.report_out, "also write the report to this file");
    add_model_opts(cv_cmd);

    auto* predict_cmd = app.add_subcommand("predict", "append predicted class and probability to a CSV");
    predict_cmd->add_option("model", o.model, "model file")->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("csv", o.inputs, "input CSV files")->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("-o,--output", o.output, "output CSV (stdout if omitted)");

    auto* report_cmd = app.add_subcommand("report", "summarize a predictions CSV or a model file");
    report_cmd->add_option("file", o.inputs, "predictions CSV or model")->required()->expected(1)->check(CLI::ExistingFile);
    report_cmd->add_option("--taxonomy", o.taxonomy, "label taxonomy JSON")->check(CLI::ExistingFile);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << app.version() << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (extract_cmd->parsed()) return cmd_extract(o, out);
        if (inspect_cmd->parsed()) return cmd_inspect(o, out);
        if (synth_cmd->parsed()) return cmd_synth(o, out);
        if (train_cmd->parsed()) return cmd_train(o, out);
        if (cv_cmd->parsed()) return cmd_cv(o, out);
        if (predict_cmd->parsed()) return cmd_predict(o, out, err);
        if (report_cmd->parsed()) return cmd_report(o, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace flowcam
