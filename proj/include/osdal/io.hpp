#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "osdal/config.hpp"
#include "osdal/csv.hpp"
#include "osdal/engine.hpp"

namespace osdal {

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    return os;
}

inline std::string threshold_field(const EnergyThreshold& t, bool j_field) {
    if (t.skipped) return "";
    return format_double(j_field ? t.j : t.t_opt);
}

} // namespace detail

inline void write_cycle_metrics_csv(const std::filesystem::path& path,
                                    const std::vector<CycleRecord>& records) {
    auto os = detail::open_out(path);
    os << "cycle,accuracy,discovered_classes,selection_precision,"
          "size_L_I,size_L_D,size_L_O,size_U,t_opt,J,wall_seconds\n";
    for (const CycleRecord& r : records) {
        os << r.cycle << ',' << format_double(r.accuracy) << ',' << r.discovered << ','
           << format_double(r.precision) << ',' << r.size_labeled_ind << ','
           << r.size_labeled_disc << ',' << r.size_labeled_ood << ',' << r.size_unlabeled << ','
           << detail::threshold_field(r.threshold, false) << ','
           << detail::threshold_field(r.threshold, true) << ','
           << format_double(r.wall_seconds) << "\n";
    }
}

inline void write_routing_log_csv(const std::filesystem::path& path,
                                  const std::vector<RoutingLogEntry>& log) {
    auto os = detail::open_out(path);
    os << "cycle,sample_id,subset,class_label,destination_pool\n";
    for (const RoutingLogEntry& e : log) {
        os << e.cycle << ',' << e.sample_id << ',' << subset_tag(e.subset) << ',';
        if (e.class_label >= 0) os << e.class_label;
        os << ",L_" << e.destination << "\n";
    }
}

inline void write_selections_csv(const std::filesystem::path& path,
                                 const std::vector<SelectionRow>& rows) {
    auto os = detail::open_out(path);
    os << "cycle,sample_id,subset,class_label\n";
    for (const SelectionRow& r : rows) {
        os << r.cycle << ',' << r.sample_id << ',' << subset_tag(r.subset) << ',';
        if (r.class_label >= 0) os << r.class_label;
        os << "\n";
    }
}

inline void write_diagnostics_csv(const std::filesystem::path& path,
                                  const std::vector<DiagRow>& rows,
                                  const std::vector<DiagSummary>& summaries) {
    auto os = detail::open_out(path);
    os << "cycle,row,sample_id,E,Q,m_hat,b_f,m_hat_b,predicted_class,filtered,selected,"
          "t_opt,J,m_avg,sigma\n";
    for (const DiagRow& r : rows) {
        os << r.cycle << ",candidate," << r.sample_id << ',' << format_double(r.energy) << ',';
        if (r.scored)
            os << format_double(r.quotient) << ',' << format_double(r.m_hat) << ','
               << format_double(r.balance) << ',' << format_double(r.m_hat_balanced) << ','
               << r.predicted_class;
        else
            os << ",,,,";
        os << ',' << (r.filtered ? 1 : 0) << ',' << (r.selected ? 1 : 0) << ",,,,\n";
    }
    for (const DiagSummary& s : summaries) {
        os << s.cycle << ",summary,,,,,,,,,,"
           << detail::threshold_field(s.threshold, false) << ','
           << detail::threshold_field(s.threshold, true) << ',' << format_double(s.m_avg) << ','
           << format_double(s.sigma) << "\n";
    }
}

inline void write_aggregate_csv(const std::filesystem::path& path,
                                const std::vector<AggregateRow>& rows) {
    auto os = detail::open_out(path);
    os << "cycle,accuracy_mean,accuracy_se,discovered_mean,discovered_se,"
          "precision_mean,precision_se\n";
    for (const AggregateRow& r : rows) {
        os << r.cycle << ',' << format_double(r.accuracy_mean) << ','
           << format_double(r.accuracy_se) << ',' << format_double(r.discovered_mean) << ','
           << format_double(r.discovered_se) << ',' << format_double(r.precision_mean) << ','
           << format_double(r.precision_se) << "\n";
    }
}

inline std::vector<AggregateRow> read_aggregate_csv(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line))
        throw FormatError(path.string() + ":1: empty aggregate file");
    std::vector<AggregateRow> rows;
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        const auto f = split_csv_line(line);
        if (f.size() != 7) throw FormatError(where + ": expected 7 fields");
        AggregateRow r;
        r.cycle = static_cast<int>(parse_long(f[0], where));
        r.accuracy_mean = parse_double(f[1], where);
        r.accuracy_se = parse_double(f[2], where);
        r.discovered_mean = parse_double(f[3], where);
        r.discovered_se = parse_double(f[4], where);
        r.precision_mean = parse_double(f[5], where);
        r.precision_se = parse_double(f[6], where);
        rows.push_back(r);
    }
    return rows;
}

// FNV-1a over the materialized scenario document (plus the dataset bytes for
// file-backed scenarios); lets compare() refuse to merge runs from different
// scenarios.
inline std::string scenario_fingerprint(const ScenarioSpec& spec) {
    FullConfig tmp;
    tmp.scenario = spec;
    const std::string dump = to_json(tmp)["scenario"].dump();
    std::uint64_t h = fnv1a64({reinterpret_cast<const unsigned char*>(dump.data()), dump.size()});
    if (!spec.dataset_path.empty()) {
        std::ifstream is(spec.dataset_path, std::ios::binary);
        if (is) {
            std::stringstream ss;
            ss << is.rdbuf();
            const std::string bytes = ss.str();
            h ^= fnv1a64({reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()});
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

// Per-selector run manifest: selector, RNG identity, fingerprint, and the
// fully materialized config.
inline void write_manifest(const std::filesystem::path& path, const FullConfig& cfg,
                           const SelectorSpec& selector, const ExperimentResult& result) {
    nlohmann::json doc;
    doc["osdal_version"] = kVersion;
    doc["rng"] = "mt19937_64 (explicit transforms, see README)";
    doc["selector"] = to_string(selector.kind);
    doc["selector_params"] = {{"mc_passes", selector.mc_passes},
                              {"mc_dropout", selector.mc_dropout},
                              {"ee_margin_in", selector.ee_margin_in},
                              {"ee_margin_out", selector.ee_margin_out}};
    doc["scenario_fingerprint"] = scenario_fingerprint(cfg.scenario);
    std::vector<std::uint64_t> truncated;
    for (const SeedRun& r : result.runs)
        if (r.truncated) truncated.push_back(r.seed);
    doc["truncated_seeds"] = truncated;
    doc["config"] = to_json(cfg);
    auto os = detail::open_out(path);
    os << doc.dump(2) << "\n";
}

// Writes the whole per-selector run directory.
inline void write_run_directory(const std::filesystem::path& dir, const FullConfig& cfg,
                                const SelectorSpec& selector, const ExperimentResult& result) {
    std::filesystem::create_directories(dir);
    for (const SeedRun& run : result.runs) {
        const std::filesystem::path seed_dir = dir / ("seed_" + std::to_string(run.seed));
        std::filesystem::create_directories(seed_dir);
        write_cycle_metrics_csv(seed_dir / "cycle_metrics.csv", run.records);
        write_routing_log_csv(seed_dir / "routing_log.csv", run.routing_log);
        write_selections_csv(seed_dir / "selections.csv", run.selections);
        if (is_joda_variant(selector.kind) && cfg.run.write_diagnostics)
            write_diagnostics_csv(seed_dir / "diagnostics.csv", run.diagnostics,
                                  run.diag_summaries);
    }
    write_aggregate_csv(dir / "aggregate.csv", result.aggregate);
    write_manifest(dir / "manifest.json", cfg, selector, result);
}

} // namespace osdal
