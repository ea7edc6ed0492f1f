#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "osdal/io.hpp"

namespace osdal {

// Exit codes shared by all subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// generate: materialize the synthetic scenario of a config into a v1 feature
// file.
inline int cmd_generate(const std::filesystem::path& config_path,
                        const std::filesystem::path& out_path,
                        std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    try {
        const FullConfig cfg = load_config_file(config_path);
        const Scenario scenario = generate(cfg.scenario);
        save_features(scenario.data, out_path);
        out << "wrote " << scenario.data.samples.size() << " samples (dim "
            << scenario.data.dim << ") to " << out_path.string() << "\n";
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

struct RunOverrides {
    std::optional<std::vector<std::uint64_t>> seeds;
    std::optional<std::string> selector;
    int parallelism = 0; // 0 -> one thread per available core
};

namespace detail {

inline void print_summary(std::ostream& out, const std::string& selector,
                          const std::vector<AggregateRow>& rows) {
    out << "selector " << selector << "\n";
    out << "  cycle  accuracy  discovered  precision\n";
    for (const AggregateRow& r : rows) {
        char line[128];
        std::snprintf(line, sizeof(line), "  %5d  %8.4f  %10.2f  %9.4f\n", r.cycle,
                      r.accuracy_mean, r.discovered_mean, r.precision_mean);
        out << line;
    }
}

} // namespace detail

// run: execute every configured selector over all seeds, writing one run
// directory per selector under out_dir. Partial artifacts of completed
// selectors survive a failure.
inline int cmd_run(const std::filesystem::path& config_path,
                   const std::filesystem::path& out_dir, const RunOverrides& overrides = {},
                   std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    FullConfig cfg;
    try {
        cfg = load_config_file(config_path);
        if (overrides.seeds) cfg.run.seeds = *overrides.seeds;
        if (overrides.selector) {
            auto kind = parse_selector_kind(*overrides.selector);
            if (!kind)
                throw ValidationError("--selector: unknown selector '" + *overrides.selector + "'");
            SelectorSpec spec = cfg.selectors.front();
            spec.kind = *kind;
            cfg.selectors = {spec};
        }
        validate(cfg.run);
        validate(cfg.train);
        validate(cfg.scenario);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }

    try {
        std::filesystem::create_directories(out_dir);
        {
            auto os = detail::open_out(out_dir / "config.json");
            os << to_json(cfg).dump(2) << "\n";
        }
        int parallelism = overrides.parallelism;
        if (parallelism <= 0)
            parallelism = std::max(1u, std::thread::hardware_concurrency());
        for (const SelectorSpec& selector : cfg.selectors) {
            RunConfig rc{cfg.scenario, cfg.train, cfg.run, selector};
            const ExperimentResult result = run_experiment(rc, parallelism);
            write_run_directory(out_dir / to_string(selector.kind), cfg, selector, result);
            detail::print_summary(out, to_string(selector.kind), result.aggregate);
        }
        return kExitOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

// compare: merge per-selector aggregates into one long-format CSV
// (method, cycle, metric, mean, stderr) for external plotting.
inline int cmd_compare(const std::vector<std::filesystem::path>& run_dirs,
                       const std::filesystem::path& out_path,
                       std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    try {
        if (run_dirs.empty()) throw ValidationError("compare: need at least one run directory");
        std::string fingerprint;
        std::size_t cycle_count = 0;
        auto os = detail::open_out(out_path);
        os << "method,cycle,metric,mean,stderr\n";
        for (const std::filesystem::path& dir : run_dirs) {
            std::ifstream mf(dir / "manifest.json");
            if (!mf) throw FormatError("cannot open " + (dir / "manifest.json").string());
            nlohmann::json manifest;
            mf >> manifest;
            const std::string method = manifest.at("selector").get<std::string>();
            const std::string fp = manifest.at("scenario_fingerprint").get<std::string>();
            if (fingerprint.empty())
                fingerprint = fp;
            else if (fp != fingerprint)
                throw ValidationError("compare: " + dir.string() +
                                      " was produced on a different scenario (fingerprint " + fp +
                                      " vs " + fingerprint + ")");
            const std::vector<AggregateRow> rows = read_aggregate_csv(dir / "aggregate.csv");
            if (cycle_count == 0)
                cycle_count = rows.size();
            else if (rows.size() != cycle_count)
                throw ValidationError("compare: " + dir.string() + " has " +
                                      std::to_string(rows.size()) + " cycles, expected " +
                                      std::to_string(cycle_count));
            for (const AggregateRow& r : rows) {
                os << method << ',' << r.cycle << ",accuracy," << format_double(r.accuracy_mean)
                   << ',' << format_double(r.accuracy_se) << "\n";
                os << method << ',' << r.cycle << ",discovered_classes,"
                   << format_double(r.discovered_mean) << ',' << format_double(r.discovered_se)
                   << "\n";
                os << method << ',' << r.cycle << ",selection_precision,"
                   << format_double(r.precision_mean) << ',' << format_double(r.precision_se)
                   << "\n";
            }
        }
        out << "wrote " << out_path.string() << "\n";
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

} // namespace osdal
