// osdal command line: scenario generation, experiment runs, result merging.

#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "osdal/cli.hpp"

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<std::uint64_t> seeds;
    std::string cur;
    for (char c : csv + ",") {
        if (c == ',') {
            if (!cur.empty()) seeds.push_back(std::stoull(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    return seeds;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"osdal: open-set discovery active learning benchmark"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path;
    std::string seeds_csv;
    std::string selector;
    int parallel = 0;
    std::vector<std::string> run_dirs;

    auto* gen = app.add_subcommand("generate", "write a synthetic feature dataset");
    gen->add_option("--config", config_path, "config file (JSON)")->required();
    gen->add_option("--out", out_path, "output dataset path")->required();

    auto* run = app.add_subcommand("run", "execute the configured experiment");
    run->add_option("--config", config_path, "config file (JSON)")->required();
    run->add_option("--out", out_path, "output run directory")->required();
    run->add_option("--seeds", seeds_csv, "comma-separated seed override");
    run->add_option("--selector", selector, "single-selector override");
    run->add_option("--parallel", parallel, "parallel seed runs (default: cores)");

    auto* cmp = app.add_subcommand("compare", "merge run directories for plotting");
    cmp->add_option("--out", out_path, "output CSV path")->required();
    cmp->add_option("dirs", run_dirs, "per-selector run directories")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? osdal::kExitOk : osdal::kExitValidation;
    }

    // Environment may override only the output location and parallelism.
    if (const char* env_out = std::getenv("OSDAL_OUT"); env_out && *env_out && !gen->parsed())
        out_path = env_out;
    if (const char* env_par = std::getenv("OSDAL_PARALLEL"); env_par && *env_par && parallel == 0)
        parallel = std::atoi(env_par);

    if (gen->parsed()) return osdal::cmd_generate(config_path, out_path);
    if (run->parsed()) {
        osdal::RunOverrides ov;
        if (!seeds_csv.empty()) ov.seeds = parse_seed_list(seeds_csv);
        if (!selector.empty()) ov.selector = selector;
        ov.parallelism = parallel;
        return osdal::cmd_run(config_path, out_path, ov);
    }
    if (cmp->parsed()) {
        std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
        return osdal::cmd_compare(dirs, out_path);
    }
    return osdal::kExitValidation;
}
