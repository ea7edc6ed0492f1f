#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "osdal/engine.hpp"

namespace osdal {

// Declarative experiment description: one JSON document with explicit schema
// versioning. Unknown keys are rejected with their path; every default is
// materialized back into the persisted run manifest so a run directory is
// self-describing.
struct FullConfig {
    ScenarioSpec scenario;
    TrainConfig train;
    RunSettings run;
    std::vector<SelectorSpec> selectors = {SelectorSpec{}};
};

inline void validate(const TrainConfig& t) {
    if (t.epochs < 1) throw ValidationError("train.epochs: must be >= 1");
    if (t.batch_size < 1) throw ValidationError("train.batch_size: must be >= 1");
    if (!(t.learning_rate > 0.0)) throw ValidationError("train.learning_rate: must be > 0");
    if (t.momentum < 0.0 || t.momentum >= 1.0)
        throw ValidationError("train.momentum: must be in [0, 1)");
    if (t.weight_decay < 0.0) throw ValidationError("train.weight_decay: must be >= 0");
    if (t.lambda_oe < 0.0) throw ValidationError("train.lambda_oe: must be >= 0");
    if (t.dropout < 0.0 || t.dropout >= 1.0)
        throw ValidationError("train.dropout: must be in [0, 1)");
    if (t.validation_fraction < 0.0 || t.validation_fraction >= 1.0)
        throw ValidationError("train.validation_fraction: must be in [0, 1)");
    if (t.hidden.empty()) throw ValidationError("train.hidden: must have at least one layer width");
    for (int h : t.hidden)
        if (h < 1) throw ValidationError("train.hidden: widths must be >= 1");
    if (!(t.ee_margin_in < t.ee_margin_out))
        throw ValidationError("train: ee_margin_in must be < ee_margin_out");
}

namespace detail {

using nlohmann::json;

inline void reject_unknown_keys(const json& obj, const std::string& path,
                                const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ValidationError(path + "." + it.key() + ": unknown key");
}

template <typename T>
T get_or(const json& obj, const std::string& path, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(path + "." + key + ": wrong type");
    }
}

inline void parse_scenario(const json& obj, ScenarioSpec& s) {
    reject_unknown_keys(obj, "scenario",
                        {"dim", "known_classes", "discoverable_classes", "samples_per_class",
                         "per_class_counts", "ood_mode", "ood_ratio", "separation",
                         "discoverable_offset", "test_fraction", "seed", "dataset_path"});
    s.dim = get_or(obj, "scenario", "dim", s.dim);
    s.known_classes = get_or(obj, "scenario", "known_classes", s.known_classes);
    s.discoverable_classes =
        get_or(obj, "scenario", "discoverable_classes", s.discoverable_classes);
    s.samples_per_class = get_or(obj, "scenario", "samples_per_class", s.samples_per_class);
    s.per_class_counts = get_or(obj, "scenario", "per_class_counts", s.per_class_counts);
    const std::string mode =
        get_or<std::string>(obj, "scenario", "ood_mode",
                            s.ood_mode == OodMode::gaussian_far ? "gaussian_far" : "uniform_noise");
    if (mode == "gaussian_far")
        s.ood_mode = OodMode::gaussian_far;
    else if (mode == "uniform_noise")
        s.ood_mode = OodMode::uniform_noise;
    else
        throw ValidationError("scenario.ood_mode: expected gaussian_far or uniform_noise");
    s.ood_ratio = get_or(obj, "scenario", "ood_ratio", s.ood_ratio);
    s.separation = get_or(obj, "scenario", "separation", s.separation);
    s.discoverable_offset = get_or(obj, "scenario", "discoverable_offset", s.discoverable_offset);
    s.test_fraction = get_or(obj, "scenario", "test_fraction", s.test_fraction);
    s.seed = get_or(obj, "scenario", "seed", s.seed);
    s.dataset_path = get_or(obj, "scenario", "dataset_path", s.dataset_path);
}

inline void parse_train(const json& obj, TrainConfig& t) {
    reject_unknown_keys(obj, "train",
                        {"epochs", "batch_size", "learning_rate", "momentum", "weight_decay",
                         "lambda_oe", "hidden", "dropout", "validation_fraction"});
    t.epochs = get_or(obj, "train", "epochs", t.epochs);
    t.batch_size = get_or(obj, "train", "batch_size", t.batch_size);
    t.learning_rate = get_or(obj, "train", "learning_rate", t.learning_rate);
    t.momentum = get_or(obj, "train", "momentum", t.momentum);
    t.weight_decay = get_or(obj, "train", "weight_decay", t.weight_decay);
    t.lambda_oe = get_or(obj, "train", "lambda_oe", t.lambda_oe);
    t.hidden = get_or(obj, "train", "hidden", t.hidden);
    t.dropout = get_or(obj, "train", "dropout", t.dropout);
    t.validation_fraction = get_or(obj, "train", "validation_fraction", t.validation_fraction);
}

inline void parse_run(const json& obj, RunSettings& r, std::vector<std::string>& selector_names) {
    reject_unknown_keys(obj, "run",
                        {"query_size", "cycles", "seeds", "selector", "selectors",
                         "initial_labeled_per_class", "initial_ood_in_labeled",
                         "initial_ood_fraction", "promotion_threshold", "write_diagnostics"});
    r.query_size = get_or(obj, "run", "query_size", r.query_size);
    r.cycles = get_or(obj, "run", "cycles", r.cycles);
    r.seeds = get_or(obj, "run", "seeds", r.seeds);
    r.initial_labeled_per_class =
        get_or(obj, "run", "initial_labeled_per_class", r.initial_labeled_per_class);
    r.initial_ood_in_labeled =
        get_or(obj, "run", "initial_ood_in_labeled", r.initial_ood_in_labeled);
    r.initial_ood_fraction = get_or(obj, "run", "initial_ood_fraction", r.initial_ood_fraction);
    r.promotion_threshold = get_or(obj, "run", "promotion_threshold", r.promotion_threshold);
    r.write_diagnostics = get_or(obj, "run", "write_diagnostics", r.write_diagnostics);
    if (obj.contains("selector") && obj.contains("selectors"))
        throw ValidationError("run.selector: give either selector or selectors, not both");
    if (obj.contains("selector"))
        selector_names = {get_or<std::string>(obj, "run", "selector", "joda")};
    else if (obj.contains("selectors"))
        selector_names = get_or(obj, "run", "selectors", selector_names);
}

inline void parse_selector_params(const json& obj, SelectorSpec& p) {
    reject_unknown_keys(obj, "selector_params",
                        {"mc_passes", "mc_dropout", "ee_margin_in", "ee_margin_out"});
    p.mc_passes = get_or(obj, "selector_params", "mc_passes", p.mc_passes);
    p.mc_dropout = get_or(obj, "selector_params", "mc_dropout", p.mc_dropout);
    p.ee_margin_in = get_or(obj, "selector_params", "ee_margin_in", p.ee_margin_in);
    p.ee_margin_out = get_or(obj, "selector_params", "ee_margin_out", p.ee_margin_out);
    if (p.mc_passes < 1) throw ValidationError("selector_params.mc_passes: must be >= 1");
    if (p.mc_dropout < 0.0 || p.mc_dropout >= 1.0)
        throw ValidationError("selector_params.mc_dropout: must be in [0, 1)");
    if (!(p.ee_margin_in < p.ee_margin_out))
        throw ValidationError("selector_params.ee_margin_in: must be < ee_margin_out");
}

} // namespace detail

inline FullConfig parse_config(const nlohmann::json& doc) {
    using detail::get_or;
    if (!doc.is_object()) throw ValidationError("config: top level must be an object");
    detail::reject_unknown_keys(doc, "config",
                                {"schema_version", "scenario", "train", "run",
                                 "selector_params"});
    if (!doc.contains("schema_version"))
        throw ValidationError("config.schema_version: required");
    if (!doc.at("schema_version").is_number_integer() ||
        doc.at("schema_version").get<int>() != 1)
        throw ValidationError("config.schema_version: expected 1");

    FullConfig cfg;
    SelectorSpec params;
    std::vector<std::string> selector_names = {"joda"};
    if (doc.contains("scenario")) detail::parse_scenario(doc.at("scenario"), cfg.scenario);
    if (doc.contains("train")) detail::parse_train(doc.at("train"), cfg.train);
    if (doc.contains("run")) detail::parse_run(doc.at("run"), cfg.run, selector_names);
    if (doc.contains("selector_params"))
        detail::parse_selector_params(doc.at("selector_params"), params);

    if (selector_names.empty()) throw ValidationError("run.selectors: must be nonempty");
    cfg.selectors.clear();
    for (const std::string& name : selector_names) {
        auto kind = parse_selector_kind(name);
        if (!kind) throw ValidationError("run.selector: unknown selector '" + name + "'");
        SelectorSpec spec = params;
        spec.kind = *kind;
        cfg.selectors.push_back(spec);
    }

    validate(cfg.scenario);
    validate(cfg.train);
    validate(cfg.run);
    return cfg;
}

inline FullConfig parse_config_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config: invalid JSON: ") + e.what());
    }
    return parse_config(doc);
}

inline FullConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

// Full materialization: every knob with its final value, alphabetically
// ordered keys, so the document alone reproduces the run.
inline nlohmann::json to_json(const FullConfig& cfg) {
    nlohmann::json doc;
    doc["schema_version"] = 1;
    auto& s = doc["scenario"];
    s["dim"] = cfg.scenario.dim;
    s["known_classes"] = cfg.scenario.known_classes;
    s["discoverable_classes"] = cfg.scenario.discoverable_classes;
    s["samples_per_class"] = cfg.scenario.samples_per_class;
    s["per_class_counts"] = cfg.scenario.per_class_counts;
    s["ood_mode"] =
        cfg.scenario.ood_mode == OodMode::gaussian_far ? "gaussian_far" : "uniform_noise";
    s["ood_ratio"] = cfg.scenario.ood_ratio;
    s["separation"] = cfg.scenario.separation;
    s["discoverable_offset"] = cfg.scenario.discoverable_offset;
    s["test_fraction"] = cfg.scenario.test_fraction;
    s["seed"] = cfg.scenario.seed;
    s["dataset_path"] = cfg.scenario.dataset_path;
    auto& t = doc["train"];
    t["epochs"] = cfg.train.epochs;
    t["batch_size"] = cfg.train.batch_size;
    t["learning_rate"] = cfg.train.learning_rate;
    t["momentum"] = cfg.train.momentum;
    t["weight_decay"] = cfg.train.weight_decay;
    t["lambda_oe"] = cfg.train.lambda_oe;
    t["hidden"] = cfg.train.hidden;
    t["dropout"] = cfg.train.dropout;
    t["validation_fraction"] = cfg.train.validation_fraction;
    auto& r = doc["run"];
    r["query_size"] = cfg.run.query_size;
    r["cycles"] = cfg.run.cycles;
    r["seeds"] = cfg.run.seeds;
    std::vector<std::string> names;
    for (const SelectorSpec& sel : cfg.selectors) names.push_back(to_string(sel.kind));
    r["selectors"] = names;
    r["initial_labeled_per_class"] = cfg.run.initial_labeled_per_class;
    r["initial_ood_in_labeled"] = cfg.run.initial_ood_in_labeled;
    r["initial_ood_fraction"] = cfg.run.initial_ood_fraction;
    r["promotion_threshold"] = cfg.run.promotion_threshold;
    r["write_diagnostics"] = cfg.run.write_diagnostics;
    auto& p = doc["selector_params"];
    p["mc_passes"] = cfg.selectors.front().mc_passes;
    p["mc_dropout"] = cfg.selectors.front().mc_dropout;
    p["ee_margin_in"] = cfg.selectors.front().ee_margin_in;
    p["ee_margin_out"] = cfg.selectors.front().ee_margin_out;
    return doc;
}

} // namespace osdal
