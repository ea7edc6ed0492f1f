#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <thread>
#include <vector>

#include "osdal/baselines.hpp"
#include "osdal/datagen.hpp"
#include "osdal/joda.hpp"
#include "osdal/metrics.hpp"
#include "osdal/train.hpp"

namespace osdal {

struct RunSettings {
    int query_size = 100;
    int cycles = 6;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    int initial_labeled_per_class = 10;
    bool initial_ood_in_labeled = false;
    double initial_ood_fraction = 0.10; // of the initial labeled pool size
    int promotion_threshold = 0;        // 0 -> default rule from q and C+K
    bool write_diagnostics = true;
};

inline void validate(const RunSettings& r) {
    if (r.query_size < 1) throw ValidationError("run.query_size: must be >= 1");
    if (r.cycles < 1) throw ValidationError("run.cycles: must be >= 1");
    if (r.seeds.empty()) throw ValidationError("run.seeds: must be nonempty");
    if (r.initial_labeled_per_class < 1)
        throw ValidationError("run.initial_labeled_per_class: must be >= 1");
    if (r.initial_ood_fraction < 0.0 || r.initial_ood_fraction > 1.0)
        throw ValidationError("run.initial_ood_fraction: must be in [0, 1]");
    if (r.promotion_threshold < 0)
        throw ValidationError("run.promotion_threshold: must be >= 0 (0 = auto)");
}

struct RunConfig {
    ScenarioSpec scenario;
    TrainConfig train;
    RunSettings run;
    SelectorSpec selector;
};

struct CycleRecord {
    int cycle = 0;
    double accuracy = 0.0;
    int discovered = 0;
    double precision = 0.0;
    int size_labeled_ind = 0;
    int size_labeled_disc = 0;
    int size_labeled_ood = 0;
    int size_unlabeled = 0;
    EnergyThreshold threshold;
    bool filter_degenerate = false; // threshold rejected all of U; passed through
    int shortfall = 0;              // q minus what the candidate pool could supply
    double wall_seconds = 0.0;
};

struct SelectionRow {
    int cycle = 0;
    int sample_id = 0;
    Subset subset = Subset::InD;
    int class_label = -1;
};

// Per-candidate diagnostics of a Joda cycle; quotient/m_hat/balance are only
// meaningful for candidates that survived the filter.
struct DiagRow {
    int cycle = 0;
    int sample_id = 0;
    double energy = 0.0;
    bool scored = false;
    double quotient = 0.0;
    double m_hat = 0.0;
    double balance = 0.0;
    double m_hat_balanced = 0.0;
    int predicted_class = -1;
    bool filtered = false;
    bool selected = false;
};

struct DiagSummary {
    int cycle = 0;
    EnergyThreshold threshold;
    double m_avg = 0.0;
    double sigma = 0.0;
};

struct SeedRun {
    std::uint64_t seed = 0;
    std::vector<CycleRecord> records;
    std::vector<RoutingLogEntry> routing_log;
    std::vector<SelectionRow> selections;
    std::vector<DiagRow> diagnostics;
    std::vector<DiagSummary> diag_summaries;
    bool truncated = false; // U ran dry before the configured cycle count
};

struct AggregateRow {
    int cycle = 0;
    double accuracy_mean = 0.0, accuracy_se = 0.0;
    double discovered_mean = 0.0, discovered_se = 0.0;
    double precision_mean = 0.0, precision_se = 0.0;
};

struct ExperimentResult {
    std::vector<SeedRun> runs;
    std::vector<AggregateRow> aggregate;
};

// Exact, noise-free oracle: reveals the hidden ground truth of each queried
// sample.
inline std::vector<Annotation> oracle_annotate(const Dataset& data,
                                               std::span<const int> selected) {
    std::vector<Annotation> out;
    out.reserve(selected.size());
    for (int id : selected) {
        const Sample& s = data.by_id(id);
        out.push_back({id, s.truth.subset, s.truth.class_label});
    }
    return out;
}

namespace detail {

// Named RNG streams hanging off the per-run seed.
inline constexpr std::uint64_t kStreamInitialPool = 1;
inline constexpr std::uint64_t kStreamTrainBase = 100;
inline constexpr std::uint64_t kStreamSelectBase = 10000;

inline OeMode training_mode(SelectorKind kind) {
    switch (kind) {
        case SelectorKind::joda:
        case SelectorKind::joda_no_filter:
        case SelectorKind::joda_unbalanced:
            return OeMode::outlier_exposure;
        case SelectorKind::joda_ee:
            return OeMode::energy_exposure;
        default:
            return OeMode::none; // classic AL baselines train plain CE
    }
}

inline bool uses_filter(SelectorKind kind) {
    return is_joda_variant(kind) && kind != SelectorKind::joda_no_filter;
}

struct PreparedScenario {
    Dataset data;
    std::vector<int> test_ids;
    int num_known = 0;       // C
    int total_classes = 0;   // C + K
};

} // namespace detail

// Materializes the per-run-seed dataset: a fresh synthetic draw per seed, or
// the external file with a split fixed by the scenario seed. Shared across
// selectors so method comparisons see identical pools.
inline detail::PreparedScenario prepare_scenario(const ScenarioSpec& spec,
                                                 std::uint64_t run_seed) {
    detail::PreparedScenario p;
    if (spec.dataset_path.empty()) {
        ScenarioSpec per_seed = spec;
        per_seed.seed = Rng::derive(spec.seed, run_seed);
        Scenario sc = generate(per_seed);
        p.data = std::move(sc.data);
        p.test_ids = std::move(sc.test_ids);
        p.num_known = spec.known_classes;
        p.total_classes = spec.known_classes + spec.discoverable_classes;
    } else {
        p.data = load_features(spec.dataset_path);
        p.test_ids = stratified_test_split(p.data, spec.test_fraction, spec.seed);
        int max_ind = -1, max_any = -1;
        for (const Sample& s : p.data.samples) {
            if (s.truth.subset == Subset::InD) max_ind = std::max(max_ind, s.truth.class_label);
            if (s.truth.subset != Subset::OOD) max_any = std::max(max_any, s.truth.class_label);
        }
        if (max_ind < 1)
            throw ValidationError("scenario.dataset_path: file must contain at least two known classes");
        p.num_known = max_ind + 1;
        p.total_classes = max_any + 1;
    }
    return p;
}

// One full seeded OSDAL run: train, filter (from cycle 2, when L_O is
// nonempty), select, annotate, route, promote, measure — repeated for the
// configured number of cycles or until the unlabeled pool runs dry.
inline SeedRun run_seed(const RunConfig& cfg, std::uint64_t run_seed) {
    const detail::PreparedScenario sc = prepare_scenario(cfg.scenario, run_seed);
    const SelectorKind kind = cfg.selector.kind;

    SeedRun out;
    out.seed = run_seed;

    // --- initial pools -----------------------------------------------------
    PoolState pool;
    pool.registry.promotion_threshold =
        cfg.run.promotion_threshold > 0
            ? cfg.run.promotion_threshold
            : default_promotion_threshold(cfg.run.query_size, sc.total_classes);
    for (int c = 0; c < sc.num_known; ++c) pool.registry.known_classes.push_back(c);

    std::map<int, std::vector<int>> pool_by_class;
    std::vector<int> pool_ood_ids;
    std::vector<int> pool_ids;
    for (const Sample& s : sc.data.samples) {
        if (std::binary_search(sc.test_ids.begin(), sc.test_ids.end(), s.id)) continue;
        pool_ids.push_back(s.id);
        if (s.truth.subset == Subset::OOD)
            pool_ood_ids.push_back(s.id);
        else
            pool_by_class[s.truth.class_label].push_back(s.id);
    }

    Rng init_rng(Rng::derive(run_seed, detail::kStreamInitialPool));
    std::vector<int> initially_labeled;
    for (int c = 0; c < sc.num_known; ++c) {
        auto it = pool_by_class.find(c);
        const std::size_t have = it == pool_by_class.end() ? 0 : it->second.size();
        if (have < static_cast<std::size_t>(cfg.run.initial_labeled_per_class))
            throw ProtocolError("initial pool: class " + std::to_string(c) + " has only " +
                                std::to_string(have) + " pool samples, need " +
                                std::to_string(cfg.run.initial_labeled_per_class));
        std::vector<int>& ids = it->second;
        init_rng.shuffle(ids);
        for (int i = 0; i < cfg.run.initial_labeled_per_class; ++i) {
            pool.labeled_ind.push_back({ids[i], c});
            initially_labeled.push_back(ids[i]);
            out.routing_log.push_back({0, ids[i], Subset::InD, c, 'I'});
        }
    }
    if (cfg.run.initial_ood_in_labeled) {
        const long want = std::lround(cfg.run.initial_ood_fraction *
                                      static_cast<double>(pool.labeled_ind.size()));
        init_rng.shuffle(pool_ood_ids);
        const long take = std::min<long>(want, static_cast<long>(pool_ood_ids.size()));
        for (long i = 0; i < take; ++i) {
            pool.labeled_ood.push_back(pool_ood_ids[i]);
            initially_labeled.push_back(pool_ood_ids[i]);
            out.routing_log.push_back({0, pool_ood_ids[i], Subset::OOD, -1, 'O'});
        }
    }
    std::sort(initially_labeled.begin(), initially_labeled.end());
    for (int id : pool_ids)
        if (!std::binary_search(initially_labeled.begin(), initially_labeled.end(), id))
            pool.unlabeled.push_back(id);

    // --- cycles -------------------------------------------------------------
    for (int cycle = 1; cycle <= cfg.run.cycles; ++cycle) {
        const auto tick = std::chrono::steady_clock::now();
        if (pool.unlabeled.empty()) {
            out.truncated = true;
            break;
        }

        TrainConfig tc = cfg.train;
        tc.seed = Rng::derive(run_seed, detail::kStreamTrainBase + static_cast<std::uint64_t>(cycle));
        tc.oe_mode = detail::training_mode(kind);
        tc.ee_margin_in = cfg.selector.ee_margin_in;
        tc.ee_margin_out = cfg.selector.ee_margin_out;
        const ClassifierModel model = train_cycle(sc.data, pool, tc);

        CycleRecord rec;
        rec.cycle = cycle;
        rec.accuracy = accuracy_over_targets(model, sc.data, sc.test_ids, pool.registry);

        // Separation phase: skipped in cycle 1 and whenever L_O is empty.
        EnergyThreshold threshold; // default: skipped
        if (detail::uses_filter(kind) && cycle > 1 && !pool.labeled_ood.empty()) {
            std::vector<double> ind_energies;
            for (const LabeledEntry& e : pool.labeled_ind)
                ind_energies.push_back(
                    energy_score(forward_logits(model, sc.data.by_id(e.sample_id).features)));
            for (const LabeledEntry& e : pool.labeled_disc)
                ind_energies.push_back(
                    energy_score(forward_logits(model, sc.data.by_id(e.sample_id).features)));
            std::vector<double> ood_energies;
            for (int id : pool.labeled_ood)
                ood_energies.push_back(
                    energy_score(forward_logits(model, sc.data.by_id(id).features)));
            threshold = youden_threshold(ind_energies, ood_energies);
        }
        rec.threshold = threshold;

        std::vector<double> u_energies(pool.unlabeled.size());
        for (std::size_t i = 0; i < pool.unlabeled.size(); ++i)
            u_energies[i] =
                energy_score(forward_logits(model, sc.data.by_id(pool.unlabeled[i]).features));
        FilterResult filtered = filter_unlabeled(pool.unlabeled, u_energies, threshold);
        rec.filter_degenerate = filtered.degenerate_all_pass;

        // Selection phase.
        std::vector<int> selected;
        std::optional<SisomeContext> ctx;
        std::vector<double> scores;
        if (is_joda_variant(kind)) {
            ctx.emplace(SisomeContext::build(model, sc.data, pool));
            scores.resize(filtered.kept.size());
            std::vector<SisomeScores> per(filtered.kept.size());
            for (std::size_t i = 0; i < filtered.kept.size(); ++i) {
                per[i] = ctx->score(sc.data.by_id(filtered.kept[i]).features);
                scores[i] = kind == SelectorKind::joda_unbalanced ? per[i].m_hat
                                                                  : ctx->balanced_score(per[i]);
            }
            selected = select_top_q(filtered.kept, scores, cfg.run.query_size);
            if (cfg.run.write_diagnostics) {
                std::set<int> sel_set(selected.begin(), selected.end());
                for (std::size_t i = 0; i < filtered.kept.size(); ++i) {
                    DiagRow row;
                    row.cycle = cycle;
                    row.sample_id = filtered.kept[i];
                    row.energy = per[i].energy;
                    row.scored = true;
                    row.quotient = per[i].quotient;
                    row.m_hat = per[i].m_hat;
                    row.balance = ctx->balance_offset(per[i].predicted_class);
                    row.m_hat_balanced =
                        kind == SelectorKind::joda_unbalanced ? per[i].m_hat : scores[i];
                    row.predicted_class = per[i].predicted_class;
                    row.selected = sel_set.count(filtered.kept[i]) != 0;
                    out.diagnostics.push_back(row);
                }
                std::set<int> kept_set(filtered.kept.begin(), filtered.kept.end());
                for (std::size_t i = 0; i < pool.unlabeled.size(); ++i) {
                    if (kept_set.count(pool.unlabeled[i])) continue;
                    DiagRow row;
                    row.cycle = cycle;
                    row.sample_id = pool.unlabeled[i];
                    row.energy = u_energies[i];
                    row.filtered = true;
                    out.diagnostics.push_back(row);
                }
                out.diag_summaries.push_back(
                    {cycle, threshold, ctx->m_avg(), ctx->sigma()});
            }
        } else {
            Rng sel_rng(Rng::derive(run_seed,
                                    detail::kStreamSelectBase + static_cast<std::uint64_t>(cycle)));
            switch (kind) {
                case SelectorKind::random:
                    selected = select_random(filtered.kept, cfg.run.query_size, sel_rng);
                    break;
                case SelectorKind::entropy:
                    selected = select_entropy(model, sc.data, filtered.kept, cfg.run.query_size,
                                              cfg.selector.mc_passes, cfg.selector.mc_dropout,
                                              sel_rng);
                    break;
                case SelectorKind::energy_only:
                    selected = select_energy_only(model, sc.data, filtered.kept,
                                                  cfg.run.query_size);
                    break;
                case SelectorKind::kcenter: {
                    std::vector<int> labeled_ids;
                    for (const LabeledEntry& e : pool.labeled_ind) labeled_ids.push_back(e.sample_id);
                    for (const LabeledEntry& e : pool.labeled_disc) labeled_ids.push_back(e.sample_id);
                    for (int id : pool.labeled_ood) labeled_ids.push_back(id);
                    selected = select_kcenter(model, sc.data, filtered.kept, labeled_ids,
                                              cfg.run.query_size);
                    break;
                }
                default:
                    throw std::logic_error("unhandled selector kind");
            }
        }
        rec.shortfall = cfg.run.query_size - static_cast<int>(selected.size());

        // Annotation, routing, promotion.
        const std::vector<Annotation> annotations = oracle_annotate(sc.data, selected);
        rec.precision = selection_precision(sc.data, selected);
        for (const Annotation& a : annotations)
            out.selections.push_back({cycle, a.sample_id, a.subset, a.class_label});
        pool = route_annotations(std::move(pool), annotations, cycle, &out.routing_log);
        pool = promote_classes(std::move(pool));

        rec.discovered = discovered_count(pool);
        rec.size_labeled_ind = static_cast<int>(pool.labeled_ind.size());
        rec.size_labeled_disc = static_cast<int>(pool.labeled_disc.size());
        rec.size_labeled_ood = static_cast<int>(pool.labeled_ood.size());
        rec.size_unlabeled = static_cast<int>(pool.unlabeled.size());
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - tick).count();
        out.records.push_back(rec);
    }
    return out;
}

// Sample standard error of the mean; zero for a single run.
inline std::vector<AggregateRow> aggregate_runs(const std::vector<SeedRun>& runs) {
    std::size_t common = SIZE_MAX;
    for (const SeedRun& r : runs) common = std::min(common, r.records.size());
    if (runs.empty() || common == SIZE_MAX) return {};
    std::vector<AggregateRow> rows;
    const double n = static_cast<double>(runs.size());
    for (std::size_t c = 0; c < common; ++c) {
        AggregateRow row;
        row.cycle = runs[0].records[c].cycle;
        auto mean_se = [&](auto getter, double& mean_out, double& se_out) {
            double s = 0.0;
            for (const SeedRun& r : runs) s += getter(r.records[c]);
            mean_out = s / n;
            if (runs.size() < 2) {
                se_out = 0.0;
                return;
            }
            double ss = 0.0;
            for (const SeedRun& r : runs) {
                const double d = getter(r.records[c]) - mean_out;
                ss += d * d;
            }
            se_out = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
        };
        mean_se([](const CycleRecord& r) { return r.accuracy; }, row.accuracy_mean,
                row.accuracy_se);
        mean_se([](const CycleRecord& r) { return static_cast<double>(r.discovered); },
                row.discovered_mean, row.discovered_se);
        mean_se([](const CycleRecord& r) { return r.precision; }, row.precision_mean,
                row.precision_se);
        rows.push_back(row);
    }
    return rows;
}

// Independent seeded runs, optionally in parallel; run order in the result is
// the seed order regardless of scheduling.
inline ExperimentResult run_experiment(const RunConfig& cfg, int parallelism = 1) {
    validate(cfg.run);
    ExperimentResult result;
    result.runs.resize(cfg.run.seeds.size());
    if (parallelism <= 1 || cfg.run.seeds.size() == 1) {
        for (std::size_t i = 0; i < cfg.run.seeds.size(); ++i)
            result.runs[i] = run_seed(cfg, cfg.run.seeds[i]);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr error;
        std::mutex error_mu;
        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= cfg.run.seeds.size()) return;
                try {
                    result.runs[i] = run_seed(cfg, cfg.run.seeds[i]);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> threads;
        const int nt = std::min<int>(parallelism, static_cast<int>(cfg.run.seeds.size()));
        for (int t = 0; t < nt; ++t) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
        if (error) std::rethrow_exception(error);
    }
    result.aggregate = aggregate_runs(result.runs);
    return result;
}

} // namespace osdal
