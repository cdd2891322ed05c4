#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "synex/expansion.hpp"
#include "synex/pair_model.hpp"
#include "synex/parallel.hpp"
#include "synex/ranklist.hpp"
#include "synex/rng.hpp"

// The iterative joint loop. Each iteration trains a fresh expansion ensemble
// on the current set, ranks the vocabulary, manufactures pseudo synonym
// labels from the confident head of that ranking, fine-tunes the generic
// synonym model into a class-specific one (always restarting from the generic
// model, never from the previous iteration's), fuses synonym evidence into
// the ranking, and admits the top entities by fused score.
//
// Randomness: every draw in iteration i comes from
// derive(cfg.rng_seed, (i << 8) | purpose); purposes are 1 = ensemble,
// 2 = pseudo labels, 3 = fine-tuning.

namespace synex {

struct ExpanderConfig {
    std::size_t negative_ratio = 10;   // K: per-seed negatives for each member
    std::size_t ensemble_size = 50;    // T
    std::size_t pseudo_negatives = 10; // N: negatives per pseudo positive
    std::size_t fine_tune_trees = 10;  // H
    std::size_t max_iter = 6;
    std::size_t target_expansion = 60; // Z: total admissions across the run
    std::size_t top_pool = 100;        // pseudo positives come from this ranking head
    double pos_threshold = 0.9;
    double neg_threshold = 0.5;
    // Synonym scores are computed for the top sy_pool_factor * ceil(Z/max_iter)
    // non-members plus all current members; 0 lifts the cap.
    std::size_t sy_pool_factor = 10;
    bool use_synonym_model = true; // false = ablation: rank by p_set alone
    std::uint64_t rng_seed = 0;
    std::size_t workers = 0;
    SvmParams svm;
    BoostParams fine_tune_params; // rng_seed inside is overridden per iteration

    void validate() const {
        if (negative_ratio < 1 || ensemble_size < 1 || pseudo_negatives < 1 ||
            fine_tune_trees < 1 || max_iter < 1 || target_expansion < 1 || top_pool < 1)
            throw ValidationError("expander config: all counts must be >= 1");
        for (double t : {pos_threshold, neg_threshold})
            if (!(t > 0.0 && t < 1.0))
                throw ValidationError("expander config: thresholds must lie in (0,1)");
    }

    std::size_t per_iteration_additions() const {
        return (target_expansion + max_iter - 1) / max_iter; // ceil(Z / max_iter)
    }
};

// The growing entity set E. Seeds carry admission iteration 0; admissions are
// append-only and deduplicated.
class ExpandedSet {
public:
    static ExpandedSet from_seeds(const std::vector<TermId>& seed_ids) {
        ExpandedSet e;
        for (TermId id : seed_ids) e.add(id, 0);
        e.seed_count_ = e.entities_.size();
        return e;
    }

    bool contains(TermId id) const { return members_.count(id) > 0; }

    void add(TermId id, std::size_t iteration) {
        if (!members_.insert(id).second) return;
        entities_.push_back(id);
        admitted_iteration_.push_back(iteration);
    }

    std::size_t size() const { return entities_.size(); }
    std::size_t seed_count() const { return seed_count_; }
    std::size_t additions() const { return entities_.size() - seed_count_; }
    const std::vector<TermId>& ids() const { return entities_; }
    std::size_t admitted_iteration(std::size_t index) const { return admitted_iteration_[index]; }

private:
    std::vector<TermId> entities_; // insertion order = admission order
    std::vector<std::size_t> admitted_iteration_;
    std::unordered_set<TermId> members_;
    std::size_t seed_count_ = 0;
};

// Fused score: geometric mean of class-membership probability and synonym
// score, so an entity must look good to both models to rank high.
inline double final_score(double p_set, double sy) {
    return std::sqrt(p_set * sy);
}

// Max synonym probability of `entity` against the members of E (excluding
// itself). Empty comparison set yields 0.
inline double sy_score(TermId entity, const ExpandedSet& set, const GbdtModel& model,
                       const FeatureContext& ctx) {
    double best = 0.0;
    for (TermId member : set.ids()) {
        if (member == entity) continue;
        best = std::max(best, synonym_probability(model, entity, member, ctx));
    }
    return best;
}

// Pseudo training data from the head of the expansion ranking: positives are
// pairs among the top `top_pool` entities whose generic-model probability
// reaches pos_threshold; each positive pulls ceil(N/2) uniform entities from
// the sub-neg_threshold tail and pairs them with both endpoints (truncated to
// N pairs per positive). Positives win conflicts; everything is deduplicated.
inline std::vector<LabeledPair> generate_pseudo_labels(const RankList& rank_list,
                                                       const GbdtModel& generic_model,
                                                       const ExpanderConfig& cfg,
                                                       std::uint64_t rng_seed,
                                                       const FeatureContext& ctx) {
    if (rank_list.entries.empty())
        throw ValidationError("generate_pseudo_labels: empty rank list");

    const std::size_t pool = std::min(cfg.top_pool, rank_list.entries.size());

    // Positive pass, parallel over the pair grid of the pool.
    std::vector<std::pair<TermId, TermId>> positives;
    {
        const std::size_t n_pairs = pool * (pool - 1) / 2;
        std::vector<unsigned char> hits(n_pairs, 0);
        parallel_for(n_pairs, cfg.workers, [&](std::size_t k) {
            // unrank k -> (i, j), i < j
            std::size_t i = 0, base = 0;
            while (base + (pool - 1 - i) <= k) {
                base += pool - 1 - i;
                ++i;
            }
            const std::size_t j = i + 1 + (k - base);
            const TermId a = rank_list.entries[i].id, b = rank_list.entries[j].id;
            if (synonym_probability(generic_model, a, b, ctx) >= cfg.pos_threshold) hits[k] = 1;
        });
        std::size_t k = 0;
        for (std::size_t i = 0; i < pool; ++i)
            for (std::size_t j = i + 1; j < pool; ++j, ++k)
                if (hits[k]) {
                    TermId a = rank_list.entries[i].id, b = rank_list.entries[j].id;
                    positives.emplace_back(std::min(a, b), std::max(a, b));
                }
    }
    std::sort(positives.begin(), positives.end());

    std::vector<LabeledPair> out;
    if (positives.empty()) return out;

    std::set<std::pair<TermId, TermId>> positive_set(positives.begin(), positives.end());
    for (const auto& [a, b] : positives)
        out.push_back(LabeledPair{a, b, PairLabel::positive, PairSource::pseudo});

    std::vector<TermId> candidates;
    for (const auto& e : rank_list.entries)
        if (e.p_set < cfg.neg_threshold) candidates.push_back(e.id);
    if (candidates.empty())
        throw ValidationError("generate_pseudo_labels: no entities below the negative threshold; "
                              "score a larger pool");

    auto eng = rng::make_engine(rng_seed);
    std::set<std::pair<TermId, TermId>> seen = positive_set;
    const std::size_t per_positive = (cfg.pseudo_negatives + 1) / 2; // ceil(N/2)
    for (const auto& [ex, ey] : positives) {
        // Sample ceil(N/2) distinct entities from the low-probability tail.
        std::vector<TermId> tail = candidates;
        const std::size_t draw = std::min(per_positive, tail.size());
        std::size_t emitted = 0;
        for (std::size_t k = 0; k < draw && emitted < cfg.pseudo_negatives; ++k) {
            const std::size_t j = k + rng::uniform_index(eng, tail.size() - k);
            std::swap(tail[k], tail[j]);
            const TermId c = tail[k];
            for (TermId endpoint : {ex, ey}) {
                if (emitted >= cfg.pseudo_negatives) break;
                if (c == endpoint) continue;
                auto key = std::minmax(c, endpoint);
                if (positive_set.count({key.first, key.second})) continue; // positive wins
                if (!seen.insert({key.first, key.second}).second) continue;
                out.push_back(
                    LabeledPair{key.first, key.second, PairLabel::negative, PairSource::pseudo});
                ++emitted;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Iterations
// ---------------------------------------------------------------------------

struct IterationResult {
    std::size_t iteration = 0;
    RankList adjusted;               // joint: fused scores; ablation: plain p_set
    std::vector<LabeledPair> pseudo; // pseudo-label set (empty in ablation mode)
    std::vector<TermId> added;
    GbdtModel class_model; // fine-tuned model (= generic when no pseudo labels)
    std::size_t pseudo_positive_count = 0;
    std::size_t sy_scored_count = 0;
    std::size_t unscored_terms = 0;
};

namespace detail {

inline std::uint64_t iter_stream(const ExpanderConfig& cfg, std::size_t iteration,
                                 std::uint64_t purpose) {
    return rng::derive(cfg.rng_seed, (static_cast<std::uint64_t>(iteration) << 8) | purpose);
}

} // namespace detail

// One loop iteration: train the ensemble on the current set, score the
// vocabulary, build pseudo labels, fine-tune the synonym model, fuse scores,
// and admit the top non-members. At most
// `max_additions` entities are admitted (the run caps the final iteration so
// total additions never exceed Z).
inline IterationResult run_iteration(ExpandedSet& set, const Vocabulary& vocab,
                                     const EmbeddingBag& bag, const GbdtModel& generic_model,
                                     const ExpanderConfig& cfg, std::size_t iteration,
                                     const FeatureContext& ctx,
                                     std::size_t max_additions = SIZE_MAX) {
    if (set.size() == 0) throw ValidationError("run_iteration: empty entity set");
    max_additions = std::min(max_additions, cfg.per_iteration_additions());

    IterationResult result;
    result.iteration = iteration;

    ExpansionParams exp_params;
    exp_params.negative_ratio = cfg.negative_ratio;
    exp_params.ensemble_size = cfg.ensemble_size;
    exp_params.svm = cfg.svm;
    exp_params.workers = cfg.workers;

    const auto ensemble = train_ensemble(set.ids(), vocab, bag, exp_params,
                                         detail::iter_stream(cfg, iteration, 1));
    RankList expansion_list = score_vocabulary(ensemble, vocab, bag);
    result.unscored_terms = expansion_list.unscored_terms;

    if (!cfg.use_synonym_model) {
        // Ablation: no synonym model anywhere; rank and admit purely by p_set.
        result.class_model = generic_model;
        std::size_t taken = 0;
        for (const auto& e : expansion_list.entries) {
            if (taken >= max_additions) break;
            if (set.contains(e.id)) continue;
            result.added.push_back(e.id);
            ++taken;
        }
        for (TermId id : result.added) set.add(id, iteration);
        result.adjusted = std::move(expansion_list);
        return result;
    }

    result.pseudo =
        generate_pseudo_labels(expansion_list, generic_model, cfg, detail::iter_stream(cfg, iteration, 2), ctx);
    for (const auto& p : result.pseudo)
        result.pseudo_positive_count += p.label == PairLabel::positive;

    if (result.pseudo.empty()) {
        result.class_model = generic_model;
    } else {
        auto [X, y] = pair_training_data(result.pseudo, ctx);
        BoostParams ft = cfg.fine_tune_params;
        ft.rng_seed = detail::iter_stream(cfg, iteration, 3);
        result.class_model = fine_tune(generic_model, X, y, cfg.fine_tune_trees, ft);
    }

    // Candidate slice for synonym scoring: top non-members plus all members.
    const std::size_t cap =
        cfg.sy_pool_factor == 0 ? expansion_list.entries.size()
                                : cfg.sy_pool_factor * cfg.per_iteration_additions();
    std::vector<RankEntry> candidates;
    std::size_t non_members = 0;
    for (const auto& e : expansion_list.entries) {
        if (set.contains(e.id)) {
            candidates.push_back(e);
        } else if (non_members < cap) {
            candidates.push_back(e);
            ++non_members;
        }
    }

    result.sy_scored_count = candidates.size();
    parallel_for(candidates.size(), cfg.workers, [&](std::size_t i) {
        RankEntry& e = candidates[i];
        const double sy = sy_score(e.id, set, result.class_model, ctx);
        e.sy = sy;
        e.final_score = final_score(e.p_set, sy);
    });

    RankList adjusted;
    adjusted.entries = std::move(candidates);
    adjusted.unscored_terms = expansion_list.unscored_terms;
    adjusted.sort();

    std::size_t taken = 0;
    for (const auto& e : adjusted.entries) {
        if (taken >= max_additions) break;
        if (set.contains(e.id)) continue;
        result.added.push_back(e.id);
        ++taken;
    }
    for (TermId id : result.added) set.add(id, iteration);
    result.adjusted = std::move(adjusted);
    return result;
}

struct RunResult {
    ExpandedSet set;
    GbdtModel class_model; // last iteration's fine-tuned model
    RankList final_list;   // last iteration's adjusted rank list
    std::vector<IterationResult> iterations;
    bool early_stopped = false;
};

// Full run: E starts as the union of the query synsets, grows for at most
// max_iter iterations or until an iteration admits nothing, and never exceeds
// Z admissions in total.
inline RunResult run(const SeedQuery& query, const Vocabulary& vocab, const EmbeddingBag& bag,
                     const GbdtModel& generic_model, const ExpanderConfig& cfg, const FeatureContext& ctx) {
    cfg.validate();
    const auto seed_ids = query.all_ids();
    if (seed_ids.empty()) throw ValidationError("run: query has no seed entities");

    RunResult result;
    result.set = ExpandedSet::from_seeds(seed_ids);

    for (std::size_t iter = 1; iter <= cfg.max_iter; ++iter) {
        const std::size_t remaining = cfg.target_expansion - result.set.additions();
        if (remaining == 0) break;
        const std::size_t allowed = std::min(cfg.per_iteration_additions(), remaining);
        auto iteration = run_iteration(result.set, vocab, bag, generic_model, cfg, iter, ctx, allowed);
        const bool stuck = iteration.added.empty();
        result.iterations.push_back(std::move(iteration));
        if (stuck) {
            result.early_stopped = true;
            break;
        }
    }

    result.class_model = result.iterations.back().class_model;
    result.final_list = result.iterations.back().adjusted;
    return result;
}

// ---------------------------------------------------------------------------
// Run artifacts: iter_k/rank.tsv, iter_k/pseudo_pairs.tsv, iter_k/added.tsv,
// final_set.tsv and summary.json under the output directory.
// ---------------------------------------------------------------------------

inline void write_run_artifacts(const std::filesystem::path& dir, const RunResult& run_result,
                                const SeedQuery& query, const Vocabulary& vocab) {
    std::filesystem::create_directories(dir);
    nlohmann::json iters = nlohmann::json::array();
    for (const auto& it : run_result.iterations) {
        const auto iter_dir = dir / ("iter_" + std::to_string(it.iteration));
        std::filesystem::create_directories(iter_dir);
        write_rank_list(iter_dir / "rank.tsv", it.adjusted, vocab);
        write_labeled_pairs(iter_dir / "pseudo_pairs.tsv", it.pseudo, vocab);
        std::ofstream added(iter_dir / "added.tsv");
        for (TermId id : it.added) added << vocab.surface(id) << '\n';
        iters.push_back({{"iteration", it.iteration},
                         {"added", it.added.size()},
                         {"pseudo_pairs", it.pseudo.size()},
                         {"pseudo_positives", it.pseudo_positive_count},
                         {"sy_scored", it.sy_scored_count},
                         {"class_model_trees", it.class_model.trees.size()},
                         {"unscored_terms", it.unscored_terms}});
    }

    std::ofstream final_set(dir / "final_set.tsv");
    const auto& set = run_result.set;
    for (std::size_t i = 0; i < set.size(); ++i)
        final_set << vocab.surface(set.ids()[i]) << '\t' << set.admitted_iteration(i) << '\n';

    nlohmann::json seeds = nlohmann::json::array();
    for (TermId id : query.all_ids()) seeds.push_back(vocab.surface(id));
    nlohmann::json summary = {{"class_name", query.class_name},
                              {"seeds", std::move(seeds)},
                              {"final_size", set.size()},
                              {"additions", set.additions()},
                              {"early_stopped", run_result.early_stopped},
                              {"iterations", std::move(iters)}};
    std::ofstream out(dir / "summary.json");
    out << summary.dump(2) << '\n';
}

} // namespace synex
