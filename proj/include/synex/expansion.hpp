#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_set>
#include <vector>

#include "synex/parallel.hpp"
#include "synex/ranklist.hpp"
#include "synex/rng.hpp"
#include "synex/store.hpp"
#include "synex/svm.hpp"
#include "synex/types.hpp"
#include "synex/vec.hpp"

// Set expansion model: bag-of-embedding entity features, random negative
// sampling against the seed set, and a T-member SVM ensemble whose averaged
// probabilities rank the vocabulary.
//
// The T member trainings depend only on their deterministically derived seeds
// (streams derive(seed, 1000 + t) for sampling), so they can run on any number
// of workers in any order and produce the identical model set. Vocabulary
// scoring partitions terms across workers; each term's member sum runs in
// fixed member order, so scores do not depend on the partition.

namespace synex {

struct ExpansionParams {
    std::size_t negative_ratio = 10; // K: negatives per seed entity, per member
    std::size_t ensemble_size = 50;  // T
    SvmParams svm;
    // Restricted ("low similarity") negative sampling. Off by default; kept
    // behind a flag because it does not improve results.
    bool restricted_sampling = false;
    double restricted_max_cosine = 0.3;
    std::size_t restricted_space = 0;
    std::size_t workers = 0; // 0 = hardware concurrency
};

struct EnsembleModel {
    std::vector<SvmMember> members;
    std::vector<TermId> seed_set;
    ExpansionParams params;
};

// Entity feature of e against the seed set: for each space b (bag order) and
// each seed j (seed order), the triple [sign(d)*sqrt(|d|), d, d^2] with
// d = cosine(f_b(e), f_b(seed_j)). Layout is space-major, then seed-major,
// then transform-major; length 3 * B * |E0|.
inline std::vector<double> build_entity_feature(TermId entity, const std::vector<TermId>& seeds,
                                                const EmbeddingBag& bag) {
    std::vector<double> out;
    out.reserve(3 * bag.size() * seeds.size());
    for (const EmbeddingSpace& space : bag.spaces) {
        if (!space.has(entity))
            throw ValidationError("entity feature: term id " + std::to_string(entity) +
                                  " has no vector in space \"" + space.name + "\"");
        const auto ev = space.vec(entity);
        for (TermId seed : seeds) {
            if (!space.has(seed))
                throw ValidationError("entity feature: seed id " + std::to_string(seed) +
                                      " has no vector in space \"" + space.name + "\"");
            const double d = cosine(ev, space.vec(seed));
            out.push_back(std::copysign(std::sqrt(std::abs(d)), d));
            out.push_back(d);
            out.push_back(d * d);
        }
    }
    return out;
}

// Exactly |E0| * K ids drawn uniformly without replacement from vocab \ E0.
// With restricted sampling on, candidates are first limited to terms whose
// max cosine against the seed set stays below the configured ceiling; any
// shortfall is topped up from the unrestricted complement.
inline std::vector<TermId> sample_negatives(const std::vector<TermId>& seeds,
                                            const Vocabulary& vocab, std::size_t K,
                                            std::uint64_t rng_seed,
                                            const ExpansionParams* params = nullptr,
                                            const EmbeddingBag* bag = nullptr) {
    const std::size_t need = seeds.size() * K;
    if (vocab.size() <= seeds.size() * (K + 1))
        throw ValidationError("vocabulary too small: need more than " +
                              std::to_string(seeds.size() * (K + 1)) + " terms, have " +
                              std::to_string(vocab.size()));

    std::unordered_set<TermId> seed_set(seeds.begin(), seeds.end());
    std::vector<TermId> complement;
    complement.reserve(vocab.size() - seed_set.size());
    for (const Term& t : vocab.terms()) {
        if (seed_set.count(t.id)) continue;
        if (bag && !bag->covers(t.id)) continue; // uncovered terms feed no model
        complement.push_back(t.id);
    }
    if (complement.size() < need)
        throw ValidationError("vocabulary too small after coverage filtering: need " +
                              std::to_string(need) + " candidates, have " +
                              std::to_string(complement.size()));

    auto eng = rng::make_engine(rng_seed);
    std::vector<TermId> picked;
    picked.reserve(need);

    if (params && params->restricted_sampling && bag) {
        const EmbeddingSpace& space = bag->spaces.at(params->restricted_space);
        std::vector<TermId> low, rest;
        for (TermId id : complement) {
            double max_cos = -1.0;
            if (space.has(id))
                for (TermId s : seeds)
                    if (space.has(s)) max_cos = std::max(max_cos, cosine(space.vec(id), space.vec(s)));
            (space.has(id) && max_cos < params->restricted_max_cosine ? low : rest).push_back(id);
        }
        const std::size_t from_low = std::min(need, low.size());
        for (std::size_t k = 0; k < from_low; ++k) {
            const std::size_t j = k + rng::uniform_index(eng, low.size() - k);
            std::swap(low[k], low[j]);
            picked.push_back(low[k]);
        }
        for (std::size_t k = 0; picked.size() < need; ++k) {
            const std::size_t j = k + rng::uniform_index(eng, rest.size() - k);
            std::swap(rest[k], rest[j]);
            picked.push_back(rest[k]);
        }
        return picked;
    }

    for (std::size_t k = 0; k < need; ++k) {
        const std::size_t j = k + rng::uniform_index(eng, complement.size() - k);
        std::swap(complement[k], complement[j]);
        picked.push_back(complement[k]);
    }
    return picked;
}

// One ensemble member: seeds labeled 1, sampled negatives labeled 0, SVM on
// entity features, Platt scaling for probabilities.
inline SvmMember train_member(const std::vector<TermId>& seeds,
                              const std::vector<TermId>& negatives, const EmbeddingBag& bag,
                              const SvmParams& svm_params, std::uint64_t rng_seed = 0) {
    std::vector<std::vector<double>> X;
    std::vector<int> y;
    X.reserve(seeds.size() + negatives.size());
    for (TermId id : seeds) {
        X.push_back(build_entity_feature(id, seeds, bag));
        y.push_back(1);
    }
    for (TermId id : negatives) {
        X.push_back(build_entity_feature(id, seeds, bag));
        y.push_back(0);
    }
    return train_svm(X, y, svm_params, rng_seed);
}

inline EnsembleModel train_ensemble(const std::vector<TermId>& seeds, const Vocabulary& vocab,
                                    const EmbeddingBag& bag, const ExpansionParams& params,
                                    std::uint64_t rng_seed) {
    if (seeds.empty()) throw ValidationError("train_ensemble: empty seed set");
    if (params.ensemble_size < 1) throw ValidationError("train_ensemble: T must be >= 1");
    for (TermId s : seeds)
        if (!bag.covers(s))
            throw ValidationError("seed \"" + vocab.surface(s) + "\" lacks vectors in some space");

    EnsembleModel model;
    model.seed_set = seeds;
    model.params = params;
    model.members.resize(params.ensemble_size);
    parallel_for(params.ensemble_size, params.workers, [&](std::size_t t) {
        const auto negatives =
            sample_negatives(seeds, vocab, params.negative_ratio, rng::derive(rng_seed, 1000 + t),
                             &params, &bag);
        model.members[t] =
            train_member(seeds, negatives, bag, params.svm, rng::derive(rng_seed, 2000 + t));
    });
    return model;
}

// P(e in C) = mean of member probabilities, for every term with vectors in
// all spaces (seed terms included). Terms lacking coverage are omitted and
// counted. Result is sorted by probability descending, ties by id.
inline RankList score_vocabulary(const EnsembleModel& model, const Vocabulary& vocab,
                                 const EmbeddingBag& bag) {
    std::vector<TermId> scorable;
    RankList list;
    for (const Term& t : vocab.terms()) {
        if (bag.covers(t.id))
            scorable.push_back(t.id);
        else
            ++list.unscored_terms;
    }
    list.entries.resize(scorable.size());
    parallel_for(scorable.size(), model.params.workers, [&](std::size_t i) {
        const auto features = build_entity_feature(scorable[i], model.seed_set, bag);
        double sum = 0.0;
        for (const SvmMember& m : model.members) sum += m.probability(features);
        list.entries[i] =
            RankEntry{scorable[i], sum / static_cast<double>(model.members.size()), {}, {}};
    });
    list.sort();
    return list;
}

} // namespace synex
