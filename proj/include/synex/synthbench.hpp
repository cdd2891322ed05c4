#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "synex/rng.hpp"
#include "synex/store.hpp"
#include "synex/vec.hpp"

// Deterministic synthetic benchmark: planted semantic classes, synonym surface
// variants that exercise every lexical feature (prefixes, initialisms, token
// drops, shared tokens), and B embedding spaces built as class centroid +
// per-entity noise + per-synonym noise.
//
// The primary space (index 0) carries the synonym signal: alias vectors hug
// their entity tightly and the construction margin (min inter-entity distance
// strictly above max intra-synonym distance, nearest neighbor of every alias
// is a vector of the same entity) is validated there at generation time, with
// bounded reseed-and-retry on violation. Secondary spaces give alias vectors
// much looser noise, the planted analogue of the poor embeddings infrequent
// surface forms get in real corpora; that is what leaves room for the synonym
// model to rescue them. Confusable background terms sit between classes to
// act as rank intruders.

namespace synex {

struct SynthParams {
    std::size_t classes = 5;
    std::size_t entities_per_class = 40;
    double synonym_rate = 0.3; // fraction of entities given >= 1 alias
    std::size_t background = 300;
    std::size_t confusables_per_class = 8;
    std::size_t spaces = 3; // B
    std::size_t dim = 16;
    double entity_noise = 0.08;
    double alias_noise_primary = 0.02;
    double alias_noise_secondary = 0.5;
    double confusable_mix = 0.6; // weight of the class centroid in a confusable
    std::size_t queries_per_class = 4;
    std::uint64_t seed = 0;
    std::size_t max_attempts = 16; // regeneration attempts on margin violation
};

struct PlantedWorld {
    Vocabulary vocab;
    EmbeddingBag bag;
    std::vector<SeedQuery> queries;
    // class name -> member surfaces / synsets (canonicals and aliases).
    std::map<std::string, std::vector<std::string>> gold_classes;
    std::map<std::string, std::vector<std::vector<std::string>>> gold_synsets;
    // Margin diagnostics from the primary space.
    double min_inter_entity_distance = 0.0;
    double max_intra_synonym_distance = 0.0;
};

namespace synthdetail {

inline std::string make_token(rng::Engine& eng, std::size_t syllables) {
    static const char* consonants = "bdfgklmnprstvz";
    static const char* vowels = "aeiou";
    std::string t;
    for (std::size_t s = 0; s < syllables; ++s) {
        t += consonants[rng::uniform_index(eng, 14)];
        t += vowels[rng::uniform_index(eng, 5)];
    }
    t[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
    return t;
}

inline std::vector<double> random_unit(rng::Engine& eng, std::size_t dim) {
    std::vector<double> v(dim);
    double n = 0.0;
    do {
        for (double& x : v) x = rng::normal(eng);
        n = norm(v);
    } while (n < 1e-9);
    for (double& x : v) x /= n;
    return v;
}

inline std::vector<double> noisy_unit(const std::vector<double>& base, double sigma,
                                      rng::Engine& eng) {
    std::vector<double> v(base.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = base[i] + sigma * rng::normal(eng);
    const double n = norm(v);
    for (double& x : v) x /= n;
    return v;
}

struct Entry {
    std::string surface;
    std::int64_t frequency = 10;
    std::string kb_id;            // empty = none
    int entity = -1;              // dense entity index; -1 for background
    int klass = -1;               // class index; -1 for background/confusable
    bool alias = false;
    std::vector<std::vector<double>> vectors; // one per space
};

inline PlantedWorld assemble(std::vector<Entry>&& entries, const SynthParams& params,
                             std::uint64_t query_seed) {
    PlantedWorld world;
    std::vector<Term> terms;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        Term t;
        t.id = static_cast<TermId>(i);
        t.surface = entries[i].surface;
        t.frequency = entries[i].frequency;
        if (!entries[i].kb_id.empty()) t.kb_id = entries[i].kb_id;
        terms.push_back(std::move(t));
    }
    world.vocab = Vocabulary(std::move(terms));

    for (std::size_t b = 0; b < params.spaces; ++b) {
        EmbeddingSpace space;
        space.name = "space_" + std::to_string(b);
        space.dim = params.dim;
        space.vectors.resize(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) space.vectors[i] = entries[i].vectors[b];
        world.bag.spaces.push_back(std::move(space));
    }

    // Gold classes and synsets.
    std::map<int, std::map<int, std::vector<std::string>>> by_entity; // class -> entity -> surfaces
    for (const auto& e : entries)
        if (e.klass >= 0 && e.entity >= 0) by_entity[e.klass][e.entity].push_back(e.surface);
    for (const auto& [klass, ents] : by_entity) {
        const std::string name = "class_" + std::to_string(klass);
        for (const auto& [entity, surfaces] : ents) {
            world.gold_synsets[name].push_back(surfaces);
            for (const auto& s : surfaces) world.gold_classes[name].push_back(s);
        }
    }

    // Queries: per class, sample 2-3 gold synsets each.
    auto eng = rng::make_engine(query_seed);
    for (const auto& [name, synsets] : world.gold_synsets) {
        for (std::size_t q = 0; q < params.queries_per_class; ++q) {
            const std::size_t want = 2 + rng::uniform_index(eng, 2);
            std::vector<std::size_t> order(synsets.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            for (std::size_t k = 0; k < want; ++k) {
                const std::size_t j = k + rng::uniform_index(eng, order.size() - k);
                std::swap(order[k], order[j]);
            }
            SeedQuery query;
            query.class_name = name;
            for (std::size_t k = 0; k < want; ++k) {
                std::vector<TermId> ids;
                for (const auto& s : synsets[order[k]]) ids.push_back(*world.vocab.find(s));
                query.synsets.push_back(std::move(ids));
            }
            world.queries.push_back(std::move(query));
        }
    }
    return world;
}

// Margin validation in the primary space. Returns false on violation.
inline bool validate_margin(PlantedWorld& world, const std::vector<Entry>& entries) {
    const auto& space = world.bag.spaces[0];
    auto entity_key = [&](std::size_t i) {
        return entries[i].entity >= 0 ? entries[i].entity : -static_cast<int>(i) - 1;
    };

    double max_intra = 0.0;
    double min_inter = 2.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        for (std::size_t j = i + 1; j < entries.size(); ++j) {
            const double dist = 1.0 - cosine(space.vec(static_cast<TermId>(i)),
                                             space.vec(static_cast<TermId>(j)));
            if (entity_key(i) == entity_key(j))
                max_intra = std::max(max_intra, dist);
            else
                min_inter = std::min(min_inter, dist);
        }
    }
    world.min_inter_entity_distance = min_inter;
    world.max_intra_synonym_distance = max_intra;
    if (!(min_inter > max_intra)) return false;

    // Exhaustive nearest-neighbor check for every alias vector.
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!entries[i].alias) continue;
        double best = -2.0;
        std::size_t best_j = i;
        for (std::size_t j = 0; j < entries.size(); ++j) {
            if (j == i) continue;
            const double c =
                cosine(space.vec(static_cast<TermId>(i)), space.vec(static_cast<TermId>(j)));
            if (c > best) {
                best = c;
                best_j = j;
            }
        }
        if (entries[best_j].entity != entries[i].entity) return false;
    }
    return true;
}

} // namespace synthdetail

inline PlantedWorld generate_world(const SynthParams& params) {
    using namespace synthdetail;
    if (params.classes < 1 || params.entities_per_class < 2 || params.dim < 4 ||
        params.spaces < 1)
        throw ValidationError("synthbench: degenerate world parameters");
    if (!(params.alias_noise_primary < params.entity_noise))
        throw ValidationError("synthbench: synonym noise must be tighter than entity noise");

    for (std::size_t attempt = 0; attempt < params.max_attempts; ++attempt) {
        const std::uint64_t seed = rng::derive(params.seed, attempt);
        auto name_eng = rng::make_engine(rng::derive(seed, 1));
        auto vec_eng = rng::make_engine(rng::derive(seed, 2));
        auto freq_eng = rng::make_engine(rng::derive(seed, 3));

        std::vector<Entry> entries;
        std::set<std::string> used_surfaces;
        std::set<std::string> used_tokens;
        auto claim = [&used_surfaces](std::string s) {
            if (used_surfaces.insert(s).second) return s;
            return std::string();
        };
        auto claim_token = [&used_tokens](std::string s) {
            if (used_tokens.insert(s).second) return s;
            return std::string();
        };

        int entity_counter = 0;
        const std::size_t n_alias_entities = static_cast<std::size_t>(
            params.synonym_rate * static_cast<double>(params.entities_per_class));

        for (std::size_t c = 0; c < params.classes; ++c) {
            // Per-class token pools create shared tokens within the class.
            std::vector<std::string> heads, tails;
            while (heads.size() < 10) {
                auto t = claim_token(make_token(name_eng, 2 + heads.size() % 2));
                if (!t.empty()) heads.push_back(t);
            }
            while (tails.size() < 10) {
                auto t = claim_token(make_token(name_eng, 2 + tails.size() % 2));
                if (!t.empty()) tails.push_back(t);
            }

            std::vector<std::vector<double>> centroids;
            for (std::size_t b = 0; b < params.spaces; ++b)
                centroids.push_back(random_unit(vec_eng, params.dim));

            for (std::size_t e = 0; e < params.entities_per_class; ++e) {
                const int entity = entity_counter++;
                const std::string kb = "Q" + std::to_string(c) + "_" + std::to_string(e);

                std::string canonical;
                while (canonical.empty()) {
                    std::string s = heads[rng::uniform_index(name_eng, heads.size())] + " " +
                                    tails[rng::uniform_index(name_eng, tails.size())];
                    if (rng::uniform_real(name_eng) < 0.3)
                        s += " " + make_token(name_eng, 2);
                    canonical = claim(s);
                }

                std::vector<std::vector<double>> entity_vecs;
                for (std::size_t b = 0; b < params.spaces; ++b)
                    entity_vecs.push_back(noisy_unit(centroids[b], params.entity_noise, vec_eng));

                Entry canon;
                canon.surface = canonical;
                canon.frequency = 100 + static_cast<std::int64_t>(rng::uniform_index(freq_eng, 9900));
                canon.kb_id = kb;
                canon.entity = entity;
                canon.klass = static_cast<int>(c);
                canon.vectors = entity_vecs;
                entries.push_back(std::move(canon));

                if (e >= n_alias_entities) continue;
                const std::size_t n_aliases = 1 + rng::uniform_index(name_eng, 2);
                std::size_t rule = e % 4;
                for (std::size_t a = 0; a < n_aliases; ++a, ++rule) {
                    std::string alias;
                    for (std::size_t tries = 0; tries < 4 && alias.empty(); ++tries, ++rule) {
                        std::string s;
                        const auto toks = split_ws(canonical);
                        switch (rule % 4) {
                            case 0: // initialism
                                for (auto t : toks) s += t.front();
                                break;
                            case 1: // character-level prefix
                                s = canonical.substr(0, canonical.size() - toks.back().size() + 2);
                                break;
                            case 2: // token drop
                                s = std::string(toks.back());
                                break;
                            case 3: // suffix variant sharing all tokens
                                s = canonical + " " + make_token(name_eng, 2);
                                break;
                        }
                        alias = claim(s);
                    }
                    if (alias.empty()) continue;

                    Entry al;
                    al.surface = alias;
                    al.frequency = 10 + static_cast<std::int64_t>(rng::uniform_index(freq_eng, 90));
                    al.kb_id = kb;
                    al.entity = entity;
                    al.klass = static_cast<int>(c);
                    al.alias = true;
                    for (std::size_t b = 0; b < params.spaces; ++b) {
                        const double sigma =
                            b == 0 ? params.alias_noise_primary : params.alias_noise_secondary;
                        al.vectors.push_back(noisy_unit(entity_vecs[b], sigma, vec_eng));
                    }
                    entries.push_back(std::move(al));
                }
            }

            // Confusables: centroid / noise mixtures, not part of the gold class.
            for (std::size_t k = 0; k < params.confusables_per_class; ++k) {
                std::string s;
                while (s.empty()) s = claim(make_token(name_eng, 3) + " " + make_token(name_eng, 2));
                Entry conf;
                conf.surface = s;
                conf.frequency = 50 + static_cast<std::int64_t>(rng::uniform_index(freq_eng, 500));
                conf.kb_id = "QX_" + std::to_string(c) + "_" + std::to_string(k);
                for (std::size_t b = 0; b < params.spaces; ++b) {
                    auto r = random_unit(vec_eng, params.dim);
                    std::vector<double> v(params.dim);
                    for (std::size_t i = 0; i < params.dim; ++i)
                        v[i] = params.confusable_mix * centroids[b][i] +
                               (1.0 - params.confusable_mix) * r[i];
                    const double n = norm(v);
                    for (double& x : v) x /= n;
                    conf.vectors.push_back(std::move(v));
                }
                entries.push_back(std::move(conf));
            }
        }

        for (std::size_t k = 0; k < params.background; ++k) {
            std::string s;
            while (s.empty()) s = claim(make_token(name_eng, 3) + " " + make_token(name_eng, 3));
            Entry bg;
            bg.surface = s;
            bg.frequency = 10 + static_cast<std::int64_t>(rng::uniform_index(freq_eng, 990));
            bg.kb_id = "QB_" + std::to_string(k);
            for (std::size_t b = 0; b < params.spaces; ++b)
                bg.vectors.push_back(random_unit(vec_eng, params.dim));
            entries.push_back(std::move(bg));
        }

        auto snapshot = entries; // validate_margin needs entry metadata
        PlantedWorld world = assemble(std::move(entries), params, rng::derive(seed, 4));
        if (validate_margin(world, snapshot)) return world;
    }
    throw std::runtime_error("synthbench: margin violated in every attempt; lower the noise");
}

// Emits the exact file formats of the ingestion layer plus the gold labels.
inline void write_world(const std::filesystem::path& dir, const PlantedWorld& world) {
    std::filesystem::create_directories(dir);
    write_vocabulary(dir / "vocab.tsv", world.vocab);
    for (const auto& space : world.bag.spaces)
        write_embedding_space(dir / (space.name + ".txt"), space, world.vocab);
    write_seed_queries(dir / "queries.json", world.queries, world.vocab);

    nlohmann::json classes(world.gold_classes);
    std::ofstream(dir / "gold_classes.json") << classes.dump(2) << '\n';
    nlohmann::json synsets(world.gold_synsets);
    std::ofstream(dir / "gold_synsets.json") << synsets.dump(2) << '\n';
}

} // namespace synex
