#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "synex/loop.hpp"
#include "synex/pair_model.hpp"
#include "synex/parallel.hpp"
#include "synex/rng.hpp"

// Synset construction: score every pair of the final expanded set with the
// class-specific synonym model, keep edges at or above a weight threshold,
// and read synsets off the communities of a weighted Louvain run.

namespace synex {

// Weighted undirected graph over the expanded set. No self-loops; each edge
// is stored in both adjacency lists.
struct SynonymGraph {
    std::vector<TermId> nodes;
    std::vector<std::vector<std::pair<int, double>>> adj; // by node index
    double total_weight = 0.0;                            // m: sum over undirected edges

    std::size_t size() const { return nodes.size(); }

    void add_edge(int i, int j, double w) {
        if (i == j) throw ValidationError("synonym graph: self-loops are not allowed");
        adj[static_cast<std::size_t>(i)].emplace_back(j, w);
        adj[static_cast<std::size_t>(j)].emplace_back(i, w);
        total_weight += w;
    }

    std::size_t edge_count() const {
        std::size_t n = 0;
        for (const auto& a : adj) n += a.size();
        return n / 2;
    }
};

// Node index -> community id. Dense ids; -1 marks an uncovered node.
struct Partition {
    std::vector<int> community_of;

    std::size_t community_count() const {
        int max_id = -1;
        for (int c : community_of) max_id = std::max(max_id, c);
        return static_cast<std::size_t>(max_id + 1);
    }

    // Renumber ids densely in order of first appearance over node order.
    void renumber() {
        std::unordered_map<int, int> remap;
        for (int& c : community_of) {
            auto [it, fresh] = remap.emplace(c, static_cast<int>(remap.size()));
            c = it->second;
        }
    }
};

struct Synset {
    std::string class_name;
    std::vector<TermId> members;
};

// Nodes are the members of the expanded set; edge (i,j) carries the synonym
// model's pair probability and is
// kept iff it reaches edge_threshold. Threshold 0 keeps the complete graph.
inline SynonymGraph build_graph(const ExpandedSet& set, const GbdtModel& model,
                                const FeatureContext& ctx, double edge_threshold = 0.5,
                                std::size_t workers = 0) {
    SynonymGraph g;
    g.nodes = set.ids();
    g.adj.resize(g.nodes.size());
    const std::size_t n = g.nodes.size();
    if (n < 2) return g;

    const std::size_t n_pairs = n * (n - 1) / 2;
    std::vector<double> weights(n_pairs);
    parallel_for(n_pairs, workers, [&](std::size_t k) {
        std::size_t i = 0, base = 0;
        while (base + (n - 1 - i) <= k) {
            base += n - 1 - i;
            ++i;
        }
        const std::size_t j = i + 1 + (k - base);
        weights[k] = synonym_probability(model, g.nodes[i], g.nodes[j], ctx);
    });
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j, ++k)
            if (weights[k] >= edge_threshold)
                g.add_edge(static_cast<int>(i), static_cast<int>(j), weights[k]);
    return g;
}

namespace louvain_detail {

// Internal level graph; aggregation introduces self-loops.
struct LevelGraph {
    std::vector<std::vector<std::pair<int, double>>> adj;
    std::vector<double> self_loop; // weight counted once; contributes 2w to the degree
    std::vector<double> degree;    // k_i = sum_j w_ij + 2 * self_i
    double two_m = 0.0;

    std::size_t size() const { return adj.size(); }

    static LevelGraph from(const SynonymGraph& g) {
        LevelGraph lg;
        lg.adj = g.adj;
        lg.self_loop.assign(g.size(), 0.0);
        lg.finish();
        return lg;
    }

    void finish() {
        degree.assign(adj.size(), 0.0);
        two_m = 0.0;
        for (std::size_t i = 0; i < adj.size(); ++i) {
            for (const auto& [j, w] : adj[i]) degree[i] += w;
            degree[i] += 2.0 * self_loop[i];
            two_m += degree[i];
        }
    }

    // Q for an assignment of this level's nodes.
    double modularity(const std::vector<int>& community) const {
        if (two_m <= 0.0) return 0.0;
        std::size_t n_comm = 0;
        for (int c : community) n_comm = std::max(n_comm, static_cast<std::size_t>(c) + 1);
        std::vector<double> internal(n_comm, 0.0), total(n_comm, 0.0);
        for (std::size_t i = 0; i < adj.size(); ++i) {
            const int ci = community[i];
            total[static_cast<std::size_t>(ci)] += degree[i];
            internal[static_cast<std::size_t>(ci)] += 2.0 * self_loop[i];
            for (const auto& [j, w] : adj[i])
                if (community[static_cast<std::size_t>(j)] == ci) internal[static_cast<std::size_t>(ci)] += w;
        }
        double q = 0.0;
        for (std::size_t c = 0; c < n_comm; ++c) {
            const double frac_tot = total[c] / two_m;
            q += internal[c] / two_m - frac_tot * frac_tot;
        }
        return q;
    }
};

} // namespace louvain_detail

// Standard weighted Newman-Girvan modularity of a partition. Every node must
// carry a community. An edgeless graph has Q = 0 by convention.
inline double modularity(const SynonymGraph& g, const Partition& p) {
    if (p.community_of.size() != g.size())
        throw ValidationError("modularity: partition size does not match the graph");
    for (int c : p.community_of)
        if (c < 0) throw ValidationError("modularity: uncovered node");
    return louvain_detail::LevelGraph::from(g).modularity(p.community_of);
}

// Per-pass modularity trace of a louvain run, for monotonicity checks.
struct LouvainTrace {
    std::vector<double> pass_modularity;
};

namespace louvain_detail {

// One sweep set of local moving to convergence. `community` carries the
// initial assignment (dense ids) and is updated in place; comm_total must
// match it. Returns true when any node moved. record_pass fires after every
// full sweep.
template <class RecordPass>
inline bool local_moving(const LevelGraph& level, std::vector<int>& community,
                         std::vector<double>& comm_total, const std::vector<std::size_t>& order,
                         RecordPass&& record_pass) {
    const double min_gain = 1e-12;
    bool improved = false;
    bool pass_moved = true;
    std::unordered_map<int, double> weight_to;
    while (pass_moved) {
        pass_moved = false;
        for (std::size_t i : order) {
            const int old_comm = community[i];

            weight_to.clear();
            for (const auto& [j, w] : level.adj[i])
                weight_to[community[static_cast<std::size_t>(j)]] += w;

            comm_total[static_cast<std::size_t>(old_comm)] -= level.degree[i];
            const double w_old = weight_to.count(old_comm) ? weight_to.at(old_comm) : 0.0;
            const double score_old =
                w_old -
                level.degree[i] * comm_total[static_cast<std::size_t>(old_comm)] / level.two_m;

            // Insert-into-c score; differences are proportional to the
            // modularity change, so the argmax is the best move.
            int best_comm = old_comm;
            double best_score = score_old;
            for (const auto& [c, w_c] : weight_to) {
                if (c == old_comm) continue;
                const double score =
                    w_c - level.degree[i] * comm_total[static_cast<std::size_t>(c)] / level.two_m;
                const bool better = score > best_score + min_gain;
                const bool tie_lower =
                    best_comm != old_comm && score > best_score - min_gain && c < best_comm;
                if (better || tie_lower) {
                    best_score = std::max(best_score, score);
                    best_comm = c;
                }
            }
            comm_total[static_cast<std::size_t>(best_comm)] += level.degree[i];
            if (best_comm != old_comm) {
                community[i] = best_comm;
                pass_moved = true;
                improved = true;
            }
        }
        record_pass();
    }
    return improved;
}

// One Louvain run: local moving + aggregation cycles, then the whole
// multilevel cycle restarted from the reached partition until no single-node
// move on the original graph improves modularity. Node visit order is
// shuffled from rng_seed; the result is a local modularity maximum and
// deterministic given the seed.
inline Partition louvain_once(const SynonymGraph& g, std::uint64_t rng_seed,
                              LouvainTrace* trace = nullptr,
                              const std::vector<int>* initial = nullptr) {
    const std::size_t n = g.size();
    Partition result;
    result.community_of.resize(n);
    for (std::size_t i = 0; i < n; ++i) result.community_of[i] = static_cast<int>(i);
    if (n == 0 || g.total_weight <= 0.0) return result; // singletons

    auto eng = rng::make_engine(rng_seed);
    auto shuffled = [&eng](std::size_t count) {
        std::vector<std::size_t> order(count);
        for (std::size_t i = 0; i < count; ++i) order[i] = i;
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t j = i + rng::uniform_index(eng, count - i);
            std::swap(order[i], order[j]);
        }
        return order;
    };

    // mapping[v]: current community of original node v, dense ids.
    std::vector<int> mapping(n);
    for (std::size_t i = 0; i < n; ++i) mapping[i] = static_cast<int>(i);
    if (initial) {
        mapping = *initial;
        Partition dense;
        dense.community_of = mapping;
        dense.renumber();
        mapping = dense.community_of;
    }

    bool cycle_improved = true;
    while (cycle_improved) {
        cycle_improved = false;

        LevelGraph level = LevelGraph::from(g);
        // proj[v]: level node containing original node v (level 0: identity).
        std::vector<int> proj(n);
        for (std::size_t i = 0; i < n; ++i) proj[i] = static_cast<int>(i);
        // Level 0 of each cycle starts from the current partition.
        std::vector<int> community = mapping;

        while (true) {
            const std::size_t ln = level.size();
            std::vector<double> comm_total(ln, 0.0);
            for (std::size_t i = 0; i < ln; ++i)
                comm_total[static_cast<std::size_t>(community[i])] += level.degree[i];

            auto record_pass = [&]() {
                if (!trace) return;
                Partition snapshot;
                snapshot.community_of.resize(n);
                for (std::size_t v = 0; v < n; ++v)
                    snapshot.community_of[v] = community[static_cast<std::size_t>(proj[v])];
                snapshot.renumber();
                trace->pass_modularity.push_back(modularity(g, snapshot));
            };

            const bool level_improved =
                local_moving(level, community, comm_total, shuffled(ln), record_pass);
            cycle_improved = cycle_improved || level_improved;

            // Renumber communities densely and fold them into proj.
            std::unordered_map<int, int> remap;
            for (std::size_t i = 0; i < ln; ++i) {
                auto [it, fresh] = remap.emplace(community[i], static_cast<int>(remap.size()));
                community[i] = it->second;
            }
            for (std::size_t v = 0; v < n; ++v)
                proj[v] = community[static_cast<std::size_t>(proj[v])];

            const std::size_t nn = remap.size();
            if (!level_improved || nn == ln) break;

            // Aggregate: one node per community, internal weight as self-loops.
            LevelGraph next;
            next.adj.resize(nn);
            next.self_loop.assign(nn, 0.0);
            std::vector<std::unordered_map<int, double>> agg(nn);
            for (std::size_t i = 0; i < ln; ++i) {
                const int ci = community[i];
                next.self_loop[static_cast<std::size_t>(ci)] += level.self_loop[i];
                for (const auto& [j, w] : level.adj[i]) {
                    const int cj = community[static_cast<std::size_t>(j)];
                    if (ci == cj) {
                        if (i < static_cast<std::size_t>(j))
                            next.self_loop[static_cast<std::size_t>(ci)] += w;
                    } else {
                        agg[static_cast<std::size_t>(ci)][cj] += w;
                    }
                }
            }
            for (std::size_t c = 0; c < nn; ++c) {
                std::vector<std::pair<int, double>> edges(agg[c].begin(), agg[c].end());
                std::sort(edges.begin(), edges.end());
                next.adj[c] = std::move(edges);
            }
            next.finish();
            level = std::move(next);
            community.assign(nn, 0);
            for (std::size_t i = 0; i < nn; ++i) community[i] = static_cast<int>(i);
        }

        mapping = proj;
    }

    result.community_of = mapping;
    result.renumber();
    return result;
}

} // namespace louvain_detail

// Louvain with seeded restarts, each a full run to a local modularity
// maximum: restart 0 is the classic singleton start, later restarts begin
// from random coarse partitions to escape order-independent attractors. The
// best-scoring partition wins, earliest restart on ties. Deterministic given
// rng_seed. The trace holds the winning restart's per-pass modularity, which
// is non-decreasing by construction.
inline Partition louvain(const SynonymGraph& g, std::uint64_t rng_seed,
                         LouvainTrace* trace = nullptr, std::size_t restarts = 16) {
    if (restarts < 1) restarts = 1;
    const std::size_t n = g.size();
    Partition best;
    LouvainTrace best_trace;
    double best_q = 0.0;
    for (std::size_t r = 0; r < restarts; ++r) {
        std::vector<int> initial;
        if (r > 0 && n > 1) {
            auto init_eng = rng::make_engine(rng::derive(rng_seed, 500 + r));
            const std::size_t buckets = 2 + rng::uniform_index(init_eng, std::max<std::size_t>(1, n / 2));
            initial.resize(n);
            for (std::size_t i = 0; i < n; ++i)
                initial[i] = static_cast<int>(rng::uniform_index(init_eng, buckets));
        }
        LouvainTrace t;
        Partition p = louvain_detail::louvain_once(g, rng::derive(rng_seed, r),
                                                   trace ? &t : nullptr,
                                                   initial.empty() ? nullptr : &initial);
        const double q = modularity(g, p);
        if (r == 0 || q > best_q + 1e-15) {
            best = std::move(p);
            best_trace = std::move(t);
            best_q = q;
        }
    }
    if (trace) *trace = std::move(best_trace);
    return best;
}

// One synset per community; singletons allowed. Members keep the expanded
// set's admission order, communities keep first-appearance order.
inline std::vector<Synset> extract_synsets(const SynonymGraph& g, const Partition& p,
                                           const std::string& class_name) {
    if (p.community_of.size() != g.size())
        throw ValidationError("extract_synsets: partition size does not match the graph");
    for (int c : p.community_of)
        if (c < 0) throw ValidationError("extract_synsets: uncovered node");

    std::vector<Synset> out;
    std::unordered_map<int, std::size_t> slot;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const int c = p.community_of[i];
        auto [it, fresh] = slot.emplace(c, out.size());
        if (fresh) out.push_back(Synset{class_name, {}});
        out[it->second].members.push_back(g.nodes[i]);
    }
    return out;
}

inline void write_synsets_json(const std::filesystem::path& path,
                               const std::vector<Synset>& synsets, const Vocabulary& vocab) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& s : synsets) {
        nlohmann::json members = nlohmann::json::array();
        for (TermId id : s.members) members.push_back(vocab.surface(id));
        doc.push_back({{"class", s.class_name}, {"members", std::move(members)}});
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    out << doc.dump(2) << '\n';
}

// Edge list dump: `a_surface<TAB>b_surface<TAB>weight`, each edge once.
inline void write_graph_tsv(const std::filesystem::path& path, const SynonymGraph& g,
                            const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    char buf[48];
    for (std::size_t i = 0; i < g.size(); ++i) {
        for (const auto& [j, w] : g.adj[i]) {
            if (static_cast<std::size_t>(j) < i) continue;
            std::snprintf(buf, sizeof(buf), "%.17g", w);
            out << vocab.surface(g.nodes[i]) << '\t'
                << vocab.surface(g.nodes[static_cast<std::size_t>(j)]) << '\t' << buf << '\n';
        }
    }
}

} // namespace synex
