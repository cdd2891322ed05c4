#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "synex/eval.hpp"
#include "synex/loop.hpp"
#include "synex/synset.hpp"
#include "synex/synthbench.hpp"

// Command-line surface. One JSON config file is the source of truth for a
// run; command flags override individual fields (flags win). All randomness
// flows from the single top-level seed through documented stream derivations.
//
// Exit codes: 0 success, 1 validation error (bad config, malformed input,
// missing file), 2 runtime error. SYNEX_CACHE_DIR overrides the cache
// directory from the config.

namespace synex::cli {

namespace fs = std::filesystem;

// Seed stream ids: every command derives its randomness from the one
// top-level seed through rng::derive(seed, stream). Expansion runs use
// kStreamExpandBase + query index.
inline constexpr std::uint64_t kStreamDistant = 1;
inline constexpr std::uint64_t kStreamPca = 2;
inline constexpr std::uint64_t kStreamHoldout = 3;
inline constexpr std::uint64_t kStreamTrainSynonym = 4;
inline constexpr std::uint64_t kStreamLouvain = 5;
inline constexpr std::uint64_t kStreamExpandBase = 0x1000;

struct EmbeddingRef {
    std::string name;
    std::string path;
};

struct Config {
    // paths
    std::string vocabulary;
    std::vector<EmbeddingRef> embeddings;
    std::string kb_map;       // optional TSV surface<TAB>kb_id
    std::string seed_queries; // JSON
    std::string output_dir = "runs";
    std::string cache_dir = "cache";

    // store
    std::size_t distant_neg_per_pos = 10;
    std::string distant_space; // default: first embedding
    std::size_t d_pca = 16;
    std::string pca_space; // default: first embedding

    // features
    std::vector<std::string> semantic_spaces; // default: first embedding

    BoostParams boost;       // depth 5, eta 0.1, gamma 0.1, subsample 0.5
    SvmParams svm;           // rbf, C = 1
    ExpanderConfig expander; // T=50 K=10 N=10 H=10 max_iter=6

    double edge_threshold = 0.5;
    std::vector<std::size_t> map_k = {10, 20, 50};
    std::size_t difficulty_k = 10000;

    std::uint64_t seed = 0;
    std::size_t workers = 0;

    fs::path config_dir; // directory of the config file; relative paths anchor here

    fs::path resolve(const std::string& p) const {
        fs::path path(p);
        return path.is_absolute() ? path : config_dir / path;
    }

    fs::path cache_path() const {
        if (const char* env = std::getenv("SYNEX_CACHE_DIR")) return fs::path(env);
        return resolve(cache_dir);
    }
};

inline Config load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }

    Config cfg;
    cfg.config_dir = fs::absolute(path).parent_path();

    const auto paths = j.value("paths", nlohmann::json::object());
    cfg.vocabulary = paths.value("vocabulary", "");
    cfg.kb_map = paths.value("kb_map", "");
    cfg.seed_queries = paths.value("seed_queries", "");
    cfg.output_dir = paths.value("output_dir", cfg.output_dir);
    cfg.cache_dir = paths.value("cache_dir", cfg.cache_dir);
    for (const auto& e : paths.value("embeddings", nlohmann::json::array()))
        cfg.embeddings.push_back({e.at("name").get<std::string>(), e.at("path").get<std::string>()});

    const auto store = j.value("store", nlohmann::json::object());
    cfg.distant_neg_per_pos = store.value("distant_neg_per_pos", cfg.distant_neg_per_pos);
    cfg.distant_space = store.value("distant_space", cfg.distant_space);
    cfg.d_pca = store.value("d_pca", cfg.d_pca);
    cfg.pca_space = store.value("pca_space", cfg.pca_space);

    const auto features = j.value("features", nlohmann::json::object());
    cfg.semantic_spaces =
        features.value("semantic_spaces", std::vector<std::string>(cfg.semantic_spaces));

    const auto boost = j.value("boost", nlohmann::json::object());
    cfg.boost.rounds = boost.value("rounds", cfg.boost.rounds);
    cfg.boost.learning_rate = boost.value("learning_rate", cfg.boost.learning_rate);
    cfg.boost.max_depth = boost.value("max_depth", cfg.boost.max_depth);
    cfg.boost.min_split_gain = boost.value("min_split_gain", cfg.boost.min_split_gain);
    cfg.boost.subsample = boost.value("subsample", cfg.boost.subsample);
    cfg.boost.l2_leaf_reg = boost.value("l2_leaf_reg", cfg.boost.l2_leaf_reg);

    const auto svm = j.value("svm", nlohmann::json::object());
    const std::string kernel = svm.value("kernel", std::string("rbf"));
    if (kernel == "rbf")
        cfg.svm.kernel = SvmParams::Kernel::rbf;
    else if (kernel == "linear")
        cfg.svm.kernel = SvmParams::Kernel::linear;
    else
        throw ValidationError("config: unknown svm kernel \"" + kernel + "\"");
    cfg.svm.C = svm.value("C", cfg.svm.C);
    cfg.svm.gamma = svm.value("gamma", cfg.svm.gamma);

    const auto exp = j.value("expander", nlohmann::json::object());
    cfg.expander.negative_ratio = exp.value("K", cfg.expander.negative_ratio);
    cfg.expander.ensemble_size = exp.value("T", cfg.expander.ensemble_size);
    cfg.expander.pseudo_negatives = exp.value("N", cfg.expander.pseudo_negatives);
    cfg.expander.fine_tune_trees = exp.value("H", cfg.expander.fine_tune_trees);
    cfg.expander.max_iter = exp.value("max_iter", cfg.expander.max_iter);
    cfg.expander.target_expansion = exp.value("Z", cfg.expander.target_expansion);
    cfg.expander.top_pool = exp.value("top_pool", cfg.expander.top_pool);
    cfg.expander.pos_threshold = exp.value("pos_threshold", cfg.expander.pos_threshold);
    cfg.expander.neg_threshold = exp.value("neg_threshold", cfg.expander.neg_threshold);
    cfg.expander.sy_pool_factor = exp.value("sy_pool_factor", cfg.expander.sy_pool_factor);

    const auto synset = j.value("synset", nlohmann::json::object());
    cfg.edge_threshold = synset.value("edge_threshold", cfg.edge_threshold);

    const auto ev = j.value("eval", nlohmann::json::object());
    cfg.map_k = ev.value("map_k", cfg.map_k);
    cfg.difficulty_k = ev.value("difficulty_k", cfg.difficulty_k);

    cfg.seed = j.value("seed", cfg.seed);
    cfg.workers = j.value("workers", cfg.workers);
    return cfg;
}

// Everything ingest and the downstream commands need of the config must be
// present and on disk before any work starts.
inline void validate_inputs(const Config& cfg, bool need_queries = true) {
    if (cfg.vocabulary.empty()) throw ValidationError("config: paths.vocabulary is required");
    if (cfg.embeddings.empty()) throw ValidationError("config: paths.embeddings is required");
    if (!fs::exists(cfg.resolve(cfg.vocabulary)))
        throw ValidationError("missing vocabulary file: " + cfg.resolve(cfg.vocabulary).string());
    for (const auto& e : cfg.embeddings)
        if (!fs::exists(cfg.resolve(e.path)))
            throw ValidationError("missing embedding file: " + cfg.resolve(e.path).string());
    if (!cfg.kb_map.empty() && !fs::exists(cfg.resolve(cfg.kb_map)))
        throw ValidationError("missing kb map file: " + cfg.resolve(cfg.kb_map).string());
    if (need_queries) {
        if (cfg.seed_queries.empty())
            throw ValidationError("config: paths.seed_queries is required");
        if (!fs::exists(cfg.resolve(cfg.seed_queries)))
            throw ValidationError("missing seed query file: " +
                                  cfg.resolve(cfg.seed_queries).string());
    }
}

// ---------------------------------------------------------------------------
// Store assembly
// ---------------------------------------------------------------------------

struct Store {
    Vocabulary vocab;
    EmbeddingBag bag;
    PcaProjector pca;
    std::vector<std::size_t> semantic_space_indices;
    std::size_t pca_space_index = 0;
    std::size_t distant_space_index = 0;

    FeatureContext feature_context() const {
        return FeatureContext{&vocab, &bag, &pca, semantic_space_indices, pca_space_index};
    }
};

namespace detail {

inline std::size_t space_index(const Config& cfg, const std::string& name) {
    if (name.empty()) return 0; // default: first configured space
    for (std::size_t i = 0; i < cfg.embeddings.size(); ++i)
        if (cfg.embeddings[i].name == name) return i;
    throw ValidationError("config references unknown embedding space \"" + name + "\"");
}

inline Vocabulary load_vocab_with_kb(const Config& cfg) {
    Vocabulary vocab = load_vocabulary(cfg.resolve(cfg.vocabulary));
    if (cfg.kb_map.empty()) return vocab;

    std::vector<Term> terms = vocab.terms();
    std::ifstream in(cfg.resolve(cfg.kb_map));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_char(line, '\t');
        if (fields.size() != 2)
            throw ValidationError(cfg.kb_map + ":" + std::to_string(lineno) +
                                  ": expected `surface<TAB>kb_id`");
        const TermId id = vocab.resolve(fields[0]);
        terms[static_cast<std::size_t>(id)].kb_id = std::string(fields[1]);
    }
    return Vocabulary(std::move(terms));
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string file_fingerprint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return hex64(fnv1a64(data));
}

// The slice of the config that determines ingest outputs.
inline std::string ingest_fingerprint(const Config& cfg) {
    nlohmann::json j = {{"distant_neg_per_pos", cfg.distant_neg_per_pos},
                        {"distant_space", cfg.distant_space},
                        {"d_pca", cfg.d_pca},
                        {"pca_space", cfg.pca_space},
                        {"seed", cfg.seed}};
    return hex64(fnv1a64(j.dump()));
}

inline nlohmann::json input_fingerprints(const Config& cfg) {
    nlohmann::json inputs = nlohmann::json::object();
    inputs[cfg.vocabulary] = file_fingerprint(cfg.resolve(cfg.vocabulary));
    for (const auto& e : cfg.embeddings) inputs[e.path] = file_fingerprint(cfg.resolve(e.path));
    if (!cfg.kb_map.empty()) inputs[cfg.kb_map] = file_fingerprint(cfg.resolve(cfg.kb_map));
    return inputs;
}

} // namespace detail

// Loads vocabulary + embeddings and the cached PCA projector. Requires a
// completed ingest (the cache holds pca.json and distant_pairs.tsv).
inline Store load_store(const Config& cfg, bool need_cache = true) {
    Store store;
    store.vocab = detail::load_vocab_with_kb(cfg);
    for (const auto& e : cfg.embeddings)
        store.bag.spaces.push_back(load_embedding_space(cfg.resolve(e.path), e.name, store.vocab));

    for (const auto& name : cfg.semantic_spaces)
        store.semantic_space_indices.push_back(detail::space_index(cfg, name));
    if (store.semantic_space_indices.empty()) store.semantic_space_indices.push_back(0);
    store.pca_space_index = detail::space_index(cfg, cfg.pca_space);
    store.distant_space_index = detail::space_index(cfg, cfg.distant_space);

    if (need_cache) {
        const fs::path pca_file = cfg.cache_path() / "pca.json";
        if (!fs::exists(pca_file))
            throw ValidationError("cache incomplete (" + pca_file.string() +
                                  " missing): run `synex ingest` first");
        std::ifstream in(pca_file);
        nlohmann::json j;
        in >> j;
        store.pca = pca_from_json(j);
    }
    return store;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline void cmd_ingest(const Config& cfg, std::ostream& log, bool force = false) {
    validate_inputs(cfg, /*need_queries=*/true);

    const fs::path cache = cfg.cache_path();
    const fs::path manifest_path = cache / "manifest.json";
    const auto inputs = detail::input_fingerprints(cfg);
    const auto fingerprint = detail::ingest_fingerprint(cfg);

    if (!force && fs::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        nlohmann::json manifest;
        try {
            in >> manifest;
        } catch (const nlohmann::json::exception&) {
            manifest = nlohmann::json::object();
        }
        bool hit = manifest.value("config_fingerprint", "") == fingerprint &&
                   manifest.value("inputs", nlohmann::json::object()) == inputs;
        for (const char* out : {"pca.json", "distant_pairs.tsv"})
            hit = hit && fs::exists(cache / out);
        if (hit) {
            log << "ingest: cache hit, nothing to do (" << manifest_path.string() << ")\n";
            return;
        }
    }

    Store store = load_store(cfg, /*need_cache=*/false);
    fs::create_directories(cache);

    for (const auto& space : store.bag.spaces)
        log << "ingest: space " << space.name << " covers " << space.coverage() << "/"
            << store.vocab.size() << " terms (" << space.skipped_rows << " file rows skipped)\n";

    const auto& distant_space = store.bag.spaces.at(store.distant_space_index);
    auto ds = generate_distant_supervision(store.vocab, distant_space, cfg.distant_neg_per_pos,
                                           rng::derive(cfg.seed, kStreamDistant));
    write_labeled_pairs(cache / "distant_pairs.tsv", ds.pairs, store.vocab);
    log << "ingest: distant supervision " << ds.positive_count << " positives, "
        << ds.hard_negative_count << " hard + " << ds.random_negative_count
        << " random negatives\n";
    if (ds.hard_shortfall > 0)
        log << "ingest: warning: hard-negative pool short by " << ds.hard_shortfall
            << " pairs, filled from the random pool\n";

    const auto& pca_space = store.bag.spaces.at(store.pca_space_index);
    auto pca = fit_pca(pca_space, cfg.d_pca, rng::derive(cfg.seed, kStreamPca));
    std::ofstream(cache / "pca.json") << pca_to_json(pca).dump() << '\n';

    nlohmann::json manifest = {{"format", "synex.cache"},
                               {"version", 1},
                               {"config_fingerprint", fingerprint},
                               {"inputs", inputs},
                               {"outputs", {"pca.json", "distant_pairs.tsv"}}};
    std::ofstream(manifest_path) << manifest.dump(2) << '\n';
    log << "ingest: cache written to " << cache.string() << "\n";
}

inline void cmd_train_synonym(const Config& cfg, std::ostream& log) {
    const fs::path cache = cfg.cache_path();
    if (!fs::exists(cache / "distant_pairs.tsv"))
        throw ValidationError("cache incomplete: run `synex ingest` first");

    Store store = load_store(cfg);
    const auto ctx = store.feature_context();
    const auto pairs = load_labeled_pairs(cache / "distant_pairs.tsv", store.vocab);

    // Deterministic 80/20 split for the metrics sidecar.
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto eng = rng::make_engine(rng::derive(cfg.seed, kStreamHoldout));
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::size_t j = i + rng::uniform_index(eng, order.size() - i);
        std::swap(order[i], order[j]);
    }
    const std::size_t holdout = std::max<std::size_t>(1, pairs.size() / 5);
    std::vector<LabeledPair> train_pairs, held_pairs;
    for (std::size_t k = 0; k < order.size(); ++k)
        (k < holdout ? held_pairs : train_pairs).push_back(pairs[order[k]]);

    auto [X, y] = pair_training_data(train_pairs, ctx);
    BoostParams params = cfg.boost;
    params.rng_seed = rng::derive(cfg.seed, kStreamTrainSynonym);
    auto generic_model = train_gbdt(X, y, params);
    save_gbdt(generic_model, cache / "synonym_model.json");

    std::vector<PairScore> held_scores;
    for (const auto& p : held_pairs)
        held_scores.push_back(PairScore{p.a, p.b, synonym_probability(generic_model, p.a, p.b, ctx),
                                        p.label == PairLabel::positive ? 1 : 0});
    nlohmann::json metrics = {{"train_pairs", train_pairs.size()},
                              {"heldout_pairs", held_pairs.size()},
                              {"trees", generic_model.trees.size()}};
    try {
        metrics["ap"] = average_precision(held_scores);
        metrics["auc"] = auc(held_scores);
        metrics["f1"] = f1(held_scores);
    } catch (const ValidationError&) {
        metrics["note"] = "held-out split is single-class; metrics unavailable";
    }
    std::ofstream(cache / "synonym_model_metrics.json") << metrics.dump(2) << '\n';
    log << "train-synonym: model " << (cache / "synonym_model.json").string() << " ("
        << generic_model.trees.size() << " trees); metrics " << metrics.dump() << "\n";
}

struct ExpandOptions {
    std::optional<std::string> class_name; // run only queries of this class
    std::optional<std::size_t> query_index;
    bool no_syn = false;
    std::string run_tag; // subdirectory under output_dir; default "joint"/"nosyn"
};

inline std::vector<fs::path> cmd_expand(const Config& cfg, const ExpandOptions& opts,
                                        std::ostream& log) {
    Store store = load_store(cfg);
    const auto ctx = store.feature_context();
    auto queries = load_seed_queries(cfg.resolve(cfg.seed_queries), store.vocab);

    GbdtModel generic_model;
    if (!opts.no_syn) {
        const fs::path model_path = cfg.cache_path() / "synonym_model.json";
        if (!fs::exists(model_path))
            throw ValidationError("model missing: run `synex train-synonym` first");
        generic_model = load_gbdt(model_path);
    }

    const std::string tag = !opts.run_tag.empty() ? opts.run_tag : (opts.no_syn ? "nosyn" : "joint");
    const fs::path out_root = cfg.resolve(cfg.output_dir) / tag;

    std::vector<fs::path> run_dirs;
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        if (opts.query_index && *opts.query_index != qi) continue;
        if (opts.class_name && queries[qi].class_name != *opts.class_name) continue;

        ExpanderConfig run_cfg = cfg.expander;
        run_cfg.svm = cfg.svm;
        run_cfg.fine_tune_params = cfg.boost;
        run_cfg.workers = cfg.workers;
        run_cfg.use_synonym_model = !opts.no_syn;
        run_cfg.rng_seed = rng::derive(cfg.seed, kStreamExpandBase + qi);

        auto result = run(queries[qi], store.vocab, store.bag, generic_model, run_cfg, ctx);

        const fs::path dir =
            out_root / ("query_" + std::to_string(qi) + "_" + queries[qi].class_name);
        write_run_artifacts(dir, result, queries[qi], store.vocab);
        if (!opts.no_syn) save_gbdt(result.class_model, dir / "class_model.json");
        run_dirs.push_back(dir);
        log << "expand: query " << qi << " (" << queries[qi].class_name << ") -> "
            << result.set.additions() << " additions"
            << (result.early_stopped ? " (early stop)" : "") << " -> " << dir.string() << "\n";
    }
    if (run_dirs.empty()) throw ValidationError("expand: no query matched the selection");
    return run_dirs;
}

inline fs::path cmd_synsets(const Config& cfg, const fs::path& run_dir, std::ostream& log) {
    if (!fs::exists(run_dir / "summary.json") || !fs::exists(run_dir / "final_set.tsv"))
        throw ValidationError("not a run directory (missing summary.json): " + run_dir.string());

    Store store = load_store(cfg);
    const auto ctx = store.feature_context();

    nlohmann::json summary;
    std::ifstream(run_dir / "summary.json") >> summary;
    const std::string class_name = summary.at("class_name").get<std::string>();

    const fs::path model_path = fs::exists(run_dir / "class_model.json") ? run_dir / "class_model.json"
                                                             : cfg.cache_path() / "synonym_model.json";
    if (!fs::exists(model_path))
        throw ValidationError("no synonym model found for " + run_dir.string());
    auto model = load_gbdt(model_path);

    ExpandedSet set;
    {
        std::ifstream in(run_dir / "final_set.tsv");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto fields = split_char(line, '\t');
            set.add(store.vocab.resolve(fields[0]),
                    fields.size() > 1 ? std::stoul(std::string(fields[1])) : 0);
        }
    }
    if (set.size() == 0) throw ValidationError("empty final set in " + run_dir.string());

    auto graph = build_graph(set, model, ctx, cfg.edge_threshold, cfg.workers);
    write_graph_tsv(run_dir / "graph.tsv", graph, store.vocab);
    auto partition = louvain(graph, rng::derive(cfg.seed, kStreamLouvain));
    auto synsets = extract_synsets(graph, partition, class_name);
    write_synsets_json(run_dir / "synsets.json", synsets, store.vocab);
    log << "synsets: " << synsets.size() << " synsets over " << set.size() << " entities -> "
        << (run_dir / "synsets.json").string() << "\n";
    return run_dir / "synsets.json";
}

// ---------------------------------------------------------------------------
// Evaluation over run directories
// ---------------------------------------------------------------------------

namespace detail {

struct RunRecord {
    std::string name; // directory basename, used to match across run roots
    std::string class_name;
    std::vector<std::string> seeds;
    std::vector<std::string> ranked; // final-iteration ranking, seeds included
};

inline RunRecord read_run_dir(const fs::path& dir) {
    RunRecord rec;
    rec.name = dir.filename().string();
    if (!fs::exists(dir / "summary.json"))
        throw ValidationError("not a run directory: " + dir.string());
    nlohmann::json summary;
    std::ifstream(dir / "summary.json") >> summary;
    rec.class_name = summary.at("class_name").get<std::string>();
    for (const auto& s : summary.at("seeds")) rec.seeds.push_back(s.get<std::string>());

    const std::size_t n_iter = summary.at("iterations").size();
    const fs::path rank_file = dir / ("iter_" + std::to_string(n_iter)) / "rank.tsv";
    std::ifstream in(rank_file);
    if (!in) throw ValidationError("missing rank list: " + rank_file.string());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_char(line, '\t');
        if (fields.size() < 3) throw ValidationError("malformed rank list: " + rank_file.string());
        rec.ranked.emplace_back(fields[1]);
    }
    return rec;
}

inline std::vector<fs::path> run_dirs_under(const fs::path& root) {
    if (fs::exists(root / "summary.json")) return {root};
    std::vector<fs::path> dirs;
    if (fs::is_directory(root))
        for (const auto& entry : fs::directory_iterator(root))
            if (entry.is_directory() && fs::exists(entry.path() / "summary.json"))
                dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw ValidationError("no run directories under " + root.string());
    return dirs;
}

inline std::map<std::string, std::vector<std::string>> load_gold_classes(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open gold file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("gold file " + path.string() + ": " + e.what());
    }
    std::map<std::string, std::vector<std::string>> gold;
    for (const auto& [name, members] : j.items())
        for (const auto& m : members) gold[name].push_back(m.get<std::string>());
    return gold;
}

// AP@K with seeds removed from both the ranking and the truth.
inline double run_ap_at_k(const RunRecord& rec,
                          const std::map<std::string, std::vector<std::string>>& gold,
                          std::size_t k) {
    auto it = gold.find(rec.class_name);
    if (it == gold.end())
        throw ValidationError("gold file lacks class \"" + rec.class_name + "\"");
    std::set<std::string> seed_set(rec.seeds.begin(), rec.seeds.end());

    // Map surfaces to synthetic ids for the metric call.
    std::map<std::string, TermId> ids;
    auto id_of = [&ids](const std::string& s) {
        return ids.emplace(s, static_cast<TermId>(ids.size())).first->second;
    };
    std::vector<TermId> ranked;
    for (const auto& s : rec.ranked)
        if (!seed_set.count(s)) ranked.push_back(id_of(s));
    std::unordered_set<TermId> truth;
    for (const auto& s : it->second)
        if (!seed_set.count(s)) truth.insert(id_of(s));
    if (truth.empty())
        throw ValidationError("class \"" + rec.class_name + "\" has no non-seed gold entities");
    return ap_at_k(ranked, truth, k);
}

} // namespace detail

inline nlohmann::json cmd_eval(const Config& cfg, const fs::path& run_root,
                               const std::optional<fs::path>& baseline_root,
                               const fs::path& gold_path, std::ostream& log) {
    const auto gold = detail::load_gold_classes(gold_path);
    const auto dirs = detail::run_dirs_under(run_root);

    nlohmann::json per_query = nlohmann::json::array();
    std::map<std::size_t, std::vector<double>> ap_by_k;
    std::map<std::string, detail::RunRecord> records;
    for (const auto& dir : dirs) {
        auto rec = detail::read_run_dir(dir);
        nlohmann::json row = {{"run", rec.name}, {"class", rec.class_name}};
        for (std::size_t k : cfg.map_k) {
            const double ap = detail::run_ap_at_k(rec, gold, k);
            row["ap@" + std::to_string(k)] = ap;
            ap_by_k[k].push_back(ap);
        }
        per_query.push_back(row);
        records.emplace(rec.name, std::move(rec));
    }

    nlohmann::json aggregate = nlohmann::json::object();
    for (const auto& [k, values] : ap_by_k) {
        double sum = 0.0;
        for (double v : values) sum += v;
        aggregate["map@" + std::to_string(k)] = sum / static_cast<double>(values.size());
    }

    nlohmann::json report = {{"queries", per_query}, {"aggregate", aggregate}};

    if (baseline_root) {
        const auto base_dirs = detail::run_dirs_under(*baseline_root);
        nlohmann::json tests = nlohmann::json::object();
        for (std::size_t k : cfg.map_k) {
            std::vector<double> ours, theirs;
            for (const auto& dir : base_dirs) {
                auto base_rec = detail::read_run_dir(dir);
                auto it = records.find(base_rec.name);
                if (it == records.end())
                    throw ValidationError("baseline run " + base_rec.name +
                                          " has no counterpart in " + run_root.string());
                ours.push_back(detail::run_ap_at_k(it->second, gold, k));
                theirs.push_back(detail::run_ap_at_k(base_rec, gold, k));
            }
            auto t = paired_t_test(ours, theirs);
            tests["ap@" + std::to_string(k)] = {{"t", t.t}, {"p", t.p}};
        }
        report["paired_t_test"] = tests;
    }

    fs::create_directories(cfg.resolve(cfg.output_dir));
    const fs::path report_path = cfg.resolve(cfg.output_dir) / "eval_report.json";
    std::ofstream(report_path) << report.dump(2) << '\n';

    // CSV table of the same numbers.
    const fs::path csv_path = cfg.resolve(cfg.output_dir) / "eval_report.csv";
    std::ofstream csv(csv_path);
    csv << "run,class";
    for (std::size_t k : cfg.map_k) csv << ",ap@" << k;
    csv << "\n";
    for (const auto& row : per_query) {
        csv << row.at("run").get<std::string>() << ',' << row.at("class").get<std::string>();
        for (std::size_t k : cfg.map_k) csv << ',' << row.at("ap@" + std::to_string(k)).get<double>();
        csv << "\n";
    }
    csv << "aggregate,";
    for (std::size_t k : cfg.map_k) csv << ',' << aggregate.at("map@" + std::to_string(k)).get<double>();
    csv << "\n";

    log << "eval: report " << report_path.string() << " " << aggregate.dump() << "\n";
    return report;
}

inline nlohmann::json cmd_analyze(const Config& cfg, const fs::path& gold_synsets_path,
                                  std::ostream& log) {
    Store store = load_store(cfg, /*need_cache=*/false);

    std::ifstream in(gold_synsets_path);
    if (!in) throw ValidationError("cannot open gold synsets: " + gold_synsets_path.string());
    nlohmann::json gold;
    try {
        in >> gold;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("gold synsets " + gold_synsets_path.string() + ": " + e.what());
    }

    const auto& space = store.bag.spaces.at(store.distant_space_index);
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [name, synsets_json] : gold.items()) {
        std::vector<std::vector<TermId>> synsets;
        std::vector<TermId> members;
        for (const auto& syn : synsets_json) {
            std::vector<TermId> ids;
            for (const auto& s : syn) {
                const TermId id = store.vocab.resolve(s.get<std::string>());
                ids.push_back(id);
                members.push_back(id);
            }
            synsets.push_back(std::move(ids));
        }
        nlohmann::json row;
        row["size"] = members.size();
        row["expansion_difficulty"] =
            set_expansion_difficulty(members, space, cfg.difficulty_k);
        try {
            row["lexical_difficulty"] = lexical_difficulty(synsets, store.vocab);
            row["semantic_difficulty"] = semantic_difficulty(synsets, space);
        } catch (const ValidationError&) {
            row["note"] = "all synsets are singletons; pair difficulties unavailable";
        }
        per_class[name] = std::move(row);
    }

    fs::create_directories(cfg.resolve(cfg.output_dir));
    const fs::path report_path = cfg.resolve(cfg.output_dir) / "difficulty_report.json";
    std::ofstream(report_path) << per_class.dump(2) << '\n';
    log << "analyze: report " << report_path.string() << "\n";
    return per_class;
}

// Generates a planted benchmark dataset in `out` along with a ready-to-run
// config.json pointing at the generated files.
inline fs::path cmd_bench(const SynthParams& params, const fs::path& out, std::ostream& log) {
    auto world = generate_world(params);
    write_world(out, world);

    nlohmann::json embeddings = nlohmann::json::array();
    for (const auto& space : world.bag.spaces)
        embeddings.push_back({{"name", space.name}, {"path", space.name + ".txt"}});
    // Expansion budget sized to the planted classes (pull roughly one class
    // worth of entities), with K and Z shrunk until the negative-sampling
    // precondition |V| > |E| * (K+1) holds through the final iteration.
    std::size_t max_seeds = 0;
    for (const auto& q : world.queries) max_seeds = std::max(max_seeds, q.all_ids().size());
    std::size_t z = params.entities_per_class + params.entities_per_class / 2;
    std::size_t k = 10;
    while (k > 1 && (max_seeds + z + 1) * (k + 1) >= world.vocab.size()) --k;
    while (z > 2 && (max_seeds + z + 1) * (k + 1) >= world.vocab.size()) --z;

    nlohmann::json cfg = {{"paths",
                           {{"vocabulary", "vocab.tsv"},
                            {"embeddings", std::move(embeddings)},
                            {"seed_queries", "queries.json"},
                            {"output_dir", "runs"},
                            {"cache_dir", "cache"}}},
                          {"store", {{"d_pca", std::min<std::size_t>(16, params.dim)}}},
                          {"expander", {{"T", 10}, {"K", k}, {"max_iter", 3}, {"Z", z}}},
                          {"seed", params.seed}};
    const fs::path cfg_path = out / "config.json";
    std::ofstream(cfg_path) << cfg.dump(2) << '\n';

    std::size_t synsets = 0;
    for (const auto& [name, sets] : world.gold_synsets) synsets += sets.size();
    log << "bench: " << world.vocab.size() << " terms, " << world.gold_classes.size()
        << " classes, " << synsets << " gold synsets, " << world.queries.size() << " queries -> "
        << out.string() << "\n";
    log << "bench: config written to " << cfg_path.string() << "\n";
    return cfg_path;
}

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

inline int run(int argc, char** argv) {
    CLI::App app{"joint entity set expansion and synonym discovery"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed_override = 0;
    bool seed_given = false;
    std::size_t workers_override = 0;
    bool workers_given = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "run configuration JSON")->required();
        cmd->add_option("--seed", seed_override, "override the top-level seed")
            ->each([&](const std::string&) { seed_given = true; });
        cmd->add_option("--workers", workers_override, "cap worker threads")
            ->each([&](const std::string&) { workers_given = true; });
    };

    auto* ingest = app.add_subcommand("ingest", "validate and cache inputs");
    bool force = false;
    add_common(ingest);
    ingest->add_flag("--force", force, "rebuild the cache even on a manifest hit");

    auto* train = app.add_subcommand("train-synonym", "train the generic synonym model");
    std::size_t rounds_override = 0;
    add_common(train);
    train->add_option("--rounds", rounds_override, "override boosting rounds");

    auto* expand = app.add_subcommand("expand", "run the iterative expansion loop");
    add_common(expand);
    ExpandOptions expand_opts;
    std::string expand_class;
    long long expand_index = -1;
    expand->add_option("--class", expand_class, "only queries of this class");
    expand->add_option("--query-index", expand_index, "only this query index");
    expand->add_flag("--no-syn", expand_opts.no_syn,
                     "ablation: disable the synonym model entirely");
    expand->add_option("--tag", expand_opts.run_tag, "output subdirectory name");

    auto* synsets = app.add_subcommand("synsets", "cluster a finished run into synsets");
    add_common(synsets);
    std::string synsets_run_dir;
    double edge_threshold_override = -1.0;
    synsets->add_option("--run-dir", synsets_run_dir, "expansion run directory")->required();
    synsets->add_option("--edge-threshold", edge_threshold_override,
                        "override the synonym graph edge threshold");

    auto* eval_cmd = app.add_subcommand("eval", "score runs against gold classes");
    add_common(eval_cmd);
    std::string eval_run_dir, eval_baseline_dir, eval_gold;
    eval_cmd->add_option("--run-dir", eval_run_dir, "run directory (or parent of runs)")
        ->required();
    eval_cmd->add_option("--baseline-dir", eval_baseline_dir,
                         "second run directory for the paired t-test");
    eval_cmd->add_option("--gold", eval_gold, "gold classes JSON")->required();

    auto* analyze = app.add_subcommand("analyze", "dataset difficulty metrics");
    add_common(analyze);
    std::string analyze_gold;
    std::size_t difficulty_k_override = 0;
    analyze->add_option("--gold-synsets", analyze_gold, "gold synsets JSON")->required();
    analyze->add_option("-k", difficulty_k_override, "top-k for expansion difficulty");

    auto* bench = app.add_subcommand("bench", "generate a planted benchmark dataset");
    std::string bench_out;
    SynthParams bench_params;
    bench->add_option("--out", bench_out, "output directory")->required();
    bench->add_option("--classes", bench_params.classes, "number of semantic classes");
    bench->add_option("--entities", bench_params.entities_per_class, "entities per class");
    bench->add_option("--synonym-rate", bench_params.synonym_rate,
                      "fraction of entities given aliases");
    bench->add_option("--background", bench_params.background, "background vocabulary size");
    bench->add_option("--confusables", bench_params.confusables_per_class,
                      "near-class distractors per class");
    bench->add_option("--spaces", bench_params.spaces, "number of embedding spaces");
    bench->add_option("--dim", bench_params.dim, "embedding dimensionality");
    bench->add_option("--queries-per-class", bench_params.queries_per_class,
                      "seed queries per class");
    bench->add_option("--seed", bench_params.seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (bench->parsed()) {
            cmd_bench(bench_params, bench_out, std::cout);
            return 0;
        }

        Config cfg = load_config(config_path);
        if (seed_given) cfg.seed = seed_override;
        if (workers_given) cfg.workers = workers_override;

        if (ingest->parsed()) {
            cmd_ingest(cfg, std::cout, force);
        } else if (train->parsed()) {
            if (rounds_override > 0) cfg.boost.rounds = rounds_override;
            cmd_train_synonym(cfg, std::cout);
        } else if (expand->parsed()) {
            if (!expand_class.empty()) expand_opts.class_name = expand_class;
            if (expand_index >= 0) expand_opts.query_index = static_cast<std::size_t>(expand_index);
            cmd_expand(cfg, expand_opts, std::cout);
        } else if (synsets->parsed()) {
            if (edge_threshold_override >= 0.0) cfg.edge_threshold = edge_threshold_override;
            cmd_synsets(cfg, synsets_run_dir, std::cout);
        } else if (eval_cmd->parsed()) {
            std::optional<fs::path> baseline;
            if (!eval_baseline_dir.empty()) baseline = fs::path(eval_baseline_dir);
            cmd_eval(cfg, eval_run_dir, baseline, eval_gold, std::cout);
        } else if (analyze->parsed()) {
            if (difficulty_k_override > 0) cfg.difficulty_k = difficulty_k_override;
            cmd_analyze(cfg, analyze_gold, std::cout);
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace synex::cli
