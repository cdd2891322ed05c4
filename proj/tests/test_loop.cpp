#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "helpers.hpp"
#include "synex/loop.hpp"
#include "synex/synthbench.hpp"

using namespace synex;
using Catch::Matchers::WithinAbs;

namespace {

// A model that predicts the same probability for every pair.
GbdtModel constant_model(double probability, std::size_t feature_count) {
    GbdtModel m;
    m.feature_count = feature_count;
    m.base_score = std::log(probability / (1.0 - probability));
    return m;
}

// A model driven entirely by the is_prefix lexical feature (index 0).
GbdtModel prefix_model(std::size_t feature_count) {
    GbdtModel m;
    m.feature_count = feature_count;
    m.base_score = 0.0;
    m.learning_rate = 1.0;
    RegressionTree t;
    t.nodes.push_back(TreeNode{0, 0.5, 1, 2, 0.0});
    t.nodes.push_back(TreeNode{-1, 0, -1, -1, -10.0});
    t.nodes.push_back(TreeNode{-1, 0, -1, -1, 10.0});
    m.trees.push_back(t);
    return m;
}

// Minimal feature world for pseudo-label tests: one space, unit vectors.
struct StubWorld {
    Vocabulary vocab;
    EmbeddingBag bag;
    PcaProjector pca;
    FeatureContext ctx;

    explicit StubWorld(std::vector<std::string> surfaces) {
        std::vector<Term> terms;
        for (auto& s : surfaces) {
            Term t;
            t.id = static_cast<TermId>(terms.size());
            t.surface = std::move(s);
            terms.push_back(std::move(t));
        }
        vocab = Vocabulary(std::move(terms));
        EmbeddingSpace space;
        space.name = "s";
        space.dim = 4;
        auto eng = rng::make_engine(9);
        for (std::size_t i = 0; i < vocab.size(); ++i) {
            std::vector<double> v(4);
            for (double& x : v) x = rng::normal(eng);
            const double n = norm(v);
            for (double& x : v) x /= n;
            space.vectors.push_back(std::move(v));
        }
        bag.spaces.push_back(std::move(space));
        pca = fit_pca(bag.spaces[0], 2, 0);
        ctx = FeatureContext{&vocab, &bag, &pca, {0}, 0};
    }
};

// The full planted fixture shared by the iteration tests.
struct LoopFixture {
    PlantedWorld world;
    PcaProjector pca;
    FeatureContext ctx;
    GbdtModel generic_model;
    ExpanderConfig cfg;

    LoopFixture() {
        SynthParams p;
        p.classes = 2;
        p.entities_per_class = 6;
        p.synonym_rate = 0.5;
        p.background = 40;
        p.confusables_per_class = 2;
        p.spaces = 2;
        p.dim = 8;
        p.queries_per_class = 1;
        p.seed = 21;
        world = generate_world(p);
        pca = fit_pca(world.bag.spaces[0], 4, 0);
        ctx = FeatureContext{&world.vocab, &world.bag, &pca, {0}, 0};

        auto ds = generate_distant_supervision(world.vocab, world.bag.spaces[0], 8, 3);
        auto [X, y] = pair_training_data(ds.pairs, ctx);
        BoostParams bp;
        bp.rounds = 40;
        bp.rng_seed = 3;
        generic_model = train_gbdt(X, y, bp);

        cfg.negative_ratio = 4;
        cfg.ensemble_size = 4;
        cfg.pseudo_negatives = 4;
        cfg.fine_tune_trees = 5;
        cfg.max_iter = 3;
        cfg.target_expansion = 6;
        cfg.top_pool = 20;
        cfg.rng_seed = 17;
        cfg.workers = 2;
        cfg.fine_tune_params.rounds = 1; // only H matters in fine_tune
    }

    const SeedQuery& query(std::size_t i = 0) const { return world.queries[i]; }
};

} // namespace

TEST_CASE("final_score reproduces the fused-score illustration") {
    CHECK_THAT(final_score(0.57, 0.99), WithinAbs(0.7512, 1e-4));
    CHECK_THAT(final_score(0.78, 0.01), WithinAbs(0.0883, 1e-4));
    // The fused order reverses the p_set-only order.
    CHECK(0.78 > 0.57);
    CHECK(final_score(0.57, 0.99) > final_score(0.78, 0.01));

    CHECK(final_score(1.0, 1.0) == 1.0);
    for (double p : {0.1, 0.33, 0.5, 0.77, 1.0}) CHECK_THAT(final_score(p, p), WithinAbs(p, 1e-15));
}

TEST_CASE("final_score lies between its arguments and is monotone") {
    auto eng = rng::make_engine(7);
    for (int i = 0; i < 200; ++i) {
        const double p = 0.01 + 0.98 * rng::uniform_real(eng);
        const double s = 0.01 + 0.98 * rng::uniform_real(eng);
        const double f = final_score(p, s);
        CHECK(f >= std::min(p, s) - 1e-15);
        CHECK(f <= std::max(p, s) + 1e-15);
        CHECK(final_score(p + 0.005, s) > f);
        CHECK(final_score(p, s + 0.005) > f);
    }
}

TEST_CASE("scaling all sy scores preserves the final-score order") {
    auto eng = rng::make_engine(11);
    std::vector<std::pair<double, double>> items; // (p_set, sy)
    for (int i = 0; i < 50; ++i)
        items.emplace_back(rng::uniform_real(eng), rng::uniform_real(eng));
    auto order_with_scale = [&](double scale) {
        std::vector<std::size_t> idx(items.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            const double fa = final_score(items[a].first, scale * items[a].second);
            const double fb = final_score(items[b].first, scale * items[b].second);
            if (fa != fb) return fa > fb;
            return a < b;
        });
        return idx;
    };
    const auto base = order_with_scale(1.0);
    CHECK(order_with_scale(0.25) == base);
    CHECK(order_with_scale(0.9) == base);
}

TEST_CASE("sy_score is the max pair probability against the set") {
    StubWorld w({"alpha", "beta", "gamma"});
    auto set = ExpandedSet::from_seeds({0});

    auto m_hi = constant_model(0.99, w.ctx.feature_count());
    CHECK_THAT(sy_score(1, set, m_hi, w.ctx), WithinAbs(0.99, 1e-12));

    auto m_lo = constant_model(0.01, w.ctx.feature_count());
    CHECK_THAT(sy_score(1, set, m_lo, w.ctx), WithinAbs(0.01, 1e-12));

    // A member scores against the set without itself; a singleton set gives 0.
    CHECK(sy_score(0, set, m_hi, w.ctx) == 0.0);
}

TEST_CASE("sy_score never decreases when the set grows") {
    StubWorld w({"alpha", "alphabet", "beta", "gamma", "delta"});
    auto m = prefix_model(w.ctx.feature_count());
    auto small = ExpandedSet::from_seeds({2});
    auto big = ExpandedSet::from_seeds({2, 1}); // superset adds "alphabet"
    for (TermId e : {0, 3, 4}) CHECK(sy_score(e, big, m, w.ctx) >= sy_score(e, small, m, w.ctx));
    // "alpha" is a prefix of "alphabet": the superset unlocks a strong pair.
    CHECK(sy_score(0, big, m, w.ctx) > 0.9);
    CHECK(sy_score(0, small, m, w.ctx) < 0.1);
}

// ---------------------------------------------------------------------------
// Pseudo labels
// ---------------------------------------------------------------------------

namespace {

RankList make_rank_list(const std::vector<std::pair<TermId, double>>& scored) {
    RankList list;
    for (auto [id, p] : scored) list.entries.push_back(RankEntry{id, p, {}, {}});
    list.sort();
    return list;
}

} // namespace

TEST_CASE("pseudo labels: no qualifying pair yields an empty set") {
    StubWorld w({"alpha", "beta", "gamma", "delta", "low0", "low1"});
    auto generic_model = constant_model(0.2, w.ctx.feature_count()); // below pos_threshold
    auto list = make_rank_list({{0, 0.9}, {1, 0.8}, {2, 0.7}, {3, 0.6}, {4, 0.1}, {5, 0.2}});
    ExpanderConfig cfg;
    cfg.top_pool = 4;
    auto pairs = generate_pseudo_labels(list, generic_model, cfg, 1, w.ctx);
    CHECK(pairs.empty());
}

TEST_CASE("pseudo labels: one positive with N=10 yields 10 negatives") {
    std::vector<std::string> surfaces = {"alpha", "alphabet", "beta", "gamma"};
    for (int i = 0; i < 8; ++i) surfaces.push_back("low" + std::to_string(i));
    StubWorld w(surfaces);
    auto generic_model = prefix_model(w.ctx.feature_count());

    std::vector<std::pair<TermId, double>> scored = {{0, 0.95}, {1, 0.9}, {2, 0.8}, {3, 0.7}};
    for (TermId id = 4; id < 12; ++id) scored.emplace_back(id, 0.1);
    auto list = make_rank_list(scored);

    ExpanderConfig cfg;
    cfg.top_pool = 4;
    cfg.pseudo_negatives = 10;
    auto pairs = generate_pseudo_labels(list, generic_model, cfg, 5, w.ctx);

    std::size_t positives = 0, negatives = 0;
    std::set<TermId> sampled;
    for (const auto& p : pairs) {
        if (p.label == PairLabel::positive) {
            ++positives;
            CHECK(((p.a == 0 && p.b == 1)));
        } else {
            ++negatives;
            CHECK(p.source == PairSource::pseudo);
            const TermId low = p.a >= 4 ? p.a : p.b;
            const TermId endpoint = p.a >= 4 ? p.b : p.a;
            CHECK(low >= 4);
            CHECK((endpoint == 0 || endpoint == 1));
            sampled.insert(low);
        }
    }
    CHECK(positives == 1);
    CHECK(negatives == 10);
    CHECK(sampled.size() == 5); // ceil(N/2) entities, each paired with both endpoints
}

TEST_CASE("pseudo labels: three qualifying pairs with N=4 yield 12 negatives") {
    std::vector<std::string> surfaces = {"alpha", "alphabet", "beta",  "betamax",
                                         "gamma", "gammaray", "delta", "omega"};
    for (int i = 0; i < 10; ++i) surfaces.push_back("low" + std::to_string(i));
    StubWorld w(surfaces);
    auto generic_model = prefix_model(w.ctx.feature_count());

    std::vector<std::pair<TermId, double>> scored;
    for (TermId id = 0; id < 8; ++id) scored.emplace_back(id, 0.9 - 0.02 * id);
    for (TermId id = 8; id < 18; ++id) scored.emplace_back(id, 0.15);
    auto list = make_rank_list(scored);

    ExpanderConfig cfg;
    cfg.top_pool = 8;
    cfg.pseudo_negatives = 4;
    auto pairs = generate_pseudo_labels(list, generic_model, cfg, 5, w.ctx);

    // Brute-force rule oracle: positives are exactly the prefix pairs in the
    // pool; negatives join a positive endpoint with a sub-threshold entity.
    std::set<std::pair<TermId, TermId>> expected_pos;
    for (TermId a = 0; a < 8; ++a)
        for (TermId b = a + 1; b < 8; ++b)
            if (synonym_probability(generic_model, a, b, w.ctx) >= cfg.pos_threshold)
                expected_pos.insert({a, b});
    REQUIRE(expected_pos.size() == 3);

    std::set<std::pair<TermId, TermId>> seen;
    std::size_t positives = 0, negatives = 0;
    std::set<TermId> endpoints = {0, 1, 2, 3, 4, 5};
    for (const auto& p : pairs) {
        CHECK(seen.insert({p.a, p.b}).second);
        if (p.label == PairLabel::positive) {
            ++positives;
            CHECK(expected_pos.count({p.a, p.b}) == 1);
        } else {
            ++negatives;
            CHECK(expected_pos.count({p.a, p.b}) == 0);
            const bool a_low = p.a >= 8;
            const TermId low = a_low ? p.a : p.b;
            const TermId endpoint = a_low ? p.b : p.a;
            CHECK(low >= 8);
            CHECK(endpoints.count(endpoint) == 1);
        }
    }
    CHECK(positives == 3);
    CHECK(negatives == 12);
}

TEST_CASE("pseudo labels: no sub-threshold candidates is an error") {
    StubWorld w({"alpha", "alphabet", "beta", "gamma"});
    auto generic_model = prefix_model(w.ctx.feature_count());
    auto list = make_rank_list({{0, 0.95}, {1, 0.9}, {2, 0.8}, {3, 0.7}});
    ExpanderConfig cfg;
    cfg.top_pool = 4;
    CHECK_THROWS_AS(generate_pseudo_labels(list, generic_model, cfg, 1, w.ctx), ValidationError);
}

// ---------------------------------------------------------------------------
// Iterations and runs
// ---------------------------------------------------------------------------

TEST_CASE("per-iteration addition arithmetic") {
    ExpanderConfig cfg;
    cfg.target_expansion = 60;
    cfg.max_iter = 6;
    CHECK(cfg.per_iteration_additions() == 10);
    cfg.target_expansion = 25;
    CHECK(cfg.per_iteration_additions() == 5);
}

TEST_CASE("one iteration admits the top final scores") {
    LoopFixture fx;
    auto set = ExpandedSet::from_seeds(fx.query().all_ids());
    const std::size_t before = set.size();
    auto iter = run_iteration(set, fx.world.vocab, fx.world.bag, fx.generic_model, fx.cfg, 1, fx.ctx);

    CHECK(set.size() == before + iter.added.size());
    CHECK(iter.added.size() == fx.cfg.per_iteration_additions());

    // Every admitted entity's final score bounds every excluded candidate's.
    double min_added = 2.0, max_excluded = -1.0;
    std::set<TermId> added(iter.added.begin(), iter.added.end());
    for (const auto& e : iter.adjusted.entries) {
        if (!e.final_score) continue;
        if (added.count(e.id))
            min_added = std::min(min_added, *e.final_score);
        else if (!set.contains(e.id))
            max_excluded = std::max(max_excluded, *e.final_score);
    }
    CHECK(min_added >= max_excluded);

    // Fused columns satisfy the invariant final = sqrt(p * sy).
    for (const auto& e : iter.adjusted.entries) {
        REQUIRE(e.sy.has_value() == e.final_score.has_value());
        if (e.sy) CHECK_THAT(*e.final_score, WithinAbs(final_score(e.p_set, *e.sy), 1e-15));
    }
}

TEST_CASE("an iteration with no pseudo positives falls back to the generic model") {
    LoopFixture fx;
    fx.cfg.pos_threshold = 0.999999; // nothing qualifies
    auto set = ExpandedSet::from_seeds(fx.query().all_ids());
    auto iter = run_iteration(set, fx.world.vocab, fx.world.bag, fx.generic_model, fx.cfg, 1, fx.ctx);
    CHECK(iter.pseudo.empty());
    CHECK(iter.class_model.trees.size() == fx.generic_model.trees.size());
    CHECK_FALSE(iter.adjusted.entries.empty());
    CHECK_FALSE(iter.added.empty());
}

TEST_CASE("full run respects bounds, adds H trees per iteration, and is deterministic") {
    LoopFixture fx;
    auto result = run(fx.query(), fx.world.vocab, fx.world.bag, fx.generic_model, fx.cfg, fx.ctx);

    const std::size_t seeds = fx.query().all_ids().size();
    CHECK(result.set.size() <= seeds + fx.cfg.target_expansion);
    CHECK(result.set.additions() == fx.cfg.target_expansion); // candidates abound here
    CHECK(result.iterations.size() == fx.cfg.max_iter);

    for (const auto& it : result.iterations) {
        if (!it.pseudo.empty())
            CHECK(it.class_model.trees.size() == fx.generic_model.trees.size() + fx.cfg.fine_tune_trees);
        else
            CHECK(it.class_model.trees.size() == fx.generic_model.trees.size());
    }

    // Monotone growth, no removals.
    std::set<TermId> members;
    for (TermId id : result.set.ids()) CHECK(members.insert(id).second);
    for (TermId id : fx.query().all_ids()) CHECK(members.count(id) == 1);

    auto again = run(fx.query(), fx.world.vocab, fx.world.bag, fx.generic_model, fx.cfg, fx.ctx);
    CHECK(again.set.ids() == result.set.ids());
    REQUIRE(again.final_list.entries.size() == result.final_list.entries.size());
    for (std::size_t i = 0; i < again.final_list.entries.size(); ++i) {
        const auto& a = again.final_list.entries[i];
        const auto& b = result.final_list.entries[i];
        CHECK(a.id == b.id);
        CHECK(a.p_set == b.p_set); // bit-identical
        CHECK(a.sy == b.sy);
        CHECK(a.final_score == b.final_score);
    }
}

TEST_CASE("a single-iteration run grows by at most Z") {
    LoopFixture fx;
    fx.cfg.max_iter = 1;
    fx.cfg.target_expansion = 4;
    auto result = run(fx.query(), fx.world.vocab, fx.world.bag, fx.generic_model, fx.cfg, fx.ctx);
    CHECK(result.set.additions() <= 4);
    CHECK(result.iterations.size() == 1);
}

TEST_CASE("ablation mode runs no synonym model code") {
    LoopFixture fx;
    fx.cfg.use_synonym_model = false;
    g_gbdt_predictions.store(0);
    auto result = run(fx.query(), fx.world.vocab, fx.world.bag, fx.generic_model, fx.cfg, fx.ctx);
    CHECK(g_gbdt_predictions.load() == 0);
    for (const auto& it : result.iterations) {
        CHECK(it.pseudo.empty());
        for (const auto& e : it.adjusted.entries) {
            CHECK_FALSE(e.sy.has_value());
            CHECK_FALSE(e.final_score.has_value());
        }
    }
    CHECK(result.set.additions() == fx.cfg.target_expansion);
}

TEST_CASE("run artifacts land in the output directory") {
    testutil::TempDir dir;
    LoopFixture fx;
    fx.cfg.max_iter = 2;
    fx.cfg.target_expansion = 4;
    auto result = run(fx.query(), fx.world.vocab, fx.world.bag, fx.generic_model, fx.cfg, fx.ctx);
    write_run_artifacts(dir.path(), result, fx.query(), fx.world.vocab);

    CHECK(std::filesystem::exists(dir.file("iter_1/rank.tsv")));
    CHECK(std::filesystem::exists(dir.file("iter_1/pseudo_pairs.tsv")));
    CHECK(std::filesystem::exists(dir.file("iter_1/added.tsv")));
    CHECK(std::filesystem::exists(dir.file("iter_2/rank.tsv")));
    CHECK(std::filesystem::exists(dir.file("final_set.tsv")));

    auto summary = nlohmann::json::parse(testutil::read_file(dir.file("summary.json")));
    CHECK(summary.at("class_name") == fx.query().class_name);
    CHECK(summary.at("iterations").size() == result.iterations.size());
    CHECK(summary.at("final_size").get<std::size_t>() == result.set.size());
}
