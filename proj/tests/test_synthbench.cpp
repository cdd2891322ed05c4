#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "helpers.hpp"
#include "synex/synthbench.hpp"

using namespace synex;

namespace {

SynthParams small_params() {
    SynthParams p;
    p.classes = 2;
    p.entities_per_class = 8;
    p.synonym_rate = 0.5;
    p.background = 25;
    p.confusables_per_class = 3;
    p.spaces = 2;
    p.dim = 10;
    p.queries_per_class = 2;
    p.seed = 5;
    return p;
}

} // namespace

TEST_CASE("world counts follow the parameters") {
    SynthParams p;
    p.classes = 5;
    p.entities_per_class = 40;
    p.synonym_rate = 0.3;
    p.background = 100;
    p.confusables_per_class = 4;
    p.spaces = 2;
    p.dim = 12;
    p.seed = 11;
    auto world = generate_world(p);

    std::size_t canonical = 0, groups_ge2 = 0;
    for (const auto& [name, synsets] : world.gold_synsets) {
        canonical += synsets.size();
        for (const auto& s : synsets) groups_ge2 += s.size() >= 2;
    }
    CHECK(canonical == 200);    // 5 x 40 entities
    CHECK(groups_ge2 == 60);    // 0.3 x 40 per class get aliases
    CHECK(world.queries.size() == 5 * p.queries_per_class);
    CHECK(world.vocab.size() > 200 + 100 + 20); // + aliases
    for (const auto& q : world.queries) {
        CHECK(q.synsets.size() >= 2);
        CHECK(q.synsets.size() <= 3);
    }
}

TEST_CASE("planted margin holds in the primary space") {
    auto world = generate_world(small_params());
    CHECK(world.min_inter_entity_distance > world.max_intra_synonym_distance);

    // Independent nearest-neighbor re-check for alias vectors: a term's NN
    // must share its gold synset whenever the term is part of a >= 2 synset.
    const auto& space = world.bag.spaces[0];
    for (const auto& [name, synsets] : world.gold_synsets) {
        for (const auto& synset : synsets) {
            if (synset.size() < 2) continue;
            for (const auto& surface : synset) {
                const TermId id = *world.vocab.find(surface);
                double best = -2.0;
                TermId best_id = id;
                for (const Term& t : world.vocab.terms()) {
                    if (t.id == id) continue;
                    const double c = cosine(space.vec(id), space.vec(t.id));
                    if (c > best) {
                        best = c;
                        best_id = t.id;
                    }
                }
                const auto& nn_surface = world.vocab.surface(best_id);
                CHECK(std::count(synset.begin(), synset.end(), nn_surface) == 1);
            }
        }
    }
}

TEST_CASE("generation is byte-deterministic") {
    testutil::TempDir dir;
    auto p = small_params();
    write_world(dir.file("a"), generate_world(p));
    write_world(dir.file("b"), generate_world(p));
    p.seed += 1;
    write_world(dir.file("c"), generate_world(p));

    for (const char* name : {"vocab.tsv", "space_0.txt", "space_1.txt", "queries.json",
                             "gold_classes.json", "gold_synsets.json"}) {
        CHECK(testutil::read_file(dir.file("a") / name) == testutil::read_file(dir.file("b") / name));
    }
    CHECK(testutil::read_file(dir.file("a") / "vocab.tsv") !=
          testutil::read_file(dir.file("c") / "vocab.tsv"));
}

TEST_CASE("generated files round-trip through the ingestion loaders") {
    testutil::TempDir dir;
    auto world = generate_world(small_params());
    write_world(dir.path(), world);

    auto vocab = load_vocabulary(dir.file("vocab.tsv"));
    REQUIRE(vocab.size() == world.vocab.size());
    for (const Term& t : world.vocab.terms()) {
        CHECK(vocab.term(t.id).surface == t.surface);
        CHECK(vocab.term(t.id).frequency == t.frequency);
        CHECK(vocab.term(t.id).kb_id == t.kb_id);
    }

    for (std::size_t b = 0; b < world.bag.spaces.size(); ++b) {
        const auto& orig = world.bag.spaces[b];
        auto space = load_embedding_space(dir.file(orig.name + ".txt"), orig.name, vocab);
        REQUIRE(space.dim == orig.dim);
        REQUIRE(space.coverage() == orig.coverage());
        for (const Term& t : vocab.terms()) CHECK(space.vec(t.id)[0] == orig.vec(t.id)[0]);
    }

    auto queries = load_seed_queries(dir.file("queries.json"), vocab);
    REQUIRE(queries.size() == world.queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i)
        CHECK(queries[i].synsets == world.queries[i].synsets);

    // Gold files parse and cover the classes.
    auto gold = nlohmann::json::parse(testutil::read_file(dir.file("gold_classes.json")));
    CHECK(gold.size() == 2);
    for (const auto& [name, members] : gold.items())
        for (const auto& m : members) CHECK(vocab.find(m.get<std::string>()).has_value());
}

TEST_CASE("degenerate parameters are rejected") {
    SynthParams p = small_params();
    p.alias_noise_primary = p.entity_noise + 0.1;
    CHECK_THROWS_AS(generate_world(p), ValidationError);

    SynthParams q = small_params();
    q.classes = 0;
    CHECK_THROWS_AS(generate_world(q), ValidationError);
}
