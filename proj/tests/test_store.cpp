#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "synex/store.hpp"

using namespace synex;
using testutil::TempDir;
using testutil::write_file;

namespace {

Vocabulary make_vocab(const std::vector<std::pair<std::string, std::string>>& entries) {
    std::vector<Term> terms;
    for (const auto& [surface, kb] : entries) {
        Term t;
        t.id = static_cast<TermId>(terms.size());
        t.surface = surface;
        t.frequency = 1;
        if (!kb.empty()) t.kb_id = kb;
        terms.push_back(std::move(t));
    }
    return Vocabulary(std::move(terms));
}

} // namespace

TEST_CASE("load_vocabulary parses and assigns dense ids") {
    TempDir dir;
    auto path = write_file(dir.file("vocab.tsv"), "Texas\t812\tQ1439\nTX\t95\tQ1439\nAustin\t300\n");
    Vocabulary v = load_vocabulary(path);
    REQUIRE(v.size() == 3);
    CHECK(v.term(0).surface == "Texas");
    CHECK(v.term(0).frequency == 812);
    CHECK(v.term(0).kb_id == "Q1439");
    CHECK(v.term(1).id == 1);
    CHECK(v.term(2).surface == "Austin");
    CHECK_FALSE(v.term(2).kb_id.has_value());
    CHECK(v.find("TX") == TermId{1});
    CHECK_FALSE(v.find("Dallas").has_value());
}

TEST_CASE("load_vocabulary rejects duplicates and malformed lines") {
    TempDir dir;
    auto dup = write_file(dir.file("dup.tsv"), "Texas\t10\nAustin\t5\nTexas\t3\n");
    CHECK_THROWS_WITH(load_vocabulary(dup), Catch::Matchers::ContainsSubstring("Texas"));

    auto bad = write_file(dir.file("bad.tsv"), "Texas\t10\nAustin\n");
    CHECK_THROWS_WITH(load_vocabulary(bad), Catch::Matchers::ContainsSubstring(":2"));

    auto badfreq = write_file(dir.file("badfreq.tsv"), "Texas\t0\n");
    CHECK_THROWS_AS(load_vocabulary(badfreq), ValidationError);
}

TEST_CASE("vocabulary round-trips through its writer") {
    TempDir dir;
    Vocabulary v = make_vocab({{"Texas", "Q1439"}, {"Lone Star State", "Q1439"}, {"Austin", ""}});
    write_vocabulary(dir.file("v.tsv"), v);
    Vocabulary r = load_vocabulary(dir.file("v.tsv"));
    REQUIRE(r.size() == v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(r.term(static_cast<TermId>(i)).surface == v.term(static_cast<TermId>(i)).surface);
        CHECK(r.term(static_cast<TermId>(i)).frequency == v.term(static_cast<TermId>(i)).frequency);
        CHECK(r.term(static_cast<TermId>(i)).kb_id == v.term(static_cast<TermId>(i)).kb_id);
    }
}

TEST_CASE("load_embedding_space parses the text format") {
    TempDir dir;
    Vocabulary v = make_vocab({{"Texas", ""}, {"New York", ""}, {"Austin", ""}});
    auto path = write_file(dir.file("emb.txt"), "3 3\nTexas 1 0 0\nNew York 0 1 0\nElsewhere 0 0 1\n");
    EmbeddingSpace s = load_embedding_space(path, "test", v);
    CHECK(s.dim == 3);
    CHECK(s.coverage() == 2);
    CHECK(s.skipped_rows == 1);
    REQUIRE(s.has(1)); // multi-token surface matched
    CHECK(s.vec(1)[1] == 1.0);
    CHECK_FALSE(s.has(2));
}

TEST_CASE("load_embedding_space error cases") {
    TempDir dir;
    Vocabulary v = make_vocab({{"Texas", ""}});
    auto short_row = write_file(dir.file("short.txt"), "1 3\nTexas 0.5 0.5\n");
    CHECK_THROWS_WITH(load_embedding_space(short_row, "s", v),
                      Catch::Matchers::ContainsSubstring(":2"));

    auto nomatch = write_file(dir.file("nomatch.txt"), "2 2\nParis 1 0\nLondon 0 1\n");
    CHECK_THROWS_WITH(load_embedding_space(nomatch, "s", v),
                      Catch::Matchers::ContainsSubstring("no row matched"));

    auto nan_row = write_file(dir.file("nan.txt"), "1 2\nTexas nan 0\n");
    CHECK_THROWS_AS(load_embedding_space(nan_row, "s", v), ValidationError);
}

TEST_CASE("load_seed_queries resolves surfaces") {
    TempDir dir;
    Vocabulary v = make_vocab({{"Texas", ""}, {"TX", ""}, {"Illinois", ""}});
    auto path = write_file(dir.file("seeds.json"),
                           R"([{"class_name":"us_states","synsets":[["Texas","TX"],["Illinois"]]}])");
    auto queries = load_seed_queries(path, v);
    REQUIRE(queries.size() == 1);
    CHECK(queries[0].class_name == "us_states");
    REQUIRE(queries[0].synsets.size() == 2);
    CHECK(queries[0].all_ids() == std::vector<TermId>{0, 1, 2});
}

TEST_CASE("seed query for the countries example") {
    TempDir dir;
    Vocabulary v = make_vocab({{"United States", ""}, {"U.S.", ""}, {"China", ""}, {"Canada", ""}});
    auto path = write_file(
        dir.file("seeds.json"),
        R"([{"class_name":"countries","synsets":[["United States","U.S."],["China"],["Canada"]]}])");
    auto queries = load_seed_queries(path, v);
    REQUIRE(queries.size() == 1);
    CHECK(queries[0].synsets.size() == 3);
    CHECK(queries[0].all_ids().size() == 4);
}

TEST_CASE("load_seed_queries error cases") {
    TempDir dir;
    Vocabulary v = make_vocab({{"Texas", ""}});
    auto oov = write_file(dir.file("oov.json"),
                          R"([{"class_name":"c","synsets":[["Texas","Narnia"]]}])");
    CHECK_THROWS_WITH(load_seed_queries(oov, v), Catch::Matchers::ContainsSubstring("Narnia"));

    auto empty = write_file(dir.file("empty.json"), R"([{"class_name":"c","synsets":[]}])");
    CHECK_THROWS_AS(load_seed_queries(empty, v), ValidationError);

    auto overlap = write_file(dir.file("overlap.json"),
                              R"([{"class_name":"c","synsets":[["Texas"],["Texas"]]}])");
    CHECK_THROWS_AS(load_seed_queries(overlap, v), ValidationError);
}

TEST_CASE("seed queries round-trip through their writer") {
    TempDir dir;
    Vocabulary v = make_vocab({{"Texas", ""}, {"TX", ""}, {"Illinois", ""}, {"IL", ""}});
    std::vector<SeedQuery> queries{{"us_states", {{0, 1}, {2, 3}}}, {"tiny", {{2}}}};
    write_seed_queries(dir.file("q.json"), queries, v);
    auto r = load_seed_queries(dir.file("q.json"), v);
    REQUIRE(r.size() == 2);
    CHECK(r[0].synsets == queries[0].synsets);
    CHECK(r[1].synsets == queries[1].synsets);
    CHECK(r[1].class_name == "tiny");
}

TEST_CASE("labeled pairs round-trip as TSV") {
    TempDir dir;
    Vocabulary v = make_vocab({{"a", ""}, {"b", ""}, {"c", ""}});
    std::vector<LabeledPair> pairs{
        make_labeled_pair(2, 0, PairLabel::positive, PairSource::distant),
        make_labeled_pair(1, 2, PairLabel::negative, PairSource::pseudo)};
    write_labeled_pairs(dir.file("p.tsv"), pairs, v);
    auto r = load_labeled_pairs(dir.file("p.tsv"), v);
    REQUIRE(r.size() == 2);
    CHECK(r[0].a == 0);
    CHECK(r[0].b == 2); // normalized a < b
    CHECK(r[0].label == PairLabel::positive);
    CHECK(r[1].source == PairSource::pseudo);
    CHECK_THROWS_AS(make_labeled_pair(1, 1, PairLabel::positive, PairSource::distant),
                    ValidationError);
}

// ---------------------------------------------------------------------------
// Distant supervision
// ---------------------------------------------------------------------------

namespace {

// Simple planted geometry: same-kb pairs sit at the requested cosine.
EmbeddingSpace planted_space(const Vocabulary& v, double same_kb_cos) {
    EmbeddingSpace s;
    s.name = "planted";
    s.dim = 8;
    s.vectors.resize(v.size());
    const double c = same_kb_cos, o = std::sqrt(1.0 - same_kb_cos * same_kb_cos);
    std::map<std::string, int> kb_axis;
    for (const Term& t : v.terms()) {
        std::vector<double> vec(s.dim, 0.0);
        if (t.kb_id) {
            auto [it, fresh] = kb_axis.emplace(*t.kb_id, static_cast<int>(kb_axis.size()) * 2);
            const int axis = it->second;
            if (fresh)
                vec[static_cast<std::size_t>(axis)] = 1.0;
            else {
                vec[static_cast<std::size_t>(axis)] = c;
                vec[static_cast<std::size_t>(axis) + 1] = o;
            }
        }
        s.vectors[static_cast<std::size_t>(t.id)] = std::move(vec);
    }
    return s;
}

bool shares_token(const Vocabulary& v, TermId a, TermId b) {
    std::set<std::string> ta, tb;
    for (auto t : split_ws(v.surface(a))) ta.insert(to_lower(t));
    for (auto t : split_ws(v.surface(b))) tb.insert(to_lower(t));
    for (const auto& t : ta)
        if (tb.count(t)) return true;
    return false;
}

} // namespace

TEST_CASE("distant supervision positive rule") {
    Vocabulary v = make_vocab({{"a", "Q1"}, {"b", "Q1"}, {"c", "Q2"}});
    auto s_hi = planted_space(v, 0.9);
    auto ds = generate_distant_supervision(v, s_hi, 1, 42);
    CHECK(ds.positive_count == 1);
    CHECK(ds.pairs[0].a == 0);
    CHECK(ds.pairs[0].b == 1);
    CHECK(ds.pairs[0].label == PairLabel::positive);

    // Below the 0.5 threshold the same kb id yields nothing.
    auto s_lo = planted_space(v, 0.3);
    CHECK_THROWS_AS(generate_distant_supervision(v, s_lo, 1, 42), ValidationError);
}

TEST_CASE("distant supervision mixture on a planted vocabulary") {
    // 8 kb terms forming 4 positive pairs; exactly 20 token-sharing pairs
    // ("red *" and "blue *" groups of five); everything else token-disjoint.
    Vocabulary v = make_vocab({
        {"alpha", "Q1"}, {"beta", "Q1"}, {"gamma", "Q2"}, {"delta", "Q2"},
        {"epsilon", "Q3"}, {"zeta", "Q3"}, {"eta", "Q4"}, {"theta", "Q4"},
        {"red one", ""}, {"red two", ""}, {"red three", ""}, {"red four", ""}, {"red five", ""},
        {"blue six", ""}, {"blue seven", ""}, {"blue eight", ""}, {"blue nine", ""}, {"blue ten", ""},
        {"iota", ""}, {"kappa", ""},
    });
    REQUIRE(v.size() == 20);
    auto space = planted_space(v, 0.9);
    auto ds = generate_distant_supervision(v, space, 10, 7);

    // Exhaustive enumeration oracle over all 190 pairs.
    std::set<std::pair<TermId, TermId>> expected_pos;
    for (TermId a = 0; a < 20; ++a)
        for (TermId b = a + 1; b < 20; ++b) {
            const auto& ta = v.term(a);
            const auto& tb = v.term(b);
            if (ta.kb_id && tb.kb_id && *ta.kb_id == *tb.kb_id &&
                cosine(space.vec(a), space.vec(b)) > 0.5)
                expected_pos.insert({a, b});
        }
    REQUIRE(expected_pos.size() == 4);

    CHECK(ds.positive_count == 4);
    std::set<std::pair<TermId, TermId>> seen;
    std::size_t negatives = 0, sharing = 0;
    for (const auto& p : ds.pairs) {
        CHECK(p.a < p.b);
        CHECK(seen.insert({p.a, p.b}).second); // deduplicated
        if (p.label == PairLabel::positive) {
            CHECK(expected_pos.count({p.a, p.b}) == 1);
        } else {
            ++negatives;
            CHECK(expected_pos.count({p.a, p.b}) == 0);
            sharing += shares_token(v, p.a, p.b);
        }
    }
    CHECK(negatives == 40);
    CHECK(sharing == 20); // the whole hard pool, and nothing else shares tokens
    CHECK(ds.hard_negative_count == 20);
    CHECK(ds.random_negative_count == 20);
    CHECK(ds.hard_shortfall == 0);
}

TEST_CASE("distant supervision fills hard shortfall from the random pool") {
    Vocabulary v = make_vocab({
        {"alpha", "Q1"}, {"beta", "Q1"}, {"gamma", "Q2"}, {"delta", "Q2"},
        {"epsilon", "Q3"}, {"zeta", "Q3"}, {"eta", "Q4"}, {"theta", "Q4"},
        {"red one", ""}, {"red two", ""}, {"red three", ""}, {"red four", ""}, {"red five", ""},
        {"blue six", ""}, {"blue seven", ""}, {"blue eight", ""}, {"blue nine", ""}, {"blue ten", ""},
        {"iota", ""}, {"kappa", ""},
    });
    auto space = planted_space(v, 0.9);
    auto ds = generate_distant_supervision(v, space, 15, 7); // 60 negatives, pool has 20
    CHECK(ds.hard_negative_count == 20);
    CHECK(ds.hard_shortfall == 10);
    CHECK(ds.random_negative_count == 40);
}

TEST_CASE("distant supervision mixture counts differ by at most one") {
    Vocabulary v = make_vocab({
        {"a x", "Q1"}, {"b x", "Q1"}, {"c y", "Q2"}, {"d y", "Q2"},
        {"e", ""}, {"f", ""}, {"g", ""}, {"h", ""}, {"i", ""}, {"j", ""}, {"k", ""}, {"l", ""},
    });
    auto space = planted_space(v, 0.8);
    for (std::size_t npp : {1, 3, 5}) {
        auto ds = generate_distant_supervision(v, space, npp, 11);
        if (ds.hard_shortfall == 0) {
            const auto diff = ds.random_negative_count > ds.hard_negative_count
                                  ? ds.random_negative_count - ds.hard_negative_count
                                  : ds.hard_negative_count - ds.random_negative_count;
            CHECK(diff <= 1);
        }
    }
}

TEST_CASE("distant supervision preconditions") {
    Vocabulary v = make_vocab({{"a", "Q1"}, {"b", ""}, {"c", ""}});
    auto space = planted_space(v, 0.9);
    CHECK_THROWS_AS(generate_distant_supervision(v, space, 1, 0), ValidationError);
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

namespace {

EmbeddingSpace space_from_rows(const std::vector<std::vector<double>>& rows) {
    EmbeddingSpace s;
    s.name = "raw";
    s.dim = rows[0].size();
    s.vectors = rows;
    return s;
}

} // namespace

TEST_CASE("pca recovers a planted line") {
    std::vector<std::vector<double>> rows;
    const std::vector<double> dir = {1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0}; // unit
    for (int i = -5; i <= 5; ++i)
        rows.push_back({1.0 + i * dir[0], -2.0 + i * dir[1], 0.5 + i * dir[2]});
    auto pca = fit_pca(space_from_rows(rows), 1, 0);
    REQUIRE(pca.components.size() == 1);
    const double c = std::abs(dot(pca.components[0], dir));
    CHECK(c > 1.0 - 1e-6);
}

TEST_CASE("full-rank pca reconstructs in-sample vectors") {
    auto eng = synex::rng::make_engine(3);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 12; ++i) {
        std::vector<double> r(4);
        for (double& x : r) x = synex::rng::normal(eng);
        rows.push_back(std::move(r));
    }
    auto space = space_from_rows(rows);
    auto pca = fit_pca(space, 4, 0);
    for (const auto& r : rows) {
        auto rec = pca.reconstruct(pca.project(r));
        for (std::size_t i = 0; i < r.size(); ++i) CHECK_THAT(rec[i], Catch::Matchers::WithinAbs(r[i], 1e-6));
    }
}

TEST_CASE("pca projected variance matches an independent eigensolver") {
    auto eng = synex::rng::make_engine(17);
    const std::size_t n = 50, d = 8;
    std::vector<std::vector<double>> rows(n, std::vector<double>(d));
    for (auto& r : rows)
        for (std::size_t j = 0; j < d; ++j)
            r[j] = synex::rng::normal(eng) * (1.0 + static_cast<double>(j)) * 0.3;

    auto pca = fit_pca(space_from_rows(rows), 3, 0);

    // Projected total variance (sample covariance convention).
    std::vector<std::vector<double>> proj;
    for (const auto& r : rows) proj.push_back(pca.project(r));
    double projected_var = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        double mean = 0.0;
        for (const auto& p : proj) mean += p[k];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& p : proj) var += (p[k] - mean) * (p[k] - mean);
        projected_var += var / static_cast<double>(n - 1);
    }

    // Covariance eigenvalues via the test-local Jacobi solver.
    std::vector<double> mean(d, 0.0);
    for (const auto& r : rows)
        for (std::size_t j = 0; j < d; ++j) mean[j] += r[j] / static_cast<double>(n);
    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (const auto& r : rows)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]) / static_cast<double>(n - 1);
    auto eig = testutil::jacobi_eigenvalues(cov);
    const double top3 = eig[0] + eig[1] + eig[2];

    CHECK_THAT(projected_var, Catch::Matchers::WithinAbs(top3, 1e-6));
}

TEST_CASE("pca components are orthonormal") {
    auto eng = synex::rng::make_engine(23);
    std::vector<std::vector<double>> rows(30, std::vector<double>(6));
    for (auto& r : rows)
        for (double& x : r) x = synex::rng::normal(eng);
    auto pca = fit_pca(space_from_rows(rows), 4, 0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            const double expect = i == j ? 1.0 : 0.0;
            CHECK_THAT(dot(pca.components[i], pca.components[j]),
                       Catch::Matchers::WithinAbs(expect, 1e-8));
        }
}

TEST_CASE("pca reconstruction error is monotone in d_pca") {
    auto eng = synex::rng::make_engine(29);
    std::vector<std::vector<double>> rows(40, std::vector<double>(5));
    for (auto& r : rows)
        for (double& x : r) x = synex::rng::normal(eng);
    auto space = space_from_rows(rows);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k <= 5; ++k) {
        auto pca = fit_pca(space, k, 0);
        double err = 0.0;
        for (const auto& r : rows) {
            auto rec = pca.reconstruct(pca.project(r));
            for (std::size_t i = 0; i < r.size(); ++i) err += (rec[i] - r[i]) * (rec[i] - r[i]);
        }
        CHECK(err <= prev + 1e-9);
        prev = err;
    }
}

TEST_CASE("pca validates its preconditions") {
    std::vector<std::vector<double>> rows(10, std::vector<double>(3, 1.0));
    auto space = space_from_rows(rows);
    CHECK_THROWS_AS(fit_pca(space, 4, 0), ValidationError);

    std::vector<std::vector<double>> few(2, std::vector<double>(3, 1.0));
    CHECK_THROWS_AS(fit_pca(space_from_rows(few), 2, 0), ValidationError);
}

TEST_CASE("pca round-trips through json") {
    auto eng = synex::rng::make_engine(31);
    std::vector<std::vector<double>> rows(20, std::vector<double>(4));
    for (auto& r : rows)
        for (double& x : r) x = synex::rng::normal(eng);
    auto pca = fit_pca(space_from_rows(rows), 2, 0);
    auto r = pca_from_json(pca_to_json(pca));
    CHECK(r.mean == pca.mean);
    CHECK(r.components == pca.components);
}
