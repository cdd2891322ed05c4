#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "synex/rng.hpp"
#include "synex/text.hpp"
#include "synex/types.hpp"
#include "synex/vec.hpp"

// Ingestion layer: vocabulary, embedding spaces, seed queries, distant
// supervision pairs, and the PCA projector for reduced-embedding features.
// Everything loaded here is immutable afterwards and safe to share across
// worker threads; the loaders themselves are single-threaded.

namespace synex {

struct Term {
    TermId id = 0;
    std::string surface;
    std::int64_t frequency = 1;
    std::optional<std::string> kb_id;
};

class Vocabulary {
public:
    Vocabulary() = default;

    explicit Vocabulary(std::vector<Term> terms) : terms_(std::move(terms)) {
        for (const Term& t : terms_) {
            if (!by_surface_.emplace(t.surface, t.id).second)
                throw ValidationError("duplicate surface in vocabulary: \"" + t.surface + "\"");
        }
    }

    std::size_t size() const { return terms_.size(); }
    const Term& term(TermId id) const { return terms_.at(static_cast<std::size_t>(id)); }
    const std::string& surface(TermId id) const { return term(id).surface; }
    const std::vector<Term>& terms() const { return terms_; }

    std::optional<TermId> find(std::string_view surface) const {
        auto it = by_surface_.find(std::string(surface));
        return it == by_surface_.end() ? std::nullopt : std::optional<TermId>(it->second);
    }

    // Throws naming the surface; used when resolving user-provided inputs.
    TermId resolve(std::string_view surface) const {
        if (auto id = find(surface)) return *id;
        throw ValidationError("surface not in vocabulary: \"" + std::string(surface) + "\"");
    }

private:
    std::vector<Term> terms_;
    std::unordered_map<std::string, TermId> by_surface_;
};

struct EmbeddingSpace {
    std::string name;
    std::size_t dim = 0;
    // Indexed by term id; an empty inner vector means the term has no vector
    // in this space.
    std::vector<std::vector<double>> vectors;
    std::size_t skipped_rows = 0; // file rows whose surface was out of vocabulary

    bool has(TermId id) const {
        return id >= 0 && static_cast<std::size_t>(id) < vectors.size() &&
               !vectors[static_cast<std::size_t>(id)].empty();
    }
    std::span<const double> vec(TermId id) const {
        return vectors[static_cast<std::size_t>(id)];
    }
    std::size_t coverage() const {
        std::size_t n = 0;
        for (const auto& v : vectors) n += !v.empty();
        return n;
    }
    // Term ids with a vector, ascending.
    std::vector<TermId> covered_ids() const {
        std::vector<TermId> ids;
        for (std::size_t i = 0; i < vectors.size(); ++i)
            if (!vectors[i].empty()) ids.push_back(static_cast<TermId>(i));
        return ids;
    }
};

struct EmbeddingBag {
    std::vector<EmbeddingSpace> spaces;

    std::size_t size() const { return spaces.size(); }

    const EmbeddingSpace& space(std::string_view name) const {
        for (const auto& s : spaces)
            if (s.name == name) return s;
        throw ValidationError("unknown embedding space: \"" + std::string(name) + "\"");
    }

    // True when the term has a vector in every space; terms failing this are
    // excluded from model input and reported by the callers.
    bool covers(TermId id) const {
        for (const auto& s : spaces)
            if (!s.has(id)) return false;
        return !spaces.empty();
    }
};

struct SeedQuery {
    std::string class_name;
    std::vector<std::vector<TermId>> synsets;

    std::vector<TermId> all_ids() const {
        std::vector<TermId> out;
        for (const auto& s : synsets) out.insert(out.end(), s.begin(), s.end());
        return out;
    }
};

enum class PairLabel : std::uint8_t { negative = 0, positive = 1 };
enum class PairSource : std::uint8_t { distant = 0, pseudo = 1 };

// Unordered pair, stored with a < b.
struct LabeledPair {
    TermId a = 0;
    TermId b = 0;
    PairLabel label = PairLabel::negative;
    PairSource source = PairSource::distant;
};

inline LabeledPair make_labeled_pair(TermId a, TermId b, PairLabel label, PairSource source) {
    if (a == b) throw ValidationError("labeled pair must join two distinct terms");
    if (a > b) std::swap(a, b);
    return LabeledPair{a, b, label, source};
}

// ---------------------------------------------------------------------------
// Loaders / writers
// ---------------------------------------------------------------------------

namespace detail {

inline std::ifstream open_or_throw(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file: " + path.string());
    return in;
}

inline double parse_double(std::string_view tok, const std::string& where) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size())
        throw ValidationError(where + ": not a number: \"" + std::string(tok) + "\"");
    if (!std::isfinite(v)) throw ValidationError(where + ": non-finite value");
    return v;
}

inline std::int64_t parse_int(std::string_view tok, const std::string& where) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size())
        throw ValidationError(where + ": not an integer: \"" + std::string(tok) + "\"");
    return v;
}

inline void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

} // namespace detail

// TSV `surface<TAB>frequency[<TAB>kb_id]`, UTF-8, no header. Dense ids are
// assigned in file order.
inline Vocabulary load_vocabulary(const std::filesystem::path& path) {
    auto in = detail::open_or_throw(path);
    std::vector<Term> terms;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (line.empty()) continue;
        const std::string where = path.filename().string() + ":" + std::to_string(lineno);
        auto fields = split_char(line, '\t');
        if (fields.size() != 2 && fields.size() != 3)
            throw ValidationError(where + ": expected 2 or 3 tab-separated fields, got " +
                                  std::to_string(fields.size()));
        if (fields[0].empty()) throw ValidationError(where + ": empty surface");
        const std::int64_t freq = detail::parse_int(fields[1], where);
        if (freq < 1) throw ValidationError(where + ": frequency must be >= 1");

        Term t;
        t.id = static_cast<TermId>(terms.size());
        t.surface = std::string(fields[0]);
        t.frequency = freq;
        if (fields.size() == 3 && !fields[2].empty()) t.kb_id = std::string(fields[2]);
        terms.push_back(std::move(t));
    }
    return Vocabulary(std::move(terms)); // rejects duplicate surfaces
}

inline void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    for (const Term& t : vocab.terms()) {
        out << t.surface << '\t' << t.frequency;
        if (t.kb_id) out << '\t' << *t.kb_id;
        out << '\n';
    }
}

// Text embedding format: header `<count> <dim>`, then `surface v1 ... v_dim`.
// The last `dim` whitespace fields of a row are the vector; everything before
// them (joined by single spaces) is the surface, so multi-token surfaces work.
inline EmbeddingSpace load_embedding_space(const std::filesystem::path& path,
                                           std::string name, const Vocabulary& vocab) {
    auto in = detail::open_or_throw(path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
    detail::strip_cr(line);
    auto header = split_ws(line);
    if (header.size() != 2)
        throw ValidationError(path.string() + ":1: expected header `<count> <dim>`");
    const auto dim = detail::parse_int(header[1], path.filename().string() + ":1");
    if (dim < 1) throw ValidationError(path.string() + ":1: dim must be >= 1");

    EmbeddingSpace space;
    space.name = std::move(name);
    space.dim = static_cast<std::size_t>(dim);
    space.vectors.resize(vocab.size());

    std::size_t lineno = 1;
    std::size_t matched = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (line.empty()) continue;
        const std::string where = path.filename().string() + ":" + std::to_string(lineno);
        auto toks = split_ws(line);
        if (toks.size() < space.dim + 1)
            throw ValidationError(where + ": expected surface + " + std::to_string(space.dim) +
                                  " values, got " + std::to_string(toks.size()) + " fields");
        const std::size_t n_surface = toks.size() - space.dim;
        std::string surface(toks[0]);
        for (std::size_t i = 1; i < n_surface; ++i) {
            surface += ' ';
            surface += toks[i];
        }
        auto id = vocab.find(surface);
        if (!id) {
            ++space.skipped_rows;
            continue;
        }
        std::vector<double> v(space.dim);
        for (std::size_t i = 0; i < space.dim; ++i)
            v[i] = detail::parse_double(toks[n_surface + i], where);
        auto& slot = space.vectors[static_cast<std::size_t>(*id)];
        if (!slot.empty()) throw ValidationError(where + ": duplicate vector for \"" + surface + "\"");
        slot = std::move(v);
        ++matched;
    }
    if (matched == 0)
        throw ValidationError(path.string() + ": no row matched the vocabulary");
    return space;
}

inline void write_embedding_space(const std::filesystem::path& path, const EmbeddingSpace& space,
                                  const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    out << space.coverage() << ' ' << space.dim << '\n';
    char buf[64];
    for (TermId id : space.covered_ids()) {
        out << vocab.surface(id);
        for (double v : space.vec(id)) {
            std::snprintf(buf, sizeof(buf), " %.17g", v);
            out << buf;
        }
        out << '\n';
    }
}

// JSON array of {class_name, synsets: [[surface,...],...]}.
inline std::vector<SeedQuery> load_seed_queries(const std::filesystem::path& path,
                                                const Vocabulary& vocab) {
    auto in = detail::open_or_throw(path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw ValidationError(path.string() + ": expected a JSON array of queries");

    std::vector<SeedQuery> out;
    for (const auto& q : doc) {
        SeedQuery sq;
        sq.class_name = q.at("class_name").get<std::string>();
        const auto& synsets = q.at("synsets");
        if (!synsets.is_array() || synsets.empty())
            throw ValidationError("query \"" + sq.class_name + "\": synset list is empty");
        std::unordered_set<TermId> seen;
        for (const auto& syn : synsets) {
            if (!syn.is_array() || syn.empty())
                throw ValidationError("query \"" + sq.class_name + "\": empty synset");
            std::vector<TermId> ids;
            for (const auto& s : syn) {
                TermId id = vocab.resolve(s.get<std::string>());
                if (!seen.insert(id).second)
                    throw ValidationError("query \"" + sq.class_name + "\": surface \"" +
                                          vocab.surface(id) + "\" appears in two synsets");
                ids.push_back(id);
            }
            sq.synsets.push_back(std::move(ids));
        }
        out.push_back(std::move(sq));
    }
    return out;
}

inline void write_seed_queries(const std::filesystem::path& path,
                               const std::vector<SeedQuery>& queries, const Vocabulary& vocab) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& q : queries) {
        nlohmann::json synsets = nlohmann::json::array();
        for (const auto& syn : q.synsets) {
            nlohmann::json arr = nlohmann::json::array();
            for (TermId id : syn) arr.push_back(vocab.surface(id));
            synsets.push_back(std::move(arr));
        }
        doc.push_back({{"class_name", q.class_name}, {"synsets", std::move(synsets)}});
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    out << doc.dump(2) << '\n';
}

// TSV `a_surface<TAB>b_surface<TAB>label<TAB>source`.
inline void write_labeled_pairs(const std::filesystem::path& path,
                                const std::vector<LabeledPair>& pairs, const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    for (const auto& p : pairs) {
        out << vocab.surface(p.a) << '\t' << vocab.surface(p.b) << '\t'
            << (p.label == PairLabel::positive ? "positive" : "negative") << '\t'
            << (p.source == PairSource::distant ? "distant" : "pseudo") << '\n';
    }
}

inline std::vector<LabeledPair> load_labeled_pairs(const std::filesystem::path& path,
                                                   const Vocabulary& vocab) {
    auto in = detail::open_or_throw(path);
    std::vector<LabeledPair> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (line.empty()) continue;
        const std::string where = path.filename().string() + ":" + std::to_string(lineno);
        auto f = split_char(line, '\t');
        if (f.size() != 4) throw ValidationError(where + ": expected 4 fields");
        PairLabel label;
        if (f[2] == "positive") label = PairLabel::positive;
        else if (f[2] == "negative") label = PairLabel::negative;
        else throw ValidationError(where + ": bad label \"" + std::string(f[2]) + "\"");
        PairSource source;
        if (f[3] == "distant") source = PairSource::distant;
        else if (f[3] == "pseudo") source = PairSource::pseudo;
        else throw ValidationError(where + ": bad source \"" + std::string(f[3]) + "\"");
        out.push_back(make_labeled_pair(vocab.resolve(f[0]), vocab.resolve(f[1]), label, source));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Distant supervision
// ---------------------------------------------------------------------------

struct DistantSupervision {
    std::vector<LabeledPair> pairs; // positives first, then negatives
    std::size_t positive_count = 0;
    std::size_t hard_negative_count = 0;   // drawn from the token-sharing pool
    std::size_t random_negative_count = 0; // drawn from the unrestricted pool
    std::size_t hard_shortfall = 0;        // hard draws that fell back to the random pool
};

namespace detail {

using IdPair = std::pair<TermId, TermId>;

inline IdPair ordered(TermId a, TermId b) { return a < b ? IdPair{a, b} : IdPair{b, a}; }

// Uniform sample of `count` pairs over all (a<b) term pairs, excluding
// `taken`. Rejection sampling with an exhaustive fallback for tiny pools.
inline std::vector<IdPair> sample_random_pairs(std::size_t vocab_size, std::size_t count,
                                               std::set<IdPair>& taken, rng::Engine& eng) {
    std::vector<IdPair> out;
    if (count == 0) return out;
    const std::size_t universe = vocab_size * (vocab_size - 1) / 2;
    if (taken.size() + count > universe)
        throw ValidationError("vocabulary too small: cannot draw " + std::to_string(count) +
                              " more distinct pairs");
    std::size_t attempts = 0;
    const std::size_t max_attempts = 200 * count + 1000;
    while (out.size() < count && attempts < max_attempts) {
        ++attempts;
        TermId a = static_cast<TermId>(rng::uniform_index(eng, vocab_size));
        TermId b = static_cast<TermId>(rng::uniform_index(eng, vocab_size));
        if (a == b) continue;
        IdPair p = ordered(a, b);
        if (!taken.insert(p).second) continue;
        out.push_back(p);
    }
    if (out.size() < count) {
        // Enumerate the remaining candidates and finish with a partial shuffle.
        std::vector<IdPair> rest;
        for (std::size_t a = 0; a < vocab_size; ++a)
            for (std::size_t b = a + 1; b < vocab_size; ++b) {
                IdPair p{static_cast<TermId>(a), static_cast<TermId>(b)};
                if (!taken.count(p)) rest.push_back(p);
            }
        while (out.size() < count) {
            std::size_t k = rng::uniform_index(eng, rest.size());
            std::swap(rest[k], rest.back());
            taken.insert(rest.back());
            out.push_back(rest.back());
            rest.pop_back();
        }
    }
    return out;
}

} // namespace detail

// Positive pairs: identical kb_id and cosine (in `space`) strictly above
// `cosine_threshold`. Negatives: neg_per_pos * |positives| pairs total,
// floor(half) from the token-sharing ("hard") pool and the rest drawn
// uniformly from all non-positive pairs; a hard-pool shortfall is filled from
// the random pool and reported.
inline DistantSupervision generate_distant_supervision(const Vocabulary& vocab,
                                                       const EmbeddingSpace& space,
                                                       std::size_t neg_per_pos,
                                                       std::uint64_t rng_seed,
                                                       double cosine_threshold = 0.5) {
    std::vector<TermId> kb_terms;
    for (const Term& t : vocab.terms())
        if (t.kb_id) kb_terms.push_back(t.id);
    if (kb_terms.size() < 2)
        throw ValidationError("distant supervision needs >= 2 terms with a kb id");

    // Positives: same kb id, both embedded, cosine strictly above threshold.
    std::map<std::string, std::vector<TermId>> by_kb;
    for (TermId id : kb_terms) by_kb[*vocab.term(id).kb_id].push_back(id);

    std::set<detail::IdPair> positive_set;
    for (const auto& [kb, ids] : by_kb) {
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = i + 1; j < ids.size(); ++j) {
                if (!space.has(ids[i]) || !space.has(ids[j])) continue;
                if (cosine(space.vec(ids[i]), space.vec(ids[j])) > cosine_threshold)
                    positive_set.insert(detail::ordered(ids[i], ids[j]));
            }
    }
    if (positive_set.empty())
        throw ValidationError("distant supervision produced zero positive pairs");

    const std::size_t n_neg = neg_per_pos * positive_set.size();
    const std::size_t n_hard_target = n_neg / 2; // floor(half); random pool gets the ceil

    // Hard-negative pool: non-positive pairs sharing at least one token
    // (case-insensitive whitespace tokens).
    std::unordered_map<std::string, std::vector<TermId>> token_index;
    for (const Term& t : vocab.terms())
        for (auto tok : split_ws(t.surface)) token_index[to_lower(tok)].push_back(t.id);

    std::set<detail::IdPair> hard_pool_set;
    for (const auto& [tok, ids] : token_index) {
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = i + 1; j < ids.size(); ++j) {
                auto p = detail::ordered(ids[i], ids[j]);
                if (!positive_set.count(p)) hard_pool_set.insert(p);
            }
    }
    std::vector<detail::IdPair> hard_pool(hard_pool_set.begin(), hard_pool_set.end());

    DistantSupervision out;
    out.positive_count = positive_set.size();

    std::set<detail::IdPair> taken = positive_set;

    // Hard draws: partial Fisher-Yates over the sorted pool.
    auto hard_eng = rng::make_engine(rng::derive(rng_seed, 1));
    const std::size_t n_hard = std::min(n_hard_target, hard_pool.size());
    std::vector<detail::IdPair> hard_draws;
    for (std::size_t k = 0; k < n_hard; ++k) {
        std::size_t idx = k + rng::uniform_index(hard_eng, hard_pool.size() - k);
        std::swap(hard_pool[k], hard_pool[idx]);
        hard_draws.push_back(hard_pool[k]);
        taken.insert(hard_pool[k]);
    }
    out.hard_negative_count = n_hard;
    out.hard_shortfall = n_hard_target - n_hard;

    auto rand_eng = rng::make_engine(rng::derive(rng_seed, 2));
    auto random_draws = detail::sample_random_pairs(vocab.size(), n_neg - n_hard, taken, rand_eng);
    out.random_negative_count = random_draws.size();

    for (const auto& p : positive_set)
        out.pairs.push_back(LabeledPair{p.first, p.second, PairLabel::positive, PairSource::distant});
    for (const auto& p : hard_draws)
        out.pairs.push_back(LabeledPair{p.first, p.second, PairLabel::negative, PairSource::distant});
    for (const auto& p : random_draws)
        out.pairs.push_back(LabeledPair{p.first, p.second, PairLabel::negative, PairSource::distant});
    return out;
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

struct PcaProjector {
    std::vector<double> mean;                     // length dim
    std::vector<std::vector<double>> components;  // d_pca rows, each length dim

    std::size_t input_dim() const { return mean.size(); }
    std::size_t output_dim() const { return components.size(); }

    std::vector<double> project(std::span<const double> v) const {
        std::vector<double> centered(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) centered[i] = v[i] - mean[i];
        std::vector<double> out(components.size());
        for (std::size_t r = 0; r < components.size(); ++r) out[r] = dot(components[r], centered);
        return out;
    }

    // Back-projection onto the component subspace (for reconstruction checks).
    std::vector<double> reconstruct(std::span<const double> projected) const {
        std::vector<double> out(mean);
        for (std::size_t r = 0; r < components.size(); ++r)
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] += projected[r] * components[r][i];
        return out;
    }
};

// Top-d_pca principal directions of the mean-centered vectors of `space`.
// Deterministic: dense eigendecomposition of the sample covariance, rows
// sign-fixed so the largest-magnitude entry is positive. The seed parameter
// is kept for interface stability; the exact solver does not consume it.
inline PcaProjector fit_pca(const EmbeddingSpace& space, std::size_t d_pca,
                            std::uint64_t /*rng_seed*/ = 0) {
    if (d_pca == 0) throw ValidationError("fit_pca: d_pca must be >= 1");
    if (d_pca > space.dim)
        throw ValidationError("fit_pca: d_pca " + std::to_string(d_pca) + " exceeds dim " +
                              std::to_string(space.dim));
    const auto ids = space.covered_ids();
    if (ids.size() < d_pca + 1)
        throw ValidationError("fit_pca: need at least d_pca + 1 vectors, have " +
                              std::to_string(ids.size()));

    const std::size_t n = ids.size(), d = space.dim;
    Eigen::MatrixXd X(n, d);
    for (std::size_t r = 0; r < n; ++r) {
        auto v = space.vec(ids[r]);
        for (std::size_t c = 0; c < d; ++c) X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[c];
    }
    Eigen::RowVectorXd mean = X.colwise().mean();
    X.rowwise() -= mean;
    Eigen::MatrixXd cov = (X.transpose() * X) / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("fit_pca: eigendecomposition failed");

    PcaProjector pca;
    pca.mean.assign(mean.data(), mean.data() + d);
    // Eigenvalues come back ascending; take the top d_pca in descending order.
    for (std::size_t k = 0; k < d_pca; ++k) {
        Eigen::VectorXd col = solver.eigenvectors().col(static_cast<Eigen::Index>(d - 1 - k));
        Eigen::Index imax = 0;
        col.cwiseAbs().maxCoeff(&imax);
        if (col(imax) < 0) col = -col;
        pca.components.emplace_back(col.data(), col.data() + d);
    }
    return pca;
}

inline nlohmann::json pca_to_json(const PcaProjector& pca) {
    return {{"mean", pca.mean}, {"components", pca.components}};
}

inline PcaProjector pca_from_json(const nlohmann::json& j) {
    PcaProjector pca;
    pca.mean = j.at("mean").get<std::vector<double>>();
    pca.components = j.at("components").get<std::vector<std::vector<double>>>();
    return pca;
}

} // namespace synex
