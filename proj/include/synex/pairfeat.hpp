#pragma once

#include <array>
#include <cstddef>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "synex/store.hpp"
#include "synex/string_metrics.hpp"
#include "synex/text.hpp"
#include "synex/types.hpp"
#include "synex/vec.hpp"

// Term-pair features for the synonym discovery model: nine lexical features
// over surface names, cosine-based semantic features per configured embedding
// space, and the elementwise product of the two PCA-reduced embeddings.
//
// Case handling: character-level features (edit distance, Jaro-Winkler,
// characters in common) are case-sensitive; prefix / initials / token
// features compare case-insensitively.
//
// All functions here are pure over immutable inputs and safe to call from any
// number of threads.

namespace synex {

inline constexpr std::size_t kLexicalFeatureCount = 9;
inline constexpr std::size_t kSemanticPerSpace = 4; // cosine + 3 transforms
inline constexpr double kCosineClampEps = 1e-3;     // lower clamp for the 1/c transform

inline const std::array<std::string_view, kLexicalFeatureCount> kLexicalFeatureNames = {
    "is_prefix",         "is_initial",      "edit_distance",
    "jaro_winkler",      "chars_in_common", "tokens_in_common",
    "token_count_diff",  "initial_edit_distance", "longest_token_edit_distance"};

// ---------------------------------------------------------------------------
// Lexical features
// ---------------------------------------------------------------------------

namespace detail {

inline std::string longest_token_lower(std::string_view s) {
    std::string_view best;
    for (auto tok : split_ws(s))
        if (tok.size() > best.size()) best = tok; // ties keep the first occurrence
    return to_lower(best);
}

} // namespace detail

inline std::array<double, kLexicalFeatureCount> lexical_features(std::string_view s1,
                                                                 std::string_view s2) {
    const std::string l1 = to_lower(s1), l2 = to_lower(s2);

    const bool is_prefix = l1.size() <= l2.size() ? l2.compare(0, l1.size(), l1) == 0
                                                  : l1.compare(0, l2.size(), l2) == 0;

    const std::string init1 = to_lower(token_initials(s1));
    const std::string init2 = to_lower(token_initials(s2));
    const bool is_initial = (init1 == l2) || (init2 == l1);

    std::set<char> cs1(s1.begin(), s1.end()), cs2(s2.begin(), s2.end());
    std::size_t chars_common = 0;
    for (char c : cs1) chars_common += cs2.count(c);

    std::set<std::string> ts1, ts2;
    for (auto tok : split_ws(s1)) ts1.insert(to_lower(tok));
    for (auto tok : split_ws(s2)) ts2.insert(to_lower(tok));
    std::size_t tokens_common = 0;
    for (const auto& t : ts1) tokens_common += ts2.count(t);

    const auto n1 = split_ws(s1).size(), n2 = split_ws(s2).size();
    const std::size_t token_count_diff = n1 > n2 ? n1 - n2 : n2 - n1;

    return {static_cast<double>(is_prefix),
            static_cast<double>(is_initial),
            static_cast<double>(edit_distance(s1, s2)),
            jaro_winkler(s1, s2),
            static_cast<double>(chars_common),
            static_cast<double>(tokens_common),
            static_cast<double>(token_count_diff),
            static_cast<double>(edit_distance(init1, init2)),
            static_cast<double>(edit_distance(detail::longest_token_lower(s1),
                                              detail::longest_token_lower(s2)))};
}

inline std::array<double, kLexicalFeatureCount> lexical_features(const Term& t1, const Term& t2) {
    return lexical_features(t1.surface, t2.surface);
}

// ---------------------------------------------------------------------------
// Semantic features
// ---------------------------------------------------------------------------

// Which spaces feed the semantic block and which space feeds the PCA product.
struct FeatureContext {
    const Vocabulary* vocab = nullptr;
    const EmbeddingBag* bag = nullptr;
    const PcaProjector* pca = nullptr;
    std::vector<std::size_t> semantic_spaces = {0}; // indices into bag->spaces
    std::size_t pca_space = 0;

    std::size_t feature_count() const {
        return kLexicalFeatureCount + kSemanticPerSpace * semantic_spaces.size() +
               (pca ? pca->output_dim() : 0);
    }
};

namespace detail {

inline std::span<const double> require_vec(const EmbeddingSpace& space, const Vocabulary& vocab,
                                           TermId id) {
    if (!space.has(id))
        throw ValidationError("term \"" + vocab.surface(id) + "\" has no vector in space \"" +
                              space.name + "\"");
    return space.vec(id);
}

} // namespace detail

// Raw cosine followed by [1/c, sqrt(c), c^2]. The reciprocal clamps c into
// [kCosineClampEps, 1] and the square root into [0, 1]; the reported cosine
// itself is unclamped.
inline std::array<double, kSemanticPerSpace> cosine_transforms(double c) {
    const double c_recip = std::min(std::max(c, kCosineClampEps), 1.0);
    const double c_sqrt = std::min(std::max(c, 0.0), 1.0);
    return {c, 1.0 / c_recip, std::sqrt(c_sqrt), c * c};
}

inline std::vector<double> semantic_features(TermId t1, TermId t2, const FeatureContext& ctx) {
    std::vector<double> out;
    out.reserve(kSemanticPerSpace * ctx.semantic_spaces.size());
    for (std::size_t si : ctx.semantic_spaces) {
        const EmbeddingSpace& space = ctx.bag->spaces.at(si);
        const double c = cosine(detail::require_vec(space, *ctx.vocab, t1),
                                detail::require_vec(space, *ctx.vocab, t2));
        for (double v : cosine_transforms(c)) out.push_back(v);
    }
    return out;
}

inline std::vector<double> pca_product(TermId t1, TermId t2, const FeatureContext& ctx) {
    const EmbeddingSpace& space = ctx.bag->spaces.at(ctx.pca_space);
    auto p1 = ctx.pca->project(detail::require_vec(space, *ctx.vocab, t1));
    auto p2 = ctx.pca->project(detail::require_vec(space, *ctx.vocab, t2));
    std::vector<double> out(p1.size());
    for (std::size_t i = 0; i < p1.size(); ++i) out[i] = p1[i] * p2[i];
    return out;
}

// ---------------------------------------------------------------------------
// Full pair feature vector: lexical || semantic || pca_product
// ---------------------------------------------------------------------------

inline std::vector<double> pair_feature_vector(TermId t1, TermId t2, const FeatureContext& ctx) {
    std::vector<double> out;
    out.reserve(ctx.feature_count());
    const auto lex = lexical_features(ctx.vocab->surface(t1), ctx.vocab->surface(t2));
    out.insert(out.end(), lex.begin(), lex.end());
    const auto sem = semantic_features(t1, t2, ctx);
    out.insert(out.end(), sem.begin(), sem.end());
    if (ctx.pca) {
        const auto prod = pca_product(t1, t2, ctx);
        out.insert(out.end(), prod.begin(), prod.end());
    }
    return out;
}

inline std::vector<std::string> feature_names(const FeatureContext& ctx) {
    std::vector<std::string> names(kLexicalFeatureNames.begin(), kLexicalFeatureNames.end());
    for (std::size_t si : ctx.semantic_spaces) {
        const std::string& sp = ctx.bag->spaces.at(si).name;
        names.push_back("cos_" + sp);
        names.push_back("inv_cos_" + sp);
        names.push_back("sqrt_cos_" + sp);
        names.push_back("sq_cos_" + sp);
    }
    if (ctx.pca)
        for (std::size_t i = 0; i < ctx.pca->output_dim(); ++i)
            names.push_back("pca_product_" + std::to_string(i));
    return names;
}

// TSV export: `a<TAB>b<TAB>label` then one column per feature, with a header
// row in the exact order of feature_names().
inline void write_pair_features_tsv(const std::filesystem::path& path,
                                    const std::vector<LabeledPair>& pairs,
                                    const FeatureContext& ctx) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    out << "a\tb\tlabel";
    for (const auto& n : feature_names(ctx)) out << '\t' << n;
    out << '\n';
    char buf[64];
    for (const auto& p : pairs) {
        out << ctx.vocab->surface(p.a) << '\t' << ctx.vocab->surface(p.b) << '\t'
            << (p.label == PairLabel::positive ? 1 : 0);
        for (double v : pair_feature_vector(p.a, p.b, ctx)) {
            std::snprintf(buf, sizeof(buf), "\t%.17g", v);
            out << buf;
        }
        out << '\n';
    }
}

} // namespace synex
