#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "synex/store.hpp"
#include "synex/string_metrics.hpp"
#include "synex/types.hpp"
#include "synex/vec.hpp"

// Evaluation metrics (AP@K / MAP@K for rankings, AP / AUC / F1 for scored
// pairs, the paired t-test) and the dataset difficulty measures. All pure
// functions; callers remove seed entities from rank lists and ground truth
// before scoring.

namespace synex {

struct QueryResult {
    std::string query_id;
    std::vector<TermId> ranked; // duplicate-free
    std::unordered_set<TermId> truth;
};

// Average precision over the top-K prefix, normalized by min(K, |truth|) so a
// perfect prefix scores 1 even when the class is larger than K.
inline double ap_at_k(const std::vector<TermId>& ranked, const std::unordered_set<TermId>& truth,
                      std::size_t k) {
    if (k < 1) throw ValidationError("ap_at_k: K must be >= 1");
    if (truth.empty()) throw ValidationError("ap_at_k: empty ground truth");
    const std::size_t depth = std::min(k, ranked.size());
    double hits = 0.0, sum = 0.0;
    for (std::size_t i = 0; i < depth; ++i) {
        if (truth.count(ranked[i])) {
            hits += 1.0;
            sum += hits / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(std::min(k, truth.size()));
}

inline double map_at_k(const std::vector<QueryResult>& results, std::size_t k) {
    if (results.empty()) throw ValidationError("map_at_k: need at least one query");
    double sum = 0.0;
    for (const auto& r : results) sum += ap_at_k(r.ranked, r.truth, k);
    return sum / static_cast<double>(results.size());
}

struct PairScore {
    TermId a = 0;
    TermId b = 0;
    double probability = 0.0;
    int label = 0; // gold: 1 synonym, 0 not
};

namespace evaldetail {

inline void require_both_labels(const std::vector<PairScore>& pairs, const char* who) {
    bool pos = false, neg = false;
    for (const auto& p : pairs) (p.label ? pos : neg) = true;
    if (!pos || !neg)
        throw ValidationError(std::string(who) + ": need both positive and negative pairs");
}

// Indices sorted by probability descending, ties by input order.
inline std::vector<std::size_t> by_score_desc(const std::vector<PairScore>& pairs) {
    std::vector<std::size_t> idx(pairs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return pairs[a].probability > pairs[b].probability;
    });
    return idx;
}

} // namespace evaldetail

// Area under the precision-recall steps: thresholds at each distinct score,
// AP = sum over thresholds of (R_t - R_{t-1}) * P_t.
inline double average_precision(const std::vector<PairScore>& pairs) {
    evaldetail::require_both_labels(pairs, "average_precision");
    const auto idx = evaldetail::by_score_desc(pairs);
    double n_pos = 0;
    for (const auto& p : pairs) n_pos += p.label;

    double ap = 0.0, tp = 0.0, fp = 0.0, prev_recall = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        const double score = pairs[idx[i]].probability;
        for (; i < idx.size() && pairs[idx[i]].probability == score; ++i)
            (pairs[idx[i]].label ? tp : fp) += 1.0;
        const double recall = tp / n_pos;
        const double precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

// Probability that a random positive outscores a random negative, ties
// counted half (Mann-Whitney with average ranks).
inline double auc(const std::vector<PairScore>& pairs) {
    evaldetail::require_both_labels(pairs, "auc");
    std::vector<std::size_t> idx(pairs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return pairs[a].probability < pairs[b].probability;
    });
    double rank_sum_pos = 0.0, n_pos = 0.0, n_neg = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        const double score = pairs[idx[i]].probability;
        std::size_t j = i;
        while (j < idx.size() && pairs[idx[j]].probability == score) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (pairs[idx[k]].label) {
                rank_sum_pos += avg_rank;
                n_pos += 1.0;
            } else {
                n_neg += 1.0;
            }
        }
        i = j;
    }
    const double u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
    return u / (n_pos * n_neg);
}

// F1 of the binary decision probability >= threshold.
inline double f1(const std::vector<PairScore>& pairs, double threshold = 0.5) {
    evaldetail::require_both_labels(pairs, "f1");
    double tp = 0, fp = 0, fn = 0;
    for (const auto& p : pairs) {
        const bool predicted = p.probability >= threshold;
        if (predicted && p.label)
            tp += 1;
        else if (predicted && !p.label)
            fp += 1;
        else if (!predicted && p.label)
            fn += 1;
    }
    if (tp == 0) return 0.0;
    const double precision = tp / (tp + fp);
    const double recall = tp / (tp + fn);
    return 2.0 * precision * recall / (precision + recall);
}

// ---------------------------------------------------------------------------
// Paired t-test
// ---------------------------------------------------------------------------

namespace evaldetail {

// Regularized incomplete beta I_x(a,b) by Lentz's continued fraction.
inline double betacf(double a, double b, double x) {
    const double tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 3e-16) break;
    }
    return h;
}

inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

} // namespace evaldetail

struct TTestResult {
    double t = 0.0;
    double p = 1.0; // two-tailed
};

inline TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw ValidationError("paired_t_test: need two equal-length samples of size >= 2");
    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    const double var = ss / static_cast<double>(n - 1);
    if (var <= 0.0)
        throw ValidationError("paired_t_test: zero variance of the differences (degenerate)");

    TTestResult r;
    r.t = mean / std::sqrt(var / static_cast<double>(n));
    const double nu = static_cast<double>(n - 1);
    const double x = nu / (nu + r.t * r.t);
    r.p = evaldetail::incomplete_beta(nu / 2.0, 0.5, x);
    return r;
}

// ---------------------------------------------------------------------------
// Difficulty measures
// ---------------------------------------------------------------------------

// Mean over e in C of |C \ Topk(e)| / |C|, with Topk the k most cosine-similar
// terms in the embedded vocabulary (the entity itself included, ties broken by
// term id).
inline double set_expansion_difficulty(const std::vector<TermId>& class_ids,
                                       const EmbeddingSpace& space, std::size_t k = 10000) {
    if (class_ids.empty()) throw ValidationError("set_expansion_difficulty: empty class");
    if (k < 1) throw ValidationError("set_expansion_difficulty: k must be >= 1");
    for (TermId id : class_ids)
        if (!space.has(id))
            throw ValidationError("set_expansion_difficulty: term id " + std::to_string(id) +
                                  " not embedded");
    const auto universe = space.covered_ids();
    const std::size_t depth = std::min(k, universe.size());
    const std::unordered_set<TermId> klass(class_ids.begin(), class_ids.end());

    double sum = 0.0;
    std::vector<std::pair<double, TermId>> scored(universe.size());
    for (TermId e : class_ids) {
        for (std::size_t i = 0; i < universe.size(); ++i)
            scored[i] = {cosine(space.vec(e), space.vec(universe[i])), universe[i]};
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(depth),
                          scored.end(), [](const auto& x, const auto& y) {
                              if (x.first != y.first) return x.first > y.first;
                              return x.second < y.second;
                          });
        std::size_t found = 0;
        for (std::size_t i = 0; i < depth; ++i) found += klass.count(scored[i].second);
        sum += static_cast<double>(klass.size() - found) / static_cast<double>(klass.size());
    }
    return sum / static_cast<double>(klass.size());
}

namespace evaldetail {

template <class PairFn>
double mean_over_synset_pairs(const std::vector<std::vector<TermId>>& synsets, PairFn&& fn) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& synset : synsets) {
        for (std::size_t i = 0; i < synset.size(); ++i)
            for (std::size_t j = i + 1; j < synset.size(); ++j) {
                sum += fn(synset[i], synset[j]);
                ++count;
            }
    }
    if (count == 0)
        throw ValidationError("difficulty: no synonym pairs (all synsets are singletons)");
    return sum / static_cast<double>(count);
}

} // namespace evaldetail

// Mean Jaro-Winkler distance (1 - similarity) over intra-synset pairs.
inline double lexical_difficulty(const std::vector<std::vector<TermId>>& synsets,
                                 const Vocabulary& vocab) {
    return evaldetail::mean_over_synset_pairs(synsets, [&](TermId a, TermId b) {
        return 1.0 - jaro_winkler(vocab.surface(a), vocab.surface(b));
    });
}

// Mean cosine distance (1 - cosine) over intra-synset pairs.
inline double semantic_difficulty(const std::vector<std::vector<TermId>>& synsets,
                                  const EmbeddingSpace& space) {
    return evaldetail::mean_over_synset_pairs(synsets, [&](TermId a, TermId b) {
        if (!space.has(a) || !space.has(b))
            throw ValidationError("semantic_difficulty: missing vector in space \"" + space.name +
                                  "\"");
        return 1.0 - cosine(space.vec(a), space.vec(b));
    });
}

} // namespace synex
