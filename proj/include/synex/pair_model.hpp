#pragma once

#include <vector>

#include "synex/gbdt.hpp"
#include "synex/pairfeat.hpp"

// Glue between the pair feature extractor and the boosted-tree synonym model.

namespace synex {

// Probability that two terms are synonyms under `model`.
inline double synonym_probability(const GbdtModel& model, TermId a, TermId b,
                                  const FeatureContext& ctx) {
    return model.predict(pair_feature_vector(a, b, ctx));
}

// Feature matrix + 0/1 labels for a labeled pair set, in input order.
inline std::pair<std::vector<std::vector<double>>, std::vector<int>> pair_training_data(
    const std::vector<LabeledPair>& pairs, const FeatureContext& ctx) {
    std::vector<std::vector<double>> X(pairs.size());
    std::vector<int> y(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        X[i] = pair_feature_vector(pairs[i].a, pairs[i].b, ctx);
        y[i] = pairs[i].label == PairLabel::positive ? 1 : 0;
    }
    return {std::move(X), std::move(y)};
}

} // namespace synex
