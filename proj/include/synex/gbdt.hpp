#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "synex/rng.hpp"
#include "synex/types.hpp"

// Gradient-boosted regression trees with logistic loss, trained by
// second-order (Newton) boosting with exact greedy split search. The model is
// additive: fine-tuning appends trees fit to the residuals of the existing
// ensemble and never mutates it, so a generic model can be specialized on
// small pseudo-labeled sets cheaply.
//
// Determinism: with a fixed BoostParams::rng_seed training is bit-identical.
// Split ties resolve to the lowest feature index, then the lowest threshold.
// Subsampling inside train() draws from stream derive(seed, 0); a fine-tuning
// stage starting at T existing trees draws from derive(seed, T), so repeated
// stages never replay earlier draws.
//
// Trained models are immutable and safe to share across threads for
// prediction; training itself is single-threaded (parallelism lives one level
// up, across ensemble members and batches).

namespace synex {

// Test instrumentation: counts every model prediction made process-wide.
inline std::atomic<std::uint64_t> g_gbdt_predictions{0};

struct TreeNode {
    int feature = -1; // < 0 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes; // root at index 0

    double output(std::span<const double> x) const {
        int i = 0;
        while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
            const TreeNode& n = nodes[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }
};

struct BoostParams {
    std::size_t rounds = 100;
    double learning_rate = 0.1;
    int max_depth = 5;
    double min_split_gain = 0.1; // gamma: a split must beat this gain
    double subsample = 0.5;      // row fraction per round
    double l2_leaf_reg = 1.0;    // lambda in the -G/(H+lambda) leaf rule
    std::uint64_t rng_seed = 0;
};

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

class GbdtModel {
public:
    std::vector<RegressionTree> trees;
    double learning_rate = 0.1;
    double base_score = 0.0; // log-odds of the training positive rate
    std::size_t feature_count = 0;

    double predict_margin(std::span<const double> x) const {
        if (x.size() != feature_count)
            throw ValidationError("gbdt predict: expected " + std::to_string(feature_count) +
                                  " features, got " + std::to_string(x.size()));
        double m = base_score;
        for (const auto& t : trees) m += learning_rate * t.output(x);
        return m;
    }

    double predict(std::span<const double> x) const {
        g_gbdt_predictions.fetch_add(1, std::memory_order_relaxed);
        return sigmoid(predict_margin(x));
    }
};

namespace detail {

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
    // Instances go left when x[feature] < threshold.
};

inline double split_score(double g, double h, double lambda) { return g * g / (h + lambda); }

// Exact greedy best split over the node's instances. Candidates are midpoints
// between consecutive distinct feature values; ties keep the first candidate
// found (features ascending, thresholds ascending within a feature).
inline SplitChoice best_split(const std::vector<std::vector<double>>& X,
                              const std::vector<double>& grad, const std::vector<double>& hess,
                              const std::vector<std::size_t>& idx, double lambda) {
    const std::size_t d = X[0].size();
    double g_total = 0.0, h_total = 0.0;
    for (std::size_t i : idx) {
        g_total += grad[i];
        h_total += hess[i];
    }
    const double parent_score = split_score(g_total, h_total, lambda);

    SplitChoice best;
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(idx.size());
    for (int f = 0; f < static_cast<int>(d); ++f) {
        order.clear();
        for (std::size_t i : idx) order.emplace_back(X[i][static_cast<std::size_t>(f)], i);
        std::sort(order.begin(), order.end());

        double g_left = 0.0, h_left = 0.0;
        for (std::size_t k = 0; k + 1 < order.size(); ++k) {
            g_left += grad[order[k].second];
            h_left += hess[order[k].second];
            const double v = order[k].first, v_next = order[k + 1].first;
            if (v == v_next) continue;
            const double mid = (v + v_next) / 2.0;
            if (!(v < mid) || !(mid <= v_next)) continue; // adjacent doubles
            const double gain = 0.5 * (split_score(g_left, h_left, lambda) +
                                       split_score(g_total - g_left, h_total - h_left, lambda) -
                                       parent_score);
            if (!best.found || gain > best.gain) {
                best.found = true;
                best.feature = f;
                best.threshold = mid;
                best.gain = gain;
            }
        }
    }
    return best;
}

inline RegressionTree build_tree(const std::vector<std::vector<double>>& X,
                                 const std::vector<double>& grad, const std::vector<double>& hess,
                                 const std::vector<std::size_t>& rows, const BoostParams& params) {
    RegressionTree tree;
    struct Todo {
        int node;
        std::vector<std::size_t> idx;
        int depth;
    };
    std::vector<Todo> stack;
    tree.nodes.emplace_back();
    stack.push_back({0, rows, 0});

    while (!stack.empty()) {
        Todo todo = std::move(stack.back());
        stack.pop_back();

        double g = 0.0, h = 0.0;
        for (std::size_t i : todo.idx) {
            g += grad[i];
            h += hess[i];
        }

        SplitChoice split;
        if (todo.depth < params.max_depth && todo.idx.size() >= 2)
            split = best_split(X, grad, hess, todo.idx, params.l2_leaf_reg);

        if (!split.found || !(split.gain > params.min_split_gain)) {
            tree.nodes[static_cast<std::size_t>(todo.node)].value = -g / (h + params.l2_leaf_reg);
            continue;
        }

        std::vector<std::size_t> left, right;
        for (std::size_t i : todo.idx) {
            (X[i][static_cast<std::size_t>(split.feature)] < split.threshold ? left : right)
                .push_back(i);
        }

        TreeNode& n = tree.nodes[static_cast<std::size_t>(todo.node)];
        n.feature = split.feature;
        n.threshold = split.threshold;
        n.left = static_cast<int>(tree.nodes.size());
        n.right = n.left + 1;
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        const int l = tree.nodes[static_cast<std::size_t>(todo.node)].left;
        const int r = tree.nodes[static_cast<std::size_t>(todo.node)].right;
        stack.push_back({r, std::move(right), todo.depth + 1});
        stack.push_back({l, std::move(left), todo.depth + 1});
    }
    return tree;
}

inline void validate_training_input(const std::vector<std::vector<double>>& X,
                                    const std::vector<int>& y) {
    if (X.empty() || X.size() != y.size())
        throw ValidationError("gbdt train: need a non-empty feature matrix matching labels");
    const std::size_t d = X[0].size();
    if (d == 0) throw ValidationError("gbdt train: zero-length feature vectors");
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < X.size(); ++i) {
        if (X[i].size() != d)
            throw ValidationError("gbdt train: ragged feature matrix at row " + std::to_string(i));
        for (double v : X[i])
            if (!std::isfinite(v))
                throw ValidationError("gbdt train: non-finite feature at row " + std::to_string(i));
        if (y[i] != 0 && y[i] != 1)
            throw ValidationError("gbdt train: labels must be 0 or 1");
        (y[i] == 1 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg)
        throw ValidationError("gbdt train: need at least one example of each label");
}

// Rows used for one boosting round, ascending (canonical summation order).
inline std::vector<std::size_t> subsample_rows(std::size_t n, double fraction, rng::Engine& eng) {
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    if (fraction >= 1.0) return rows;
    const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(fraction * static_cast<double>(n)));
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng::uniform_index(eng, n - i);
        std::swap(rows[i], rows[j]);
    }
    rows.resize(k);
    std::sort(rows.begin(), rows.end());
    return rows;
}

// Appends `rounds` trees fit to the residuals of the current margins.
inline void boost_rounds(GbdtModel& model, const std::vector<std::vector<double>>& X,
                         const std::vector<int>& y, std::vector<double>& margin,
                         std::size_t rounds, const BoostParams& params, rng::Engine& eng) {
    const std::size_t n = X.size();
    std::vector<double> grad(n), hess(n);
    for (std::size_t round = 0; round < rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(margin[i]);
            grad[i] = p - static_cast<double>(y[i]);
            hess[i] = p * (1.0 - p);
        }
        const auto rows = subsample_rows(n, params.subsample, eng);
        RegressionTree tree = build_tree(X, grad, hess, rows, params);
        for (std::size_t i = 0; i < n; ++i)
            margin[i] += params.learning_rate * tree.output(X[i]);
        model.trees.push_back(std::move(tree));
    }
}

} // namespace detail

inline GbdtModel train_gbdt(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                            const BoostParams& params) {
    detail::validate_training_input(X, y);
    if (params.rounds < 1) throw ValidationError("gbdt train: rounds must be >= 1");

    GbdtModel model;
    model.learning_rate = params.learning_rate;
    model.feature_count = X[0].size();
    const double pos_rate =
        static_cast<double>(std::count(y.begin(), y.end(), 1)) / static_cast<double>(y.size());
    model.base_score = std::log(pos_rate / (1.0 - pos_rate));

    std::vector<double> margin(X.size(), model.base_score);
    auto eng = rng::make_engine(rng::derive(params.rng_seed, 0));
    detail::boost_rounds(model, X, y, margin, params.rounds, params, eng);
    return model;
}

// Returns a new model equal to `model` plus exactly `extra_trees` trees fit to
// the residuals of `model` on the given examples; `model` is untouched.
inline GbdtModel fine_tune(const GbdtModel& model, const std::vector<std::vector<double>>& X,
                           const std::vector<int>& y, std::size_t extra_trees,
                           const BoostParams& params) {
    GbdtModel tuned = model;
    if (extra_trees == 0) return tuned;
    detail::validate_training_input(X, y);

    std::vector<double> margin(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) margin[i] = model.predict_margin(X[i]);
    auto eng = rng::make_engine(rng::derive(params.rng_seed, model.trees.size()));
    detail::boost_rounds(tuned, X, y, margin, extra_trees, params, eng);
    return tuned;
}

// ---------------------------------------------------------------------------
// Model file: versioned JSON tree dump. Round-trips predictions bit-exactly
// (doubles are serialized with shortest-round-trip formatting).
//
//   {"format": "synex.gbdt", "version": 1, "learning_rate": ..,
//    "base_score": .., "feature_count": ..,
//    "trees": [[[feature, threshold, left, right, value], ...], ...]}
// ---------------------------------------------------------------------------

inline nlohmann::json gbdt_to_json(const GbdtModel& model) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : model.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : t.nodes)
            nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
        trees.push_back(std::move(nodes));
    }
    return {{"format", "synex.gbdt"},
            {"version", 1},
            {"learning_rate", model.learning_rate},
            {"base_score", model.base_score},
            {"feature_count", model.feature_count},
            {"trees", std::move(trees)}};
}

inline GbdtModel gbdt_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "synex.gbdt")
        throw ValidationError("gbdt load: not a model file");
    if (j.at("version").get<int>() != 1)
        throw ValidationError("gbdt load: unsupported version " + j.at("version").dump());
    GbdtModel model;
    model.learning_rate = j.at("learning_rate").get<double>();
    model.base_score = j.at("base_score").get<double>();
    model.feature_count = j.at("feature_count").get<std::size_t>();
    for (const auto& tj : j.at("trees")) {
        RegressionTree tree;
        for (const auto& nj : tj) {
            TreeNode n;
            n.feature = nj.at(0).get<int>();
            n.threshold = nj.at(1).get<double>();
            n.left = nj.at(2).get<int>();
            n.right = nj.at(3).get<int>();
            n.value = nj.at(4).get<double>();
            tree.nodes.push_back(n);
        }
        if (tree.nodes.empty()) throw ValidationError("gbdt load: empty tree");
        model.trees.push_back(std::move(tree));
    }
    return model;
}

inline void save_gbdt(const GbdtModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    out << gbdt_to_json(model).dump() << '\n';
}

inline GbdtModel load_gbdt(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open model file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("corrupt model file " + path.string() + ": " + e.what());
    }
    return gbdt_from_json(j);
}

} // namespace synex
