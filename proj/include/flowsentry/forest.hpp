#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "flowsentry/matrix.hpp"
#include "flowsentry/parallel.hpp"
#include "flowsentry/rng.hpp"
#include "flowsentry/tree.hpp"

// Random forest: bootstrap resampling per tree plus per-node feature
// subsampling, majority vote at prediction time. Every random draw comes
// from a stream derived from (seed, tree index) or (seed, tree index, node
// counter), so trees are independent of training order and a parallel run
// produces the same model as a serial one, byte for byte.

namespace flowsentry {

struct ForestParams {
    int n_trees = 100;
    int mtry = 0; // candidate features per node; 0 = floor(sqrt(n_features))
    bool bootstrap = true;
    TreeParams tree;
};

struct ForestModel {
    ForestParams params;
    int n_classes = 0;
    std::vector<Tree> trees;
};

namespace detail {
inline constexpr std::uint64_t kForestBootstrapTag = 0xB0075uLL;
inline constexpr std::uint64_t kForestFeatureTag = 0xF3A7uLL;
} // namespace detail

inline int resolve_mtry(int mtry, std::size_t n_features) {
    if (mtry == 0) mtry = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n_features))));
    if (mtry < 1 || static_cast<std::size_t>(mtry) > n_features) {
        throw std::invalid_argument("forest: mtry out of range");
    }
    return mtry;
}

inline ForestModel train_forest(const Matrix& x, const std::vector<int>& y, int n_classes,
                                const ForestParams& params, std::uint64_t seed, unsigned jobs = 1) {
    if (x.rows == 0) throw std::invalid_argument("train_forest: empty dataset");
    if (params.n_trees < 1) throw std::invalid_argument("train_forest: n_trees must be >= 1");
    const int mtry = resolve_mtry(params.mtry, x.cols);

    ForestModel model;
    model.params = params;
    model.params.mtry = mtry;
    model.n_classes = n_classes;
    model.trees.resize(static_cast<std::size_t>(params.n_trees));

    const std::size_t n = x.rows;
    const std::size_t d = x.cols;
    parallel_for(model.trees.size(), jobs, [&](std::size_t t) {
        std::vector<std::size_t> rows;
        rows.reserve(n);
        if (params.bootstrap) {
            Rng rng(derive_seed(seed, {detail::kForestBootstrapTag, t}));
            for (std::size_t i = 0; i < n; ++i) rows.push_back(rng.below(n));
        } else {
            rows = detail::all_rows(n);
        }
        FeatureSampler sampler = [seed, t, mtry, d](std::size_t node_counter) {
            Rng rng(derive_seed(seed, {detail::kForestFeatureTag, t, node_counter}));
            const auto picks = sample_without_replacement(d, static_cast<std::size_t>(mtry), rng);
            std::vector<int> features(picks.size());
            for (std::size_t i = 0; i < picks.size(); ++i) features[i] = static_cast<int>(picks[i]);
            return features;
        };
        model.trees[t] = train_tree(x, y, n_classes, params.tree, std::move(rows), std::move(sampler));
    });
    return model;
}

struct ForestPrediction {
    int class_index = 0;
    std::vector<double> scores; // vote fractions, sum to 1
};

inline ForestPrediction predict_forest(const ForestModel& model, std::span<const double> x) {
    if (model.trees.empty()) throw std::invalid_argument("predict_forest: empty model");
    ForestPrediction out;
    out.scores.assign(static_cast<std::size_t>(model.n_classes), 0.0);
    for (const Tree& tree : model.trees) {
        out.scores[static_cast<std::size_t>(tree.predict_class(x))] += 1.0;
    }
    // ties resolve to the lowest class index
    int best = 0;
    for (int c = 1; c < model.n_classes; ++c) {
        if (out.scores[static_cast<std::size_t>(c)] > out.scores[static_cast<std::size_t>(best)]) {
            best = c;
        }
    }
    const double n_trees = static_cast<double>(model.trees.size());
    for (double& s : out.scores) s /= n_trees;
    out.class_index = best;
    return out;
}

} // namespace flowsentry
