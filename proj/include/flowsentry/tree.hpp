#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "flowsentry/matrix.hpp"

// CART-style decision trees: greedy recursive partitioning over exhaustive
// (feature, midpoint-threshold) candidates. Samples with x[feature] <=
// threshold go left. Candidate thresholds are midpoints between consecutive
// distinct sorted values; ties between equally good splits resolve to the
// lowest feature index, then the lowest threshold. Training is fully
// deterministic.
//
// Two criteria share the builder:
//   - Gini impurity decrease with majority-class leaves (classification);
//   - second-order gain on per-sample (gradient, hessian) pairs with
//     -G/(H+lambda) leaves, the form boosting needs. Plain variance-
//     reduction regression with mean-target leaves is the unit-hessian,
//     lambda = 0 special case of the same criterion (identical split
//     ordering and tie behaviour).

namespace flowsentry {

struct TreeParams {
    int max_depth = 20;
    int min_samples_split = 2;
    // A split is accepted when its impurity decrease is >= this. The
    // default admits zero-decrease splits of impure nodes, which greedy
    // induction needs to get through XOR-like patterns where no single
    // axis split improves Gini on its own.
    double min_impurity_decrease = 0.0;
};

struct TreeNode {
    std::int32_t feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0; // class index (classification) or leaf value (regression)

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes; // nodes[0] is the root, creation (pre-)order
    std::size_t n_features = 0;

    bool empty() const { return nodes.empty(); }

    const TreeNode& route(std::span<const double> x) const {
        if (x.size() != n_features) {
            throw std::invalid_argument("tree predict: expected " + std::to_string(n_features) +
                                        " features, got " + std::to_string(x.size()));
        }
        std::size_t i = 0;
        while (!nodes[i].is_leaf()) {
            const TreeNode& node = nodes[i];
            i = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold
                                             ? node.left
                                             : node.right);
        }
        return nodes[i];
    }

    int predict_class(std::span<const double> x) const {
        return static_cast<int>(route(x).value);
    }
    double predict_value(std::span<const double> x) const { return route(x).value; }

    int depth() const {
        if (nodes.empty()) return 0;
        std::vector<std::pair<std::size_t, int>> stack{{0, 0}};
        int deepest = 0;
        while (!stack.empty()) {
            auto [i, d] = stack.back();
            stack.pop_back();
            deepest = std::max(deepest, d);
            if (!nodes[i].is_leaf()) {
                stack.push_back({static_cast<std::size_t>(nodes[i].left), d + 1});
                stack.push_back({static_cast<std::size_t>(nodes[i].right), d + 1});
            }
        }
        return deepest;
    }
};

// Per-node candidate feature restriction (used for random forests). Called
// with the node's creation counter; empty result means "all features".
using FeatureSampler = std::function<std::vector<int>(std::size_t node_counter)>;

namespace detail {

struct CandidateSplit {
    int feature = -1;
    double threshold = 0.0;
    double score = -std::numeric_limits<double>::infinity();

    bool valid() const { return feature >= 0; }
};

class GiniCriterion {
public:
    GiniCriterion(const Matrix& x, const std::vector<int>& y, int n_classes,
                  double min_impurity_decrease)
        : x_(x), y_(y), n_classes_(n_classes), min_decrease_(min_impurity_decrease) {}

    double leaf_value(std::span<const std::size_t> rows) const {
        return static_cast<double>(majority(rows));
    }

    bool is_pure(std::span<const std::size_t> rows) const {
        const int first = y_[rows.front()];
        for (std::size_t r : rows) {
            if (y_[r] != first) return false;
        }
        return true;
    }

    CandidateSplit best_split(std::span<const std::size_t> rows,
                              const std::vector<int>& features,
                              std::vector<std::pair<double, int>>& scratch) const {
        const std::size_t n = rows.size();
        std::vector<std::size_t> total_counts(static_cast<std::size_t>(n_classes_), 0);
        for (std::size_t r : rows) total_counts[static_cast<std::size_t>(y_[r])]++;
        const double parent = gini(total_counts, n);

        CandidateSplit best;
        std::vector<std::size_t> left_counts(static_cast<std::size_t>(n_classes_));
        for (int f : features) {
            scratch.clear();
            for (std::size_t r : rows) {
                scratch.emplace_back(x_.at(r, static_cast<std::size_t>(f)), y_[r]);
            }
            std::sort(scratch.begin(), scratch.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });

            std::fill(left_counts.begin(), left_counts.end(), 0);
            std::vector<std::size_t> right_counts = total_counts;
            for (std::size_t i = 1; i < n; ++i) {
                const auto cls = static_cast<std::size_t>(scratch[i - 1].second);
                left_counts[cls]++;
                right_counts[cls]--;
                const double a = scratch[i - 1].first;
                const double b = scratch[i].first;
                if (!(a < b)) continue;
                const double threshold = midpoint(a, b);
                const double decrease =
                    parent -
                    (static_cast<double>(i) / static_cast<double>(n)) * gini(left_counts, i) -
                    (static_cast<double>(n - i) / static_cast<double>(n)) *
                        gini(right_counts, n - i);
                if (decrease >= min_decrease_ && decrease > best.score) {
                    best = CandidateSplit{f, threshold, decrease};
                }
            }
        }
        return best;
    }

    static double gini(const std::vector<std::size_t>& counts, std::size_t n) {
        double sum_sq = 0.0;
        for (std::size_t c : counts) {
            const double p = static_cast<double>(c) / static_cast<double>(n);
            sum_sq += p * p;
        }
        return 1.0 - sum_sq;
    }

    static double midpoint(double a, double b) {
        const double m = a + (b - a) / 2.0;
        // Adjacent doubles can round the midpoint up to b, which would
        // desynchronize the threshold from the prefix counts; a itself
        // partitions identically under the <= rule.
        return m < b ? m : a;
    }

private:
    int majority(std::span<const std::size_t> rows) const {
        std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes_), 0);
        for (std::size_t r : rows) counts[static_cast<std::size_t>(y_[r])]++;
        int best = 0;
        for (int c = 1; c < n_classes_; ++c) {
            if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)]) {
                best = c;
            }
        }
        return best;
    }

    const Matrix& x_;
    const std::vector<int>& y_;
    int n_classes_;
    double min_decrease_;
};

// Second-order criterion on (gradient, hessian) pairs:
//   gain = 1/2 [ GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda) ] - gamma
//   leaf = -G/(H+lambda)
class GradHessCriterion {
public:
    GradHessCriterion(const Matrix& x, const std::vector<double>& grad,
                      const std::vector<double>& hess, double lambda, double gamma)
        : x_(x), grad_(grad), hess_(hess), lambda_(lambda), gamma_(gamma) {}

    double leaf_value(std::span<const std::size_t> rows) const {
        double g = 0.0, h = 0.0;
        for (std::size_t r : rows) {
            g += grad_[r];
            h += hess_[r];
        }
        return -g / (h + lambda_);
    }

    bool is_pure(std::span<const std::size_t>) const { return false; }

    CandidateSplit best_split(std::span<const std::size_t> rows, const std::vector<int>& features,
                              std::vector<std::pair<double, std::size_t>>& scratch) const {
        const std::size_t n = rows.size();
        double total_g = 0.0, total_h = 0.0;
        for (std::size_t r : rows) {
            total_g += grad_[r];
            total_h += hess_[r];
        }
        const double parent_score = total_g * total_g / (total_h + lambda_);

        CandidateSplit best;
        for (int f : features) {
            scratch.clear();
            for (std::size_t r : rows) {
                scratch.emplace_back(x_.at(r, static_cast<std::size_t>(f)), r);
            }
            std::sort(scratch.begin(), scratch.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });

            double gl = 0.0, hl = 0.0;
            for (std::size_t i = 1; i < n; ++i) {
                gl += grad_[scratch[i - 1].second];
                hl += hess_[scratch[i - 1].second];
                const double a = scratch[i - 1].first;
                const double b = scratch[i].first;
                if (!(a < b)) continue;
                const double gr = total_g - gl;
                const double hr = total_h - hl;
                const double gain = 0.5 * (gl * gl / (hl + lambda_) + gr * gr / (hr + lambda_) -
                                           parent_score) -
                                    gamma_;
                if (gain > 0.0 && gain > best.score) {
                    best = CandidateSplit{f, GiniCriterion::midpoint(a, b), gain};
                }
            }
        }
        return best;
    }

private:
    const Matrix& x_;
    const std::vector<double>& grad_;
    const std::vector<double>& hess_;
    double lambda_;
    double gamma_;
};

template <typename Criterion, typename Scratch>
class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, const Criterion& criterion, int max_depth, int min_samples_split,
                FeatureSampler sampler)
        : x_(x),
          criterion_(criterion),
          max_depth_(max_depth),
          min_samples_split_(min_samples_split),
          sampler_(std::move(sampler)) {
        all_features_.resize(x.cols);
        for (std::size_t f = 0; f < x.cols; ++f) all_features_[f] = static_cast<int>(f);
    }

    Tree build(std::vector<std::size_t> rows) {
        rows_ = std::move(rows);
        tree_.n_features = x_.cols;
        build_node(0, rows_.size(), 0);
        return std::move(tree_);
    }

private:
    std::int32_t build_node(std::size_t begin, std::size_t end, int depth) {
        const auto index = static_cast<std::int32_t>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        const std::size_t node_counter = static_cast<std::size_t>(index);

        const std::span<const std::size_t> rows(rows_.data() + begin, end - begin);
        const bool can_split = depth < max_depth_ &&
                               rows.size() >= static_cast<std::size_t>(min_samples_split_) &&
                               !criterion_.is_pure(rows);

        detail::CandidateSplit split;
        if (can_split) {
            const std::vector<int>& features =
                sampler_ ? sampled_features(node_counter) : all_features_;
            split = criterion_.best_split(rows, features, scratch_);
        }

        if (!split.valid()) {
            tree_.nodes[static_cast<std::size_t>(index)].value = criterion_.leaf_value(rows);
            return index;
        }

        const auto mid = std::stable_partition(
            rows_.begin() + static_cast<std::ptrdiff_t>(begin),
            rows_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t r) {
                return x_.at(r, static_cast<std::size_t>(split.feature)) <= split.threshold;
            });
        const std::size_t mid_index = static_cast<std::size_t>(mid - rows_.begin());

        tree_.nodes[static_cast<std::size_t>(index)].feature = split.feature;
        tree_.nodes[static_cast<std::size_t>(index)].threshold = split.threshold;
        const std::int32_t left = build_node(begin, mid_index, depth + 1);
        const std::int32_t right = build_node(mid_index, end, depth + 1);
        tree_.nodes[static_cast<std::size_t>(index)].left = left;
        tree_.nodes[static_cast<std::size_t>(index)].right = right;
        return index;
    }

    std::vector<int>& sampled_features(std::size_t node_counter) {
        sampled_ = sampler_(node_counter);
        if (sampled_.empty()) return all_features_;
        std::sort(sampled_.begin(), sampled_.end());
        return sampled_;
    }

    const Matrix& x_;
    const Criterion& criterion_;
    int max_depth_;
    int min_samples_split_;
    FeatureSampler sampler_;
    Tree tree_;
    std::vector<std::size_t> rows_;
    std::vector<int> all_features_;
    std::vector<int> sampled_;
    Scratch scratch_;
};

inline std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    return rows;
}

} // namespace detail

// Trains a classification tree on the given rows (all rows when empty).
inline Tree train_tree(const Matrix& x, const std::vector<int>& y, int n_classes,
                       const TreeParams& params = {},
                       std::vector<std::size_t> rows = {},
                       FeatureSampler sampler = nullptr) {
    if (x.rows == 0) throw std::invalid_argument("train_tree: empty dataset");
    if (y.size() != x.rows) throw std::invalid_argument("train_tree: feature/label size mismatch");
    if (params.max_depth < 1) throw std::invalid_argument("train_tree: max_depth must be >= 1");
    if (params.min_samples_split < 2) {
        throw std::invalid_argument("train_tree: min_samples_split must be >= 2");
    }
    if (rows.empty()) rows = detail::all_rows(x.rows);
    detail::GiniCriterion criterion(x, y, n_classes, params.min_impurity_decrease);
    detail::TreeBuilder<detail::GiniCriterion, std::vector<std::pair<double, int>>> builder(
        x, criterion, params.max_depth, params.min_samples_split, std::move(sampler));
    return builder.build(std::move(rows));
}

// Trains a regression tree on per-sample (gradient, hessian) pairs.
inline Tree train_gh_tree(const Matrix& x, const std::vector<double>& grad,
                          const std::vector<double>& hess, double lambda, double gamma,
                          int max_depth, int min_samples_split = 2) {
    if (x.rows == 0) throw std::invalid_argument("train_gh_tree: empty dataset");
    detail::GradHessCriterion criterion(x, grad, hess, lambda, gamma);
    detail::TreeBuilder<detail::GradHessCriterion, std::vector<std::pair<double, std::size_t>>>
        builder(x, criterion, max_depth, min_samples_split, nullptr);
    return builder.build(detail::all_rows(x.rows));
}

// Variance-reduction regression with mean-target leaves: the unit-hessian,
// lambda = 0 case of the second-order criterion.
inline Tree train_regression_tree(const Matrix& x, const std::vector<double>& targets,
                                  const TreeParams& params = {}) {
    std::vector<double> grad(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) grad[i] = -targets[i];
    std::vector<double> hess(targets.size(), 1.0);
    return train_gh_tree(x, grad, hess, 0.0, params.min_impurity_decrease, params.max_depth,
                         params.min_samples_split);
}

} // namespace flowsentry
