#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "flowsentry/matrix.hpp"
#include "flowsentry/parallel.hpp"
#include "flowsentry/tree.hpp"

// Gradient-boosted trees with a multi-class softmax objective and
// second-order (gradient + hessian) splits. Each round fits one regression
// tree per class against the current softmax probabilities:
//   g_ic = p_ic - [y_i = c],   h_ic = p_ic (1 - p_ic)
// and raw scores advance by learning_rate * tree_c(x). Training is
// deterministic: there is no subsampling, so the seed only rides along in
// the model header for provenance.

namespace flowsentry {

struct GbtParams {
    int n_rounds = 100;
    double learning_rate = 0.1; // in (0, 1]
    int max_depth = 6;
    int min_samples_split = 2;
    double lambda = 1.0; // L2 on leaf values
    double gamma = 0.0;  // minimum split gain
};

struct BoostedModel {
    GbtParams params;
    int n_classes = 0;
    std::vector<double> base_score;          // initial raw score per class
    std::vector<std::vector<Tree>> rounds;   // [round][class]
    std::vector<double> training_loss;       // mean log-loss after each round
};

inline void softmax_inplace(std::span<double> scores) {
    double max_score = scores[0];
    for (double s : scores) max_score = std::max(max_score, s);
    double sum = 0.0;
    for (double& s : scores) {
        s = std::exp(s - max_score);
        sum += s;
    }
    for (double& s : scores) s /= sum;
}

// Mean multi-class log-loss of raw scores F (N x K) against labels.
inline double multiclass_log_loss(const Matrix& f, const std::vector<int>& y) {
    double total = 0.0;
    std::vector<double> probs(f.cols);
    for (std::size_t i = 0; i < f.rows; ++i) {
        const auto row = f.row(i);
        std::copy(row.begin(), row.end(), probs.begin());
        softmax_inplace(probs);
        total -= std::log(std::max(probs[static_cast<std::size_t>(y[i])], 1e-300));
    }
    return total / static_cast<double>(f.rows);
}

inline BoostedModel train_gbt(const Matrix& x, const std::vector<int>& y, int n_classes,
                              const GbtParams& params, std::uint64_t seed = 0, unsigned jobs = 1) {
    (void)seed;
    if (x.rows == 0) throw std::invalid_argument("train_gbt: empty dataset");
    if (std::set<int>(y.begin(), y.end()).size() < 2) {
        throw std::invalid_argument("train_gbt: need at least 2 classes present");
    }
    if (!(params.learning_rate > 0.0 && params.learning_rate <= 1.0)) {
        throw std::invalid_argument("train_gbt: learning_rate must be in (0, 1]");
    }

    const std::size_t n = x.rows;
    const auto k = static_cast<std::size_t>(n_classes);

    BoostedModel model;
    model.params = params;
    model.n_classes = n_classes;
    model.base_score.assign(k, 0.0);

    Matrix scores(n, k); // raw scores F, zero-initialized
    Matrix probs(n, k);

    std::vector<std::vector<double>> grad(k, std::vector<double>(n));
    std::vector<std::vector<double>> hess(k, std::vector<double>(n));

    for (int round = 0; round < params.n_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            auto p = probs.row(i);
            const auto f = scores.row(i);
            std::copy(f.begin(), f.end(), p.begin());
            softmax_inplace(p);
        }
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t i = 0; i < n; ++i) {
                const double p = probs.at(i, c);
                grad[c][i] = p - (static_cast<std::size_t>(y[i]) == c ? 1.0 : 0.0);
                hess[c][i] = p * (1.0 - p);
            }
        }

        std::vector<Tree> round_trees(k);
        parallel_for(k, jobs, [&](std::size_t c) {
            round_trees[c] = train_gh_tree(x, grad[c], hess[c], params.lambda, params.gamma,
                                           params.max_depth, params.min_samples_split);
        });

        for (std::size_t i = 0; i < n; ++i) {
            const auto row = x.row(i);
            for (std::size_t c = 0; c < k; ++c) {
                scores.at(i, c) += params.learning_rate * round_trees[c].predict_value(row);
            }
        }
        model.rounds.push_back(std::move(round_trees));
        model.training_loss.push_back(multiclass_log_loss(scores, y));
    }
    return model;
}

struct GbtPrediction {
    int class_index = 0;
    std::vector<double> probabilities;
};

inline std::vector<double> gbt_raw_scores(const BoostedModel& model, std::span<const double> x) {
    std::vector<double> scores = model.base_score;
    for (const auto& round : model.rounds) {
        for (std::size_t c = 0; c < scores.size(); ++c) {
            scores[c] += model.params.learning_rate * round[c].predict_value(x);
        }
    }
    return scores;
}

inline GbtPrediction predict_gbt(const BoostedModel& model, std::span<const double> x) {
    GbtPrediction out;
    out.probabilities = gbt_raw_scores(model, x);
    softmax_inplace(out.probabilities);
    int best = 0;
    for (int c = 1; c < model.n_classes; ++c) {
        if (out.probabilities[static_cast<std::size_t>(c)] >
            out.probabilities[static_cast<std::size_t>(best)]) {
            best = c;
        }
    }
    out.class_index = best;
    return out;
}

} // namespace flowsentry
