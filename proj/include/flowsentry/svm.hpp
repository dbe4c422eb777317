#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "flowsentry/matrix.hpp"
#include "flowsentry/parallel.hpp"
#include "flowsentry/rng.hpp"

// One-vs-rest linear SVM trained by Pegasos-style subgradient descent on
// the regularized hinge loss, over standardized features. Standardization
// stats live inside the model so inference needs no side channel; constant
// features (stddev 0) map to 0. The reported weights for each class are the
// average of the iterates over the final epoch, with the classic projection
// onto the ball of radius 1/sqrt(lambda) keeping early iterates bounded.

namespace flowsentry {

struct SvmParams {
    double lambda = 1e-4; // L2 regularization strength
    int epochs = 20;
};

struct LinearSvmSet {
    SvmParams params;
    int n_classes = 0;
    std::vector<double> mean;   // per feature
    std::vector<double> stddev; // per feature, population form; >= 0
    Matrix weights;             // n_classes x n_features
    std::vector<double> bias;   // per class
};

namespace detail {
inline constexpr std::uint64_t kSvmTag = 0x51A4uLL;
} // namespace detail

inline void standardize_into(const LinearSvmSet& model, std::span<const double> x,
                             std::span<double> out) {
    for (std::size_t j = 0; j < x.size(); ++j) {
        out[j] = model.stddev[j] > 0.0 ? (x[j] - model.mean[j]) / model.stddev[j] : 0.0;
    }
}

// Regularized objective lambda/2 ||w||^2 + mean hinge, on standardized rows.
inline double svm_objective(std::span<const double> w, double b, const Matrix& xs,
                            const std::vector<int>& y, int positive_class, double lambda) {
    double norm_sq = 0.0;
    for (double v : w) norm_sq += v * v;
    double hinge_sum = 0.0;
    for (std::size_t i = 0; i < xs.rows; ++i) {
        const auto row = xs.row(i);
        double margin = b;
        for (std::size_t j = 0; j < row.size(); ++j) margin += w[j] * row[j];
        const double label = y[i] == positive_class ? 1.0 : -1.0;
        hinge_sum += std::max(0.0, 1.0 - label * margin);
    }
    return 0.5 * lambda * norm_sq + hinge_sum / static_cast<double>(xs.rows);
}

inline LinearSvmSet train_svm(const Matrix& x, const std::vector<int>& y, int n_classes,
                              const SvmParams& params, std::uint64_t seed, unsigned jobs = 1) {
    if (x.rows < 2) throw std::invalid_argument("train_svm: need at least 2 rows");
    if (std::set<int>(y.begin(), y.end()).size() < 2) {
        throw std::invalid_argument("train_svm: need at least 2 classes present");
    }
    if (params.epochs < 1 || params.lambda <= 0.0) {
        throw std::invalid_argument("train_svm: invalid hyperparameters");
    }

    const std::size_t n = x.rows;
    const std::size_t d = x.cols;
    const auto k = static_cast<std::size_t>(n_classes);

    LinearSvmSet model;
    model.params = params;
    model.n_classes = n_classes;
    model.mean.assign(d, 0.0);
    model.stddev.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) model.mean[j] += x.at(i, j);
    }
    for (double& m : model.mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double dev = x.at(i, j) - model.mean[j];
            model.stddev[j] += dev * dev;
        }
    }
    for (double& s : model.stddev) s = std::sqrt(s / static_cast<double>(n));

    Matrix xs(n, d);
    for (std::size_t i = 0; i < n; ++i) standardize_into(model, x.row(i), xs.row(i));

    model.weights = Matrix(k, d);
    model.bias.assign(k, 0.0);

    const double lambda = params.lambda;
    const double radius = 1.0 / std::sqrt(lambda);

    parallel_for(k, jobs, [&](std::size_t c) {
        std::vector<double> w(d, 0.0);
        double b = 0.0;
        std::vector<double> w_sum(d, 0.0);
        double b_sum = 0.0;
        std::size_t avg_count = 0;
        std::uint64_t t = 0;

        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;

        for (int epoch = 0; epoch < params.epochs; ++epoch) {
            Rng rng(derive_seed(seed, {detail::kSvmTag, c, static_cast<std::uint64_t>(epoch)}));
            shuffle(order, rng);
            const bool averaging = epoch == params.epochs - 1;
            for (std::size_t i : order) {
                ++t;
                const double eta = 1.0 / (lambda * static_cast<double>(t));
                const auto row = xs.row(i);
                double margin = b;
                for (std::size_t j = 0; j < d; ++j) margin += w[j] * row[j];
                const double label = static_cast<std::size_t>(y[i]) == c ? 1.0 : -1.0;

                const double scale = 1.0 - eta * lambda; // = 1 - 1/t
                for (double& wj : w) wj *= scale;
                if (label * margin < 1.0) {
                    for (std::size_t j = 0; j < d; ++j) w[j] += eta * label * row[j];
                    b += eta * label;
                }

                double norm_sq = 0.0;
                for (double wj : w) norm_sq += wj * wj;
                if (norm_sq > radius * radius) {
                    const double shrink = radius / std::sqrt(norm_sq);
                    for (double& wj : w) wj *= shrink;
                }

                if (averaging) {
                    for (std::size_t j = 0; j < d; ++j) w_sum[j] += w[j];
                    b_sum += b;
                    ++avg_count;
                }
            }
        }

        const auto out = model.weights.row(c);
        for (std::size_t j = 0; j < d; ++j) out[j] = w_sum[j] / static_cast<double>(avg_count);
        model.bias[c] = b_sum / static_cast<double>(avg_count);
    });
    return model;
}

struct SvmPrediction {
    int class_index = 0;
    std::vector<double> margins;
};

inline SvmPrediction predict_svm(const LinearSvmSet& model, std::span<const double> x) {
    if (x.size() != model.mean.size()) {
        throw std::invalid_argument("predict_svm: feature dimensionality mismatch");
    }
    std::vector<double> standardized(x.size());
    standardize_into(model, x, standardized);

    SvmPrediction out;
    out.margins.assign(static_cast<std::size_t>(model.n_classes), 0.0);
    for (std::size_t c = 0; c < out.margins.size(); ++c) {
        double margin = model.bias[c];
        const auto w = model.weights.row(c);
        for (std::size_t j = 0; j < standardized.size(); ++j) margin += w[j] * standardized[j];
        out.margins[c] = margin;
    }
    int best = 0;
    for (int c = 1; c < model.n_classes; ++c) {
        if (out.margins[static_cast<std::size_t>(c)] > out.margins[static_cast<std::size_t>(best)]) {
            best = c;
        }
    }
    out.class_index = best;
    return out;
}

} // namespace flowsentry
