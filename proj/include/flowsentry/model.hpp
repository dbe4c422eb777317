#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "flowsentry/features.hpp"
#include "flowsentry/forest.hpp"
#include "flowsentry/gbt.hpp"
#include "flowsentry/svm.hpp"
#include "flowsentry/tree.hpp"

// A trained classifier of any family plus everything needed to apply it:
// label vocabulary, feature schema and the training seed. All four families
// share the predict contract (class index + one score per class).

namespace flowsentry {

enum class ModelKind { decision_tree, random_forest, boosted_trees, linear_svm };

inline const char* model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::decision_tree: return "dt";
        case ModelKind::random_forest: return "rf";
        case ModelKind::boosted_trees: return "gbt";
        case ModelKind::linear_svm: return "svm";
    }
    return "?";
}

struct TreeModel {
    TreeParams params;
    int n_classes = 0;
    Tree tree;
};

struct Model {
    ModelKind kind = ModelKind::decision_tree;
    std::vector<std::string> labels;
    std::vector<std::string> features;
    std::uint64_t seed = 0;
    std::variant<TreeModel, ForestModel, BoostedModel, LinearSvmSet> body;

    std::uint64_t feature_schema_hash() const { return schema_hash(features); }
};

struct Prediction {
    int class_index = 0;
    std::vector<double> scores; // vote fraction / probability / margin per class
};

inline Prediction predict(const Model& model, std::span<const double> x) {
    Prediction out;
    if (const auto* dt = std::get_if<TreeModel>(&model.body)) {
        out.class_index = dt->tree.predict_class(x);
        out.scores.assign(static_cast<std::size_t>(dt->n_classes), 0.0);
        out.scores[static_cast<std::size_t>(out.class_index)] = 1.0;
    } else if (const auto* rf = std::get_if<ForestModel>(&model.body)) {
        auto p = predict_forest(*rf, x);
        out.class_index = p.class_index;
        out.scores = std::move(p.scores);
    } else if (const auto* gbt = std::get_if<BoostedModel>(&model.body)) {
        auto p = predict_gbt(*gbt, x);
        out.class_index = p.class_index;
        out.scores = std::move(p.probabilities);
    } else {
        auto p = predict_svm(std::get<LinearSvmSet>(model.body), x);
        out.class_index = p.class_index;
        out.scores = std::move(p.margins);
    }
    return out;
}

} // namespace flowsentry
