#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "flowsentry/model_io.hpp"

#include "testutil.hpp"

using namespace flowsentry;

namespace {

testutil::Synthetic training_data() {
    return testutil::make_blobs(30, {{0.0, 1.0, 3.0}, {4.0, 0.0, -2.0}, {1.0, 5.0, 1.0}}, 1.0, 1,
                                0.05, 404);
}

Model make_model(ModelKind kind) {
    const auto data = training_data();
    Model model;
    model.kind = kind;
    model.labels = testutil::generic_label_names(3);
    model.features = testutil::generic_feature_names(data.x.cols);
    model.seed = 99;
    switch (kind) {
        case ModelKind::decision_tree: {
            TreeModel dt;
            dt.n_classes = 3;
            dt.tree = train_tree(data.x, data.y, 3, dt.params);
            model.body = std::move(dt);
            break;
        }
        case ModelKind::random_forest: {
            ForestParams params;
            params.n_trees = 10;
            model.body = train_forest(data.x, data.y, 3, params, model.seed);
            break;
        }
        case ModelKind::boosted_trees: {
            GbtParams params;
            params.n_rounds = 6;
            model.body = train_gbt(data.x, data.y, 3, params, model.seed);
            break;
        }
        case ModelKind::linear_svm: {
            model.body = train_svm(data.x, data.y, 3, SvmParams{}, model.seed);
            break;
        }
    }
    return model;
}

} // namespace

TEST_CASE("round trip preserves predictions exactly for every model kind") {
    for (ModelKind kind : {ModelKind::decision_tree, ModelKind::random_forest,
                           ModelKind::boosted_trees, ModelKind::linear_svm}) {
        const Model original = make_model(kind);
        const std::string bytes = save_model_string(original);

        std::istringstream in(bytes);
        const Model restored = load_model(in);
        CHECK(restored.kind == original.kind);
        CHECK(restored.labels == original.labels);
        CHECK(restored.features == original.features);
        CHECK(restored.seed == original.seed);

        Rng rng(31337);
        for (int probe = 0; probe < 500; ++probe) {
            std::vector<double> x(original.features.size());
            for (double& v : x) v = rng.real01() * 12.0 - 4.0;
            const Prediction a = predict(original, x);
            const Prediction b = predict(restored, x);
            CHECK(a.class_index == b.class_index);
            CHECK(a.scores == b.scores); // exact, reals are round-trip safe
        }

        // saving is deterministic and survives a load/save cycle
        CHECK(save_model_string(original) == bytes);
        CHECK(save_model_string(restored) == bytes);
    }
}

TEST_CASE("single-leaf tree serializes to exactly one node record") {
    Matrix x(3, 1);
    const std::vector<int> y = {1, 1, 1};
    Model model;
    model.kind = ModelKind::decision_tree;
    model.labels = testutil::generic_label_names(2);
    model.features = testutil::generic_feature_names(1);
    TreeModel dt;
    dt.n_classes = 2;
    dt.tree = train_tree(x, y, 2, dt.params);
    model.body = std::move(dt);

    const std::string bytes = save_model_string(model);
    CHECK(bytes.find("nodes = 1\n") != std::string::npos);
    CHECK(bytes.find("leaf 1\n") != std::string::npos);
    CHECK(bytes.find("\nsplit ") == std::string::npos); // no internal node lines
}

TEST_CASE("forest file carries one tree section per tree") {
    const Model model = make_model(ModelKind::random_forest);
    const std::string bytes = save_model_string(model);
    CHECK(bytes.find("n_trees = 10\n") != std::string::npos);
    std::size_t sections = 0;
    for (std::size_t pos = bytes.find("\ntree "); pos != std::string::npos;
         pos = bytes.find("\ntree ", pos + 1)) {
        ++sections;
    }
    CHECK(sections == 10);
}

TEST_CASE("corrupted magic line is a format error with no partial model") {
    std::istringstream in("not a model\nkind = dt\n");
    CHECK_THROWS_AS(load_model(in), model_format_error);
}

TEST_CASE("future format versions are rejected as version errors") {
    std::istringstream in("flowsentry model v2\nkind = dt\n---\n");
    CHECK_THROWS_AS(load_model(in), model_version_error);
}

TEST_CASE("truncated files raise a truncation error") {
    const std::string bytes = save_model_string(make_model(ModelKind::decision_tree));
    // cut on a line boundary: a clean EOF in the middle of the node list
    const std::size_t cut_at = bytes.rfind('\n', bytes.size() * 2 / 3);
    std::istringstream in(bytes.substr(0, cut_at + 1));
    CHECK_THROWS_AS(load_model(in), model_truncated_error);
}

TEST_CASE("non-finite values in the body are value errors") {
    std::string bytes = save_model_string(make_model(ModelKind::linear_svm));
    const auto pos = bytes.find("bias ");
    REQUIRE(pos != std::string::npos);
    const auto eol = bytes.find('\n', pos);
    bytes.replace(pos, eol - pos, "bias inf");
    std::istringstream in(bytes);
    CHECK_THROWS_AS(load_model(in), model_value_error);
}

TEST_CASE("schema hash mismatches are schema errors naming both hashes") {
    const Model model = make_model(ModelKind::decision_tree);
    std::string bytes = save_model_string(model);

    SECTION("tampered feature list no longer matches the stored hash") {
        const auto pos = bytes.find("features = f0");
        bytes.replace(pos, 13, "features = fX");
        std::istringstream in(bytes);
        try {
            load_model(in);
            FAIL("expected model_schema_error");
        } catch (const model_schema_error& e) {
            const std::string what = e.what();
            CHECK(what.find("0x") != std::string::npos);
            CHECK(what.find("does not match") != std::string::npos);
        }
    }
    SECTION("caller-supplied expected hash is enforced") {
        std::istringstream in(bytes);
        CHECK_THROWS_AS(load_model(in, 0xdeadbeefULL), model_schema_error);
        std::istringstream in2(bytes);
        CHECK_NOTHROW(load_model(in2, model.feature_schema_hash()));
    }
}

TEST_CASE("unknown model kind is a format error") {
    std::string bytes = save_model_string(make_model(ModelKind::decision_tree));
    const auto pos = bytes.find("kind = dt");
    bytes.replace(pos, 9, "kind = xx");
    std::istringstream in(bytes);
    CHECK_THROWS_AS(load_model(in), model_format_error);
}

TEST_CASE("missing file errors carry the path") {
    try {
        load_model(std::string("/nonexistent/path/model.txt"));
        FAIL("expected model_io_error");
    } catch (const model_io_error& e) {
        CHECK(std::string(e.what()).find("/nonexistent/path/model.txt") != std::string::npos);
    }
}
