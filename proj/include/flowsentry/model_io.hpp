#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowsentry/model.hpp"
#include "flowsentry/text.hpp"

// Model files: UTF-8, LF, line-oriented text. `key = value` header lines,
// `---` section separators, one node or weight vector per line. Reals are
// written in shortest round-trip form, so load(save(m)) reconstructs every
// coefficient exactly and saving is deterministic. The header's
// schema_hash binds the model to its feature column order.
//
// Grammar (informal):
//   file     := magic LF header (section)*
//   magic    := "flowsentry model v1"
//   header   := (key " = " value LF)*
//   section  := "---" LF section-body
// Section bodies by kind:
//   dt       one section:  "tree" / "nodes = N" / N node lines
//   rf       one section per tree: "tree <t>" / "nodes = N" / node lines
//   gbt      first section: "base_score ..." and "training_loss ...";
//            then one section per (round, class) tree: "tree <r> <c>" / ...
//   svm      first section: "mean ..." and "stddev ...";
//            then one section per class: "class <c>" / "bias <b>" /
//            "weights ..."
// Node lines: "split <feature> <threshold> <left> <right>" | "leaf <value>"

namespace flowsentry {

struct model_io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct model_format_error : model_io_error {
    using model_io_error::model_io_error;
};
struct model_version_error : model_io_error {
    using model_io_error::model_io_error;
};
struct model_schema_error : model_io_error {
    using model_io_error::model_io_error;
};
struct model_truncated_error : model_io_error {
    using model_io_error::model_io_error;
};
struct model_value_error : model_io_error {
    using model_io_error::model_io_error;
};

inline constexpr const char* kModelMagic = "flowsentry model v1";

namespace detail {

inline void write_tree_body(std::ostream& out, const Tree& tree) {
    out << "nodes = " << tree.nodes.size() << "\n";
    for (const TreeNode& node : tree.nodes) {
        if (node.is_leaf()) {
            out << "leaf " << format_full(node.value) << "\n";
        } else {
            out << "split " << node.feature << " " << format_full(node.threshold) << " "
                << node.left << " " << node.right << "\n";
        }
    }
}

inline void write_vector(std::ostream& out, const std::string& name,
                         std::span<const double> values) {
    out << name;
    for (double v : values) out << " " << format_full(v);
    out << "\n";
}

class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    // Throws model_truncated_error at EOF.
    std::string next(const char* expectation) {
        std::string line;
        if (!std::getline(in_, line)) {
            throw model_truncated_error(std::string("model file truncated: expected ") +
                                        expectation);
        }
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++line_no_;
        return line;
    }

    bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }
    std::size_t line_number() const { return line_no_; }

private:
    std::istream& in_;
    std::size_t line_no_ = 0;
};

inline double parse_real(std::string_view text, const char* what) {
    const auto v = parse_double(text);
    if (!v) {
        throw model_format_error(std::string("model file: bad ") + what + " value \"" +
                                 std::string(text) + "\"");
    }
    if (!std::isfinite(*v)) {
        throw model_value_error(std::string("model file: non-finite ") + what + " value");
    }
    return *v;
}

inline long long parse_int(std::string_view text, const char* what) {
    const auto v = parse_double(text);
    if (!v || *v != std::floor(*v)) {
        throw model_format_error(std::string("model file: bad ") + what + " value \"" +
                                 std::string(text) + "\"");
    }
    return static_cast<long long>(*v);
}

inline void expect_separator(LineReader& reader) {
    const std::string line = reader.next("section separator");
    if (line != "---") {
        throw model_format_error("model file: expected \"---\" at line " +
                                 std::to_string(reader.line_number()) + ", got \"" + line + "\"");
    }
}

inline Tree read_tree_body(LineReader& reader, std::size_t n_features) {
    std::string header = reader.next("node count");
    const auto cells = split(header, '=');
    if (cells.size() != 2 || trim(cells[0]) != "nodes") {
        throw model_format_error("model file: expected \"nodes = N\", got \"" + header + "\"");
    }
    const long long count = parse_int(trim(cells[1]), "node count");
    if (count < 1) throw model_format_error("model file: tree must have at least one node");

    Tree tree;
    tree.n_features = n_features;
    tree.nodes.reserve(static_cast<std::size_t>(count));
    for (long long i = 0; i < count; ++i) {
        const std::string line = reader.next("tree node");
        const auto fields = split(line, ' ');
        TreeNode node;
        if (!fields.empty() && fields[0] == "leaf" && fields.size() == 2) {
            node.value = parse_real(fields[1], "leaf");
        } else if (!fields.empty() && fields[0] == "split" && fields.size() == 5) {
            node.feature = static_cast<std::int32_t>(parse_int(fields[1], "split feature"));
            node.threshold = parse_real(fields[2], "split threshold");
            node.left = static_cast<std::int32_t>(parse_int(fields[3], "left child"));
            node.right = static_cast<std::int32_t>(parse_int(fields[4], "right child"));
            if (node.feature < 0 || static_cast<std::size_t>(node.feature) >= n_features ||
                node.left <= 0 || node.right <= 0 || node.left >= count || node.right >= count) {
                throw model_format_error("model file: node references out of range at line " +
                                         std::to_string(reader.line_number()));
            }
        } else {
            throw model_format_error("model file: bad node line \"" + line + "\"");
        }
        tree.nodes.push_back(node);
    }
    return tree;
}

inline std::vector<double> read_vector(LineReader& reader, const std::string& name,
                                       std::optional<std::size_t> expected_size) {
    const std::string line = reader.next(name.c_str());
    const auto fields = split(line, ' ');
    if (fields.empty() || fields[0] != name) {
        throw model_format_error("model file: expected \"" + name + " ...\", got \"" + line + "\"");
    }
    std::vector<double> values;
    values.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
        if (fields[i].empty()) continue;
        values.push_back(parse_real(fields[i], name.c_str()));
    }
    if (expected_size && values.size() != *expected_size) {
        throw model_format_error("model file: \"" + name + "\" has " +
                                 std::to_string(values.size()) + " values, expected " +
                                 std::to_string(*expected_size));
    }
    return values;
}

struct Header {
    std::vector<std::pair<std::string, std::string>> entries;

    const std::string* find(const std::string& key) const {
        for (const auto& [k, v] : entries) {
            if (k == key) return &v;
        }
        return nullptr;
    }
    std::string require(const std::string& key) const {
        if (const std::string* v = find(key)) return *v;
        throw model_format_error("model file: missing header key \"" + key + "\"");
    }
    long long require_int(const std::string& key) const {
        return parse_int(require(key), key.c_str());
    }
    double require_real(const std::string& key) const {
        return parse_real(require(key), key.c_str());
    }
};

} // namespace detail

inline void save_model(const Model& model, std::ostream& out) {
    out << kModelMagic << "\n";
    out << "kind = " << model_kind_name(model.kind) << "\n";
    out << "features = " << join(model.features, ',') << "\n";
    out << "schema_hash = " << format_hex64(model.feature_schema_hash()) << "\n";
    out << "labels = " << join(model.labels, ',') << "\n";
    out << "seed = " << model.seed << "\n";

    if (const auto* dt = std::get_if<TreeModel>(&model.body)) {
        out << "max_depth = " << dt->params.max_depth << "\n";
        out << "min_samples_split = " << dt->params.min_samples_split << "\n";
        out << "min_impurity_decrease = " << format_full(dt->params.min_impurity_decrease) << "\n";
        out << "---\ntree\n";
        detail::write_tree_body(out, dt->tree);
    } else if (const auto* rf = std::get_if<ForestModel>(&model.body)) {
        out << "n_trees = " << rf->params.n_trees << "\n";
        out << "mtry = " << rf->params.mtry << "\n";
        out << "bootstrap = " << (rf->params.bootstrap ? 1 : 0) << "\n";
        out << "max_depth = " << rf->params.tree.max_depth << "\n";
        out << "min_samples_split = " << rf->params.tree.min_samples_split << "\n";
        out << "min_impurity_decrease = " << format_full(rf->params.tree.min_impurity_decrease)
            << "\n";
        for (std::size_t t = 0; t < rf->trees.size(); ++t) {
            out << "---\ntree " << t << "\n";
            detail::write_tree_body(out, rf->trees[t]);
        }
    } else if (const auto* gbt = std::get_if<BoostedModel>(&model.body)) {
        out << "n_rounds = " << gbt->params.n_rounds << "\n";
        out << "learning_rate = " << format_full(gbt->params.learning_rate) << "\n";
        out << "max_depth = " << gbt->params.max_depth << "\n";
        out << "min_samples_split = " << gbt->params.min_samples_split << "\n";
        out << "lambda = " << format_full(gbt->params.lambda) << "\n";
        out << "gamma = " << format_full(gbt->params.gamma) << "\n";
        out << "---\n";
        detail::write_vector(out, "base_score", gbt->base_score);
        detail::write_vector(out, "training_loss", gbt->training_loss);
        for (std::size_t r = 0; r < gbt->rounds.size(); ++r) {
            for (std::size_t c = 0; c < gbt->rounds[r].size(); ++c) {
                out << "---\ntree " << r << " " << c << "\n";
                detail::write_tree_body(out, gbt->rounds[r][c]);
            }
        }
    } else {
        const auto& svm = std::get<LinearSvmSet>(model.body);
        out << "epochs = " << svm.params.epochs << "\n";
        out << "svm_lambda = " << format_full(svm.params.lambda) << "\n";
        out << "---\n";
        detail::write_vector(out, "mean", svm.mean);
        detail::write_vector(out, "stddev", svm.stddev);
        for (std::size_t c = 0; c < svm.weights.rows; ++c) {
            out << "---\nclass " << c << "\n";
            out << "bias " << format_full(svm.bias[c]) << "\n";
            detail::write_vector(out, "weights", svm.weights.row(c));
        }
    }
}

inline void save_model(const Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw model_io_error("cannot open model file for writing: " + path);
    save_model(model, out);
    if (!out) throw model_io_error("write failed: " + path);
}

inline std::string save_model_string(const Model& model) {
    std::ostringstream out;
    save_model(model, out);
    return out.str();
}

inline Model load_model(std::istream& in,
                        std::optional<std::uint64_t> expected_schema_hash = std::nullopt) {
    detail::LineReader reader(in);
    const std::string magic = reader.next("magic line");
    if (magic.rfind("flowsentry model", 0) != 0) {
        throw model_format_error("not a flowsentry model file (bad magic line)");
    }
    if (magic != kModelMagic) {
        throw model_version_error("unsupported model format version: \"" + magic + "\"");
    }

    detail::Header header;
    std::string line;
    for (;;) {
        line = reader.next("header line or separator");
        if (line == "---") break;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw model_format_error("model file: bad header line \"" + line + "\"");
        }
        header.entries.emplace_back(std::string(trim(std::string_view(line).substr(0, eq))),
                                    std::string(trim(std::string_view(line).substr(eq + 1))));
    }

    Model model;
    const std::string kind = header.require("kind");
    if (kind == "dt") model.kind = ModelKind::decision_tree;
    else if (kind == "rf") model.kind = ModelKind::random_forest;
    else if (kind == "gbt") model.kind = ModelKind::boosted_trees;
    else if (kind == "svm") model.kind = ModelKind::linear_svm;
    else throw model_format_error("model file: unknown kind \"" + kind + "\"");

    const std::string feature_line = header.require("features");
    for (auto name : split(feature_line, ',')) model.features.emplace_back(trim(name));
    const std::string label_line = header.require("labels");
    for (auto name : split(label_line, ',')) model.labels.emplace_back(trim(name));
    if (model.features.empty() || model.labels.empty()) {
        throw model_format_error("model file: empty feature or label list");
    }
    const auto stored_hash = parse_u64(header.require("schema_hash"));
    if (!stored_hash) throw model_format_error("model file: bad schema_hash");
    if (*stored_hash != model.feature_schema_hash()) {
        throw model_schema_error("model file: schema_hash " + format_hex64(*stored_hash) +
                                 " does not match feature list hash " +
                                 format_hex64(model.feature_schema_hash()));
    }
    if (expected_schema_hash && *stored_hash != *expected_schema_hash) {
        throw model_schema_error("model schema_hash " + format_hex64(*stored_hash) +
                                 " does not match expected schema hash " +
                                 format_hex64(*expected_schema_hash));
    }
    const auto seed = parse_u64(header.require("seed"));
    if (!seed) throw model_format_error("model file: bad seed");
    model.seed = *seed;

    const std::size_t d = model.features.size();
    const int k = static_cast<int>(model.labels.size());

    if (model.kind == ModelKind::decision_tree) {
        TreeModel dt;
        dt.params.max_depth = static_cast<int>(header.require_int("max_depth"));
        dt.params.min_samples_split = static_cast<int>(header.require_int("min_samples_split"));
        dt.params.min_impurity_decrease = header.require_real("min_impurity_decrease");
        dt.n_classes = k;
        const std::string tree_line = reader.next("tree section");
        if (tree_line != "tree") {
            throw model_format_error("model file: expected \"tree\", got \"" + tree_line + "\"");
        }
        dt.tree = detail::read_tree_body(reader, d);
        model.body = std::move(dt);
    } else if (model.kind == ModelKind::random_forest) {
        ForestModel rf;
        rf.params.n_trees = static_cast<int>(header.require_int("n_trees"));
        rf.params.mtry = static_cast<int>(header.require_int("mtry"));
        rf.params.bootstrap = header.require_int("bootstrap") != 0;
        rf.params.tree.max_depth = static_cast<int>(header.require_int("max_depth"));
        rf.params.tree.min_samples_split =
            static_cast<int>(header.require_int("min_samples_split"));
        rf.params.tree.min_impurity_decrease = header.require_real("min_impurity_decrease");
        rf.n_classes = k;
        for (int t = 0; t < rf.params.n_trees; ++t) {
            const std::string tree_line = reader.next("tree section");
            if (tree_line != "tree " + std::to_string(t)) {
                throw model_format_error("model file: expected \"tree " + std::to_string(t) +
                                         "\", got \"" + tree_line + "\"");
            }
            rf.trees.push_back(detail::read_tree_body(reader, d));
            if (t + 1 < rf.params.n_trees) detail::expect_separator(reader);
        }
        model.body = std::move(rf);
    } else if (model.kind == ModelKind::boosted_trees) {
        BoostedModel gbt;
        gbt.params.n_rounds = static_cast<int>(header.require_int("n_rounds"));
        gbt.params.learning_rate = header.require_real("learning_rate");
        gbt.params.max_depth = static_cast<int>(header.require_int("max_depth"));
        gbt.params.min_samples_split = static_cast<int>(header.require_int("min_samples_split"));
        gbt.params.lambda = header.require_real("lambda");
        gbt.params.gamma = header.require_real("gamma");
        gbt.n_classes = k;
        gbt.base_score = detail::read_vector(reader, "base_score", static_cast<std::size_t>(k));
        gbt.training_loss = detail::read_vector(reader, "training_loss", std::nullopt);
        for (int r = 0; r < gbt.params.n_rounds; ++r) {
            std::vector<Tree> round;
            for (int c = 0; c < k; ++c) {
                detail::expect_separator(reader);
                const std::string tree_line = reader.next("tree section");
                if (tree_line != "tree " + std::to_string(r) + " " + std::to_string(c)) {
                    throw model_format_error("model file: expected \"tree " + std::to_string(r) +
                                             " " + std::to_string(c) + "\", got \"" + tree_line +
                                             "\"");
                }
                round.push_back(detail::read_tree_body(reader, d));
            }
            gbt.rounds.push_back(std::move(round));
        }
        model.body = std::move(gbt);
    } else {
        LinearSvmSet svm;
        svm.params.epochs = static_cast<int>(header.require_int("epochs"));
        svm.params.lambda = header.require_real("svm_lambda");
        svm.n_classes = k;
        svm.mean = detail::read_vector(reader, "mean", d);
        svm.stddev = detail::read_vector(reader, "stddev", d);
        svm.weights = Matrix(static_cast<std::size_t>(k), d);
        svm.bias.assign(static_cast<std::size_t>(k), 0.0);
        for (int c = 0; c < k; ++c) {
            detail::expect_separator(reader);
            const std::string class_line = reader.next("class section");
            if (class_line != "class " + std::to_string(c)) {
                throw model_format_error("model file: expected \"class " + std::to_string(c) +
                                         "\", got \"" + class_line + "\"");
            }
            const std::string bias_line = reader.next("bias line");
            const auto bias_fields = split(bias_line, ' ');
            if (bias_fields.size() != 2 || bias_fields[0] != "bias") {
                throw model_format_error("model file: bad bias line \"" + bias_line + "\"");
            }
            svm.bias[static_cast<std::size_t>(c)] = detail::parse_real(bias_fields[1], "bias");
            const auto w = detail::read_vector(reader, "weights", d);
            for (std::size_t j = 0; j < d; ++j) svm.weights.at(static_cast<std::size_t>(c), j) = w[j];
        }
        model.body = std::move(svm);
    }
    return model;
}

inline Model load_model(const std::string& path,
                        std::optional<std::uint64_t> expected_schema_hash = std::nullopt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw model_io_error("cannot open model file: " + path);
    return load_model(in, expected_schema_hash);
}

} // namespace flowsentry
