// flowsentry: network-flow DDoS detection toolkit.
//
// Pipeline: extract (pcap -> flow features) -> prepare (clean / balance /
// split) -> train (dt | rf | gbt | svm) -> evaluate (report + ROC) ->
// predict (streaming). All randomness is seeded and every run is
// reproducible bit-for-bit given the same inputs and seeds.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowsentry/dataset.hpp"
#include "flowsentry/features.hpp"
#include "flowsentry/flow.hpp"
#include "flowsentry/log.hpp"
#include "flowsentry/manifest.hpp"
#include "flowsentry/metrics.hpp"
#include "flowsentry/model.hpp"
#include "flowsentry/model_io.hpp"
#include "flowsentry/parallel.hpp"
#include "flowsentry/pcap.hpp"
#include "flowsentry/version.hpp"

namespace fs = flowsentry;
namespace stdfs = std::filesystem;

namespace {

struct ExtractOptions {
    std::string pcap_path;
    std::string out_path;
    double idle_timeout_s = 120.0;
    double activity_timeout_s = 1.0;
    std::string label;
};

void run_extract(const ExtractOptions& opt) {
    fs::RunManifest manifest("extract");
    manifest.input(opt.pcap_path);
    manifest.param("out", opt.out_path);
    manifest.param("idle_timeout_s", opt.idle_timeout_s);
    manifest.param("activity_timeout_s", opt.activity_timeout_s);
    if (!opt.label.empty()) manifest.param("label", opt.label);

    const auto idle_us = static_cast<std::int64_t>(opt.idle_timeout_s * 1e6);
    const auto activity_us = static_cast<std::int64_t>(opt.activity_timeout_s * 1e6);
    if (idle_us <= 0 || activity_us <= 0) {
        throw std::invalid_argument("extract: timeouts must be positive");
    }

    const fs::PcapResult capture = fs::parse_pcap_file(opt.pcap_path);

    std::ofstream out(opt.out_path, std::ios::binary);
    if (!out) throw std::runtime_error("extract: cannot open output " + opt.out_path);
    out << fs::feature_csv_header(!opt.label.empty());

    fs::FlowTable table;
    std::uint64_t flows = 0;
    auto emit = [&](const std::vector<fs::FlowRecord>& finished) {
        for (const auto& rec : finished) {
            out << fs::feature_csv_row(rec, fs::finalize_features(rec), opt.label);
            ++flows;
        }
    };

    // Expiry sweeps run at >= 1 s capture-time granularity; the idle
    // timeout itself is far coarser, so behaviour matches per-packet
    // expiry while keeping extraction linear.
    std::int64_t last_sweep_us = std::numeric_limits<std::int64_t>::min();
    for (const fs::PacketEvent& event : capture.events) {
        if (event.timestamp_us - last_sweep_us >= 1000000) {
            emit(table.expire(event.timestamp_us, idle_us));
            last_sweep_us = event.timestamp_us;
        }
        table.ingest(event, activity_us);
    }
    emit(table.flush());
    out.flush();
    if (!out) throw std::runtime_error("extract: write failed for " + opt.out_path);

    manifest.counter("packets_decoded", capture.events.size());
    manifest.counter("skipped_non_ipv4", capture.skipped.non_ipv4);
    manifest.counter("skipped_non_tcp_udp", capture.skipped.non_tcp_udp);
    manifest.counter("skipped_fragmented", capture.skipped.fragmented);
    manifest.counter("skipped_malformed", capture.skipped.malformed);
    manifest.counter("truncated_capture", capture.truncated ? 1 : 0);
    manifest.counter("flows_written", flows);
    manifest.output(opt.out_path);
    manifest.write(opt.out_path + ".manifest");
    fs::log_info("extract: " + std::to_string(flows) + " flows from " +
                 std::to_string(capture.events.size()) + " packets (" +
                 std::to_string(capture.skipped.total()) + " skipped)");
}

struct PrepareOptions {
    std::vector<std::string> inputs;
    std::string out_dir;
    std::uint64_t per_class = 0;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
};

void run_prepare(const PrepareOptions& opt) {
    fs::RunManifest manifest("prepare");
    for (const auto& path : opt.inputs) manifest.input(path);
    manifest.param("out", opt.out_dir);
    manifest.param("per_class", opt.per_class);
    manifest.param("seed", opt.seed);
    manifest.param("train_fraction", opt.train_fraction);

    fs::LoadStats stats;
    const fs::LabeledDataset raw = fs::load_csv(opt.inputs, &stats);

    fs::BalanceReport balance_report;
    const fs::LabeledDataset balanced =
        fs::balance(raw, opt.per_class, opt.seed, &balance_report);
    const auto [train, test] = fs::split(balanced, opt.train_fraction, opt.seed);

    stdfs::create_directories(opt.out_dir);
    const std::string train_path = (stdfs::path(opt.out_dir) / "train.csv").string();
    const std::string test_path = (stdfs::path(opt.out_dir) / "test.csv").string();
    fs::write_dataset_csv(train, train_path);
    fs::write_dataset_csv(test, test_path);

    manifest.counter("rows_read", stats.rows_read);
    manifest.counter("rows_kept", stats.rows_kept);
    manifest.counter("dropped_non_finite", stats.dropped_non_finite);
    manifest.counter("dropped_unparseable", stats.dropped_unparseable);
    manifest.counter("dropped_excluded_label", stats.dropped_excluded_label);
    manifest.counter("rows_selected", balanced.size());
    manifest.counter("rows_train", train.size());
    manifest.counter("rows_test", test.size());
    for (std::size_t c = 0; c < raw.label_names.size(); ++c) {
        manifest.counter("class." + raw.label_names[c] + ".available",
                         balance_report.available_per_class[c]);
        manifest.counter("class." + raw.label_names[c] + ".selected",
                         balance_report.selected_per_class[c]);
    }
    manifest.output(train_path);
    manifest.output(test_path);
    manifest.write((stdfs::path(opt.out_dir) / "manifest.txt").string());
    fs::log_info("prepare: " + std::to_string(train.size()) + " train / " +
                 std::to_string(test.size()) + " test rows");
}

struct TrainOptions {
    std::string algo;
    std::string train_path;
    std::string model_path;
    std::uint64_t seed = 0;
    unsigned jobs = 0; // 0 = hardware concurrency
    // tree family
    int max_depth = -1; // -1 = per-algo default
    int min_samples_split = 2;
    double min_impurity_decrease = 0.0;
    // forest
    int n_trees = 100;
    int mtry = 0; // 0 = floor(sqrt(d))
    bool no_bootstrap = false;
    // boosting
    int n_rounds = 100;
    double learning_rate = 0.1;
    double lambda = 1.0;
    double gamma = 0.0;
    // svm
    int epochs = 20;
    double svm_lambda = 1e-4;
};

void run_train(const TrainOptions& opt) {
    fs::RunManifest manifest("train");
    manifest.input(opt.train_path);
    manifest.param("algo", opt.algo);
    manifest.param("model", opt.model_path);
    manifest.param("seed", opt.seed);

    fs::LoadStats stats;
    const fs::LabeledDataset ds = fs::load_csv({opt.train_path}, &stats);
    const unsigned jobs = opt.jobs == 0 ? fs::default_jobs() : opt.jobs;
    manifest.param("jobs", static_cast<std::uint64_t>(jobs));

    fs::Model model;
    model.labels = ds.label_names;
    model.features = ds.feature_names;
    model.seed = opt.seed;

    if (opt.algo == "dt") {
        fs::TreeModel dt;
        dt.params.max_depth = opt.max_depth < 0 ? 20 : opt.max_depth;
        dt.params.min_samples_split = opt.min_samples_split;
        dt.params.min_impurity_decrease = opt.min_impurity_decrease;
        dt.n_classes = ds.n_classes();
        manifest.param("max_depth", static_cast<std::uint64_t>(dt.params.max_depth));
        dt.tree = fs::train_tree(ds.x, ds.y, ds.n_classes(), dt.params);
        model.kind = fs::ModelKind::decision_tree;
        model.body = std::move(dt);
    } else if (opt.algo == "rf") {
        fs::ForestParams params;
        params.n_trees = opt.n_trees;
        params.mtry = opt.mtry;
        params.bootstrap = !opt.no_bootstrap;
        params.tree.max_depth = opt.max_depth < 0 ? 20 : opt.max_depth;
        params.tree.min_samples_split = opt.min_samples_split;
        params.tree.min_impurity_decrease = opt.min_impurity_decrease;
        manifest.param("n_trees", static_cast<std::uint64_t>(params.n_trees));
        manifest.param("max_depth", static_cast<std::uint64_t>(params.tree.max_depth));
        model.kind = fs::ModelKind::random_forest;
        model.body = fs::train_forest(ds.x, ds.y, ds.n_classes(), params, opt.seed, jobs);
    } else if (opt.algo == "gbt") {
        fs::GbtParams params;
        params.n_rounds = opt.n_rounds;
        params.learning_rate = opt.learning_rate;
        params.max_depth = opt.max_depth < 0 ? 6 : opt.max_depth;
        params.min_samples_split = opt.min_samples_split;
        params.lambda = opt.lambda;
        params.gamma = opt.gamma;
        manifest.param("n_rounds", static_cast<std::uint64_t>(params.n_rounds));
        manifest.param("learning_rate", params.learning_rate);
        manifest.param("max_depth", static_cast<std::uint64_t>(params.max_depth));
        model.kind = fs::ModelKind::boosted_trees;
        model.body = fs::train_gbt(ds.x, ds.y, ds.n_classes(), params, opt.seed, jobs);
    } else if (opt.algo == "svm") {
        fs::SvmParams params;
        params.epochs = opt.epochs;
        params.lambda = opt.svm_lambda;
        manifest.param("epochs", static_cast<std::uint64_t>(params.epochs));
        manifest.param("svm_lambda", params.lambda);
        model.kind = fs::ModelKind::linear_svm;
        model.body = fs::train_svm(ds.x, ds.y, ds.n_classes(), params, opt.seed, jobs);
    } else {
        throw CLI::ValidationError("--algo", "unknown algorithm \"" + opt.algo + "\"");
    }

    fs::save_model(model, opt.model_path);
    manifest.counter("rows_train", ds.size());
    manifest.output(opt.model_path);
    manifest.write(opt.model_path + ".manifest");
    fs::log_info("train: wrote " + opt.model_path);
}

struct EvaluateOptions {
    std::string model_path;
    std::string test_path;
    std::string report_path;
    std::string roc_dir;
    bool roc_svg = false;
};

void run_evaluate(const EvaluateOptions& opt) {
    fs::RunManifest manifest("evaluate");
    const fs::Model model = fs::load_model(opt.model_path);
    manifest.input(opt.model_path);
    manifest.input(opt.test_path);
    manifest.param("report", opt.report_path);
    manifest.param("roc_dir", opt.roc_dir);

    const fs::LabeledDataset ds = fs::load_csv({opt.test_path});
    if (model.features != ds.feature_names) {
        throw fs::model_schema_error(
            "model schema_hash " + fs::format_hex64(model.feature_schema_hash()) +
            " does not match dataset schema hash " + fs::format_hex64(fs::schema_hash(ds.feature_names)));
    }
    if (model.labels != ds.label_names) {
        throw fs::model_schema_error("model label vocabulary does not match dataset vocabulary");
    }

    const std::size_t n = ds.size();
    const auto k = static_cast<std::size_t>(ds.n_classes());
    std::vector<int> predicted(n);
    fs::Matrix scores(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        const fs::Prediction p = fs::predict(model, ds.x.row(i));
        predicted[i] = p.class_index;
        std::copy(p.scores.begin(), p.scores.end(), scores.row(i).begin());
    }

    const fs::ConfusionMatrix cm = fs::confusion_matrix(ds.y, predicted, ds.label_names);
    const fs::ClassificationReport report = fs::classification_report(cm);

    std::ofstream report_out(opt.report_path, std::ios::binary);
    if (!report_out) throw std::runtime_error("evaluate: cannot write " + opt.report_path);
    report_out << fs::render_report_table(report);

    // One-vs-rest ROC per label that has both positives and negatives.
    stdfs::create_directories(opt.roc_dir);
    std::string kv = fs::render_report_kv(report);
    std::vector<double> aucs;
    std::vector<double> label_scores(n);
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t positives = 0;
        for (std::size_t i = 0; i < n; ++i) {
            label_scores[i] = scores.at(i, c);
            positives += static_cast<std::size_t>(ds.y[i] == static_cast<int>(c));
        }
        if (positives == 0 || positives == n) {
            kv += "auc." + ds.label_names[c] + " = undefined\n";
            continue;
        }
        const fs::RocCurve curve = fs::roc_auc(label_scores, ds.y, static_cast<int>(c));
        const std::string base = (stdfs::path(opt.roc_dir) / ("roc_" + ds.label_names[c])).string();
        std::ofstream csv(base + ".csv", std::ios::binary);
        csv << fs::roc_csv(curve);
        if (opt.roc_svg) {
            std::ofstream svg(base + ".svg", std::ios::binary);
            svg << fs::roc_svg(curve, ds.label_names[c]);
        }
        kv += "auc." + ds.label_names[c] + " = " + fs::format_full(curve.auc) + "\n";
        aucs.push_back(curve.auc);
    }
    if (!aucs.empty()) {
        double sum = 0.0;
        for (double a : aucs) sum += a;
        kv += "auc.macro = " + fs::format_full(sum / static_cast<double>(aucs.size())) + "\n";
    }
    std::ofstream kv_out(opt.report_path + ".kv", std::ios::binary);
    if (!kv_out) throw std::runtime_error("evaluate: cannot write " + opt.report_path + ".kv");
    kv_out << kv;

    manifest.counter("rows_test", n);
    manifest.output(opt.report_path);
    manifest.write(opt.report_path + ".manifest");
    std::cout << fs::render_report_table(report);
}

struct PredictOptions {
    std::string model_path;
    std::string in_path;
    std::string out_path;
};

// Streams row by row: bounded memory regardless of input size, usable
// behind a pipe ("-" means stdin/stdout).
void run_predict(const PredictOptions& opt) {
    const fs::Model model = fs::load_model(opt.model_path);

    std::ifstream file_in;
    std::istream* in = &std::cin;
    if (opt.in_path != "-") {
        file_in.open(opt.in_path);
        if (!file_in) throw std::runtime_error("predict: cannot open " + opt.in_path);
        in = &file_in;
    }
    std::ofstream file_out;
    std::ostream* out = &std::cout;
    if (opt.out_path != "-") {
        file_out.open(opt.out_path, std::ios::binary);
        if (!file_out) throw std::runtime_error("predict: cannot open " + opt.out_path);
        out = &file_out;
    }

    const std::string source = opt.in_path == "-" ? "<stdin>" : opt.in_path;
    fs::CsvFeatureReader reader(*in, source, /*require_label=*/false);

    std::string header = "predicted_label";
    for (const auto& label : model.labels) header += ",score_" + label;
    *out << header << "\n";

    fs::FeatureVector row;
    std::uint64_t rows = 0;
    for (;;) {
        const fs::RowStatus status = reader.next(row, nullptr);
        if (status == fs::RowStatus::eof) break;
        if (status != fs::RowStatus::ok) {
            throw fs::csv_error(source + ":" + std::to_string(reader.line_number() + 1) +
                                ": unusable feature row (non-finite or unparseable value)");
        }
        const fs::Prediction p = fs::predict(model, row);
        std::string line = model.labels[static_cast<std::size_t>(p.class_index)];
        for (double s : p.scores) line += "," + fs::format_csv_value(s);
        *out << line << "\n";
        ++rows;
    }
    out->flush();
    if (opt.out_path != "-") {
        fs::RunManifest manifest("predict");
        manifest.input(opt.model_path);
        if (opt.in_path != "-") manifest.input(opt.in_path);
        manifest.counter("rows_predicted", rows);
        manifest.output(opt.out_path);
        manifest.write(opt.out_path + ".manifest");
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowsentry: network-flow DDoS detection toolkit"};
    app.set_version_flag("--version", fs::kVersion);
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from a key=value file ([subcommand] sections); flags win");

    ExtractOptions extract_opt;
    auto* extract = app.add_subcommand("extract", "Extract flow features from a pcap capture");
    extract->add_option("--pcap", extract_opt.pcap_path, "Input pcap file")->required();
    extract->add_option("--out", extract_opt.out_path, "Output feature CSV")->required();
    extract->add_option("--idle-timeout-s", extract_opt.idle_timeout_s,
                        "Flow idle expiry in seconds")->capture_default_str();
    extract->add_option("--activity-timeout-s", extract_opt.activity_timeout_s,
                        "Subflow gap in seconds")->capture_default_str();
    extract->add_option("--label", extract_opt.label,
                        "Stamp every flow with this label (adds a label column)");
    extract->callback([&] { run_extract(extract_opt); });

    PrepareOptions prepare_opt;
    auto* prepare = app.add_subcommand("prepare", "Clean, balance and split labeled CSVs");
    prepare->add_option("--in", prepare_opt.inputs, "Input CSV files")->required()->expected(-1);
    prepare->add_option("--out", prepare_opt.out_dir, "Output directory")->required();
    prepare->add_option("--per-class", prepare_opt.per_class, "Rows to sample per class")
        ->required()
        ->check(CLI::PositiveNumber);
    prepare->add_option("--seed", prepare_opt.seed, "Sampling seed")->required();
    prepare->add_option("--train-fraction", prepare_opt.train_fraction, "Train split fraction")
        ->capture_default_str()
        ->check(CLI::Range(1e-9, 1.0 - 1e-9));
    prepare->callback([&] { run_prepare(prepare_opt); });

    TrainOptions train_opt;
    auto* train = app.add_subcommand("train", "Train a classifier on a prepared CSV");
    train->add_option("--algo", train_opt.algo, "dt | rf | gbt | svm")
        ->required()
        ->check(CLI::IsMember({"dt", "rf", "gbt", "svm"}));
    train->add_option("--train", train_opt.train_path, "Training CSV")->required();
    train->add_option("--model", train_opt.model_path, "Output model path")->required();
    train->add_option("--seed", train_opt.seed, "Training seed")->required();
    train->add_option("--jobs", train_opt.jobs, "Worker thread cap (0 = all cores)");
    train->add_option("--max-depth", train_opt.max_depth, "Tree depth cap (default 20, gbt 6)");
    train->add_option("--min-samples-split", train_opt.min_samples_split,
                      "Minimum node size to split")->capture_default_str();
    train->add_option("--min-impurity-decrease", train_opt.min_impurity_decrease,
                      "Minimum impurity decrease to split")->capture_default_str();
    train->add_option("--n-trees", train_opt.n_trees, "rf: ensemble size")->capture_default_str();
    train->add_option("--mtry", train_opt.mtry, "rf: features per node (0 = sqrt)");
    train->add_flag("--no-bootstrap", train_opt.no_bootstrap, "rf: train each tree on the full sample");
    train->add_option("--n-rounds", train_opt.n_rounds, "gbt: boosting rounds")->capture_default_str();
    train->add_option("--learning-rate", train_opt.learning_rate, "gbt: shrinkage")
        ->capture_default_str();
    train->add_option("--lambda", train_opt.lambda, "gbt: L2 on leaf values")->capture_default_str();
    train->add_option("--gamma", train_opt.gamma, "gbt: minimum split gain")->capture_default_str();
    train->add_option("--epochs", train_opt.epochs, "svm: training epochs")->capture_default_str();
    train->add_option("--svm-lambda", train_opt.svm_lambda, "svm: regularization strength")
        ->capture_default_str();
    train->callback([&] { run_train(train_opt); });

    EvaluateOptions eval_opt;
    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a model on a labeled CSV");
    evaluate->add_option("--model", eval_opt.model_path, "Model file")->required();
    evaluate->add_option("--test", eval_opt.test_path, "Test CSV")->required();
    evaluate->add_option("--report", eval_opt.report_path, "Report output path")->required();
    evaluate->add_option("--roc-dir", eval_opt.roc_dir, "Directory for per-label ROC CSVs")
        ->required();
    evaluate->add_flag("--roc-svg", eval_opt.roc_svg, "Also render ROC curves as SVG");
    evaluate->callback([&] { run_evaluate(eval_opt); });

    PredictOptions predict_opt;
    auto* predict = app.add_subcommand("predict", "Predict labels for feature rows (streaming)");
    predict->add_option("--model", predict_opt.model_path, "Model file")->required();
    predict->add_option("--in", predict_opt.in_path, "Input CSV or - for stdin")->required();
    predict->add_option("--out", predict_opt.out_path, "Output CSV or - for stdout")->required();
    predict->callback([&] { run_predict(predict_opt); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1; // usage error
    } catch (const std::exception& e) {
        fs::log_error(e.what());
        return 2; // data / format error
    }
    return 0;
}
