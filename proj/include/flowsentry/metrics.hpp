#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowsentry/text.hpp"

// Evaluation: K x K confusion matrix, one-vs-rest reduction to binary
// counts, accuracy/recall/precision/F1, per-label classification reports
// and one-vs-rest ROC curves with trapezoidal AUC.
//
// Zero-denominator metrics carry an explicit undefined marker instead of a
// silent 0 or 1; reports render them as "0.00*".

namespace flowsentry {

struct ConfusionMatrix {
    std::vector<std::string> labels;
    std::vector<std::uint64_t> counts; // [actual * K + predicted]

    std::size_t size() const { return labels.size(); }
    std::uint64_t at(std::size_t actual, std::size_t predicted) const {
        return counts[actual * labels.size() + predicted];
    }
    std::uint64_t& at(std::size_t actual, std::size_t predicted) {
        return counts[actual * labels.size() + predicted];
    }
    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (std::uint64_t c : counts) t += c;
        return t;
    }
    std::uint64_t trace() const {
        std::uint64_t t = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) t += at(i, i);
        return t;
    }
};

inline ConfusionMatrix confusion_matrix(std::span<const int> actual, std::span<const int> predicted,
                                        const std::vector<std::string>& labels) {
    if (actual.size() != predicted.size()) {
        throw std::invalid_argument("confusion_matrix: sequence length mismatch");
    }
    if (actual.empty()) throw std::invalid_argument("confusion_matrix: empty input");
    ConfusionMatrix cm;
    cm.labels = labels;
    cm.counts.assign(labels.size() * labels.size(), 0);
    const int k = static_cast<int>(labels.size());
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (actual[i] < 0 || actual[i] >= k || predicted[i] < 0 || predicted[i] >= k) {
            throw std::invalid_argument("confusion_matrix: label index out of vocabulary");
        }
        ++cm.at(static_cast<std::size_t>(actual[i]), static_cast<std::size_t>(predicted[i]));
    }
    return cm;
}

// True/false positives and negatives for one label against the rest.
struct BinaryCounts {
    std::uint64_t tp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + tn + fp + fn; }
};

inline BinaryCounts one_vs_rest(const ConfusionMatrix& cm, std::size_t label) {
    BinaryCounts bc;
    const std::size_t k = cm.size();
    bc.tp = cm.at(label, label);
    for (std::size_t j = 0; j < k; ++j) {
        if (j != label) bc.fn += cm.at(label, j);
    }
    for (std::size_t i = 0; i < k; ++i) {
        if (i != label) bc.fp += cm.at(i, label);
    }
    bc.tn = cm.total() - bc.tp - bc.fn - bc.fp;
    return bc;
}

struct MetricValue {
    double value = 0.0;
    bool defined = true;
};

struct MetricSuite {
    MetricValue accuracy;
    MetricValue recall;
    MetricValue precision;
    MetricValue f1;
};

inline MetricSuite metric_suite(const BinaryCounts& bc) {
    if (bc.total() == 0) throw std::invalid_argument("metric_suite: zero samples");
    const auto tp = static_cast<double>(bc.tp);
    const auto tn = static_cast<double>(bc.tn);
    const auto fp = static_cast<double>(bc.fp);
    const auto fn = static_cast<double>(bc.fn);

    MetricSuite m;
    m.accuracy = MetricValue{(tp + tn) / (tp + tn + fp + fn), true};
    m.recall = bc.tp + bc.fn == 0 ? MetricValue{0.0, false} : MetricValue{tp / (tp + fn), true};
    m.precision = bc.tp + bc.fp == 0 ? MetricValue{0.0, false} : MetricValue{tp / (tp + fp), true};
    if (!m.precision.defined || !m.recall.defined || m.precision.value + m.recall.value == 0.0) {
        m.f1 = MetricValue{0.0, false};
    } else {
        m.f1 = MetricValue{
            2.0 * m.precision.value * m.recall.value / (m.precision.value + m.recall.value), true};
    }
    return m;
}

struct ReportRow {
    std::string label;
    MetricValue precision;
    MetricValue recall;
    MetricValue f1;
    std::uint64_t support = 0;
};

struct ClassificationReport {
    std::vector<ReportRow> rows;
    double overall_accuracy = 0.0; // trace / total
    MetricValue macro_precision;
    MetricValue macro_recall;
    MetricValue macro_f1;
    std::uint64_t total = 0;
};

inline ClassificationReport classification_report(const ConfusionMatrix& cm) {
    ClassificationReport report;
    report.total = cm.total();
    if (report.total == 0) throw std::invalid_argument("classification_report: zero samples");
    report.overall_accuracy =
        static_cast<double>(cm.trace()) / static_cast<double>(report.total);

    auto macro = [](std::vector<double>& values) {
        if (values.empty()) return MetricValue{0.0, false};
        double sum = 0.0;
        for (double v : values) sum += v;
        return MetricValue{sum / static_cast<double>(values.size()), true};
    };

    std::vector<double> precisions, recalls, f1s;
    for (std::size_t l = 0; l < cm.size(); ++l) {
        const MetricSuite m = metric_suite(one_vs_rest(cm, l));
        ReportRow row;
        row.label = cm.labels[l];
        row.precision = m.precision;
        row.recall = m.recall;
        row.f1 = m.f1;
        for (std::size_t j = 0; j < cm.size(); ++j) row.support += cm.at(l, j);
        report.rows.push_back(row);
        if (m.precision.defined) precisions.push_back(m.precision.value);
        if (m.recall.defined) recalls.push_back(m.recall.value);
        if (m.f1.defined) f1s.push_back(m.f1.value);
    }
    report.macro_precision = macro(precisions);
    report.macro_recall = macro(recalls);
    report.macro_f1 = macro(f1s);
    return report;
}

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points; // from (0,0) to (1,1), both rates non-decreasing
    double auc = 0.0;
};

// One-vs-rest ROC: sweep thresholds at distinct score values (descending),
// tied scores advance in a single step. AUC by the trapezoidal rule, which
// matches the ordered-pair (Wilcoxon) statistic with ties counted half.
inline RocCurve roc_curve(std::span<const double> scores, const std::vector<bool>& positive) {
    if (scores.size() != positive.size()) {
        throw std::invalid_argument("roc_curve: size mismatch");
    }
    std::uint64_t n_pos = 0;
    for (bool p : positive) n_pos += p ? 1 : 0;
    const std::uint64_t n_neg = positive.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw std::invalid_argument("roc_curve: need at least one positive and one negative sample");
    }

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    RocCurve curve;
    curve.points.push_back({0.0, 0.0});
    std::uint64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (positive[order[j]]) ++tp;
            else ++fp;
            ++j;
        }
        curve.points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                                static_cast<double>(tp) / static_cast<double>(n_pos)});
        i = j;
    }

    double auc = 0.0;
    for (std::size_t p = 1; p < curve.points.size(); ++p) {
        const auto& prev = curve.points[p - 1];
        const auto& next = curve.points[p];
        auc += (next.fpr - prev.fpr) * (prev.tpr + next.tpr) / 2.0;
    }
    curve.auc = auc;
    return curve;
}

inline RocCurve roc_auc(std::span<const double> scores, std::span<const int> actual,
                        int positive_label) {
    std::vector<bool> positive(actual.size());
    for (std::size_t i = 0; i < actual.size(); ++i) positive[i] = actual[i] == positive_label;
    return roc_curve(scores, positive);
}

namespace detail {

inline std::string format_metric(const MetricValue& m) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", m.defined ? m.value : 0.0);
    std::string s = buf;
    if (!m.defined) s += "*";
    return s;
}

} // namespace detail

// Human-readable table: one row per label with precision / recall / F1.
inline std::string render_report_table(const ClassificationReport& report) {
    std::size_t label_width = 5;
    for (const auto& row : report.rows) label_width = std::max(label_width, row.label.size());

    std::string out;
    auto pad = [&](const std::string& s, std::size_t width) {
        out += s;
        out.append(width > s.size() ? width - s.size() : 0, ' ');
    };
    pad("Label", label_width + 2);
    out += "Precision  Recall  F1-score\n";
    bool any_undefined = false;
    for (const auto& row : report.rows) {
        pad(row.label, label_width + 2);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%9s  %6s  %8s\n", detail::format_metric(row.precision).c_str(),
                      detail::format_metric(row.recall).c_str(),
                      detail::format_metric(row.f1).c_str());
        out += buf;
        any_undefined |= !row.precision.defined || !row.recall.defined || !row.f1.defined;
    }
    pad("macro avg", label_width + 2);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%9s  %6s  %8s\n", detail::format_metric(report.macro_precision).c_str(),
                  detail::format_metric(report.macro_recall).c_str(),
                  detail::format_metric(report.macro_f1).c_str());
    out += buf;
    std::snprintf(buf, sizeof buf, "\nOverall accuracy: %.4f  (%llu samples)\n",
                  report.overall_accuracy, static_cast<unsigned long long>(report.total));
    out += buf;
    if (any_undefined) out += "* undefined (zero denominator), reported as 0\n";
    return out;
}

// Flat machine-readable key/value rendering of the same report.
inline std::string render_report_kv(const ClassificationReport& report) {
    std::string out;
    auto emit = [&out](const std::string& key, const MetricValue& m) {
        out += key + " = " + (m.defined ? format_full(m.value) : std::string("undefined")) + "\n";
    };
    out += "total = " + std::to_string(report.total) + "\n";
    out += "overall_accuracy = " + format_full(report.overall_accuracy) + "\n";
    for (const auto& row : report.rows) {
        const std::string prefix = "label." + row.label;
        out += prefix + ".support = " + std::to_string(row.support) + "\n";
        emit(prefix + ".precision", row.precision);
        emit(prefix + ".recall", row.recall);
        emit(prefix + ".f1", row.f1);
    }
    emit("macro.precision", report.macro_precision);
    emit("macro.recall", report.macro_recall);
    emit("macro.f1", report.macro_f1);
    return out;
}

inline std::string roc_csv(const RocCurve& curve) {
    std::string out = "fpr,tpr\n";
    for (const auto& p : curve.points) {
        out += format_csv_value(p.fpr) + "," + format_csv_value(p.tpr) + "\n";
    }
    return out;
}

// Minimal standalone SVG polyline rendering of one curve.
inline std::string roc_svg(const RocCurve& curve, const std::string& title) {
    constexpr int size = 400;
    constexpr int margin = 40;
    constexpr int plot = size - 2 * margin;
    auto px = [&](double fpr) { return margin + fpr * plot; };
    auto py = [&](double tpr) { return size - margin - tpr * plot; };

    std::string points;
    for (const auto& p : curve.points) {
        points += format_csv_value(px(p.fpr)) + "," + format_csv_value(py(p.tpr)) + " ";
    }
    char buf[256];
    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\">\n";
    std::snprintf(buf, sizeof buf,
                  "  <rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"white\" "
                  "stroke=\"black\"/>\n",
                  margin, margin, plot, plot);
    out += buf;
    std::snprintf(buf, sizeof buf,
                  "  <line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"grey\" "
                  "stroke-dasharray=\"4\"/>\n",
                  margin, size - margin, size - margin, margin);
    out += buf;
    out += "  <polyline fill=\"none\" stroke=\"blue\" stroke-width=\"1.5\" points=\"" + points +
           "\"/>\n";
    std::snprintf(buf, sizeof buf, "  <text x=\"%d\" y=\"20\" font-size=\"13\">%s (AUC %.4f)</text>\n",
                  margin, title.c_str(), curve.auc);
    out += buf;
    out += "  <text x=\"180\" y=\"395\" font-size=\"11\">FPR</text>\n";
    out += "  <text x=\"5\" y=\"200\" font-size=\"11\">TPR</text>\n";
    out += "</svg>\n";
    return out;
}

} // namespace flowsentry
