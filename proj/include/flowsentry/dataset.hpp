#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowsentry/features.hpp"
#include "flowsentry/labels.hpp"
#include "flowsentry/log.hpp"
#include "flowsentry/matrix.hpp"
#include "flowsentry/rng.hpp"
#include "flowsentry/text.hpp"

// Dataset ingestion and preparation: CSV loading (CICDDoS2019 or canonical
// column names), row cleaning with per-reason drop counters, class
// balancing and stratified train/test splitting.

namespace flowsentry {

struct csv_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kSchemaVersion = "flowsentry-18-v1";

struct LabeledDataset {
    Matrix x; // N x 18 in canonical schema order
    std::vector<int> y;
    std::vector<std::string> feature_names;
    std::vector<std::string> label_names;
    std::vector<std::string> provenance;
    std::string schema_version = kSchemaVersion;

    std::size_t size() const { return x.rows; }
    int n_classes() const { return static_cast<int>(label_names.size()); }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(label_names.size(), 0);
        for (int label : y) counts[static_cast<std::size_t>(label)]++;
        return counts;
    }
};

struct LoadStats {
    std::uint64_t rows_read = 0;
    std::uint64_t rows_kept = 0;
    std::uint64_t dropped_non_finite = 0;
    std::uint64_t dropped_unparseable = 0;
    std::uint64_t dropped_excluded_label = 0;
};

// Column resolution for one CSV header. Either every canonical name or
// every CICDDoS2019 name must be present (after trimming); Timestamp and
// Flow ID columns, like all unrecognized columns, are simply not mapped.
struct CsvColumnMap {
    std::array<int, kFeatureCount> feature_cols{};
    int label_col = -1;
    bool cic_names = false;
};

inline CsvColumnMap resolve_columns(const std::vector<std::string_view>& header_cells,
                                    bool require_label, const std::string& source) {
    std::vector<std::string> cells;
    cells.reserve(header_cells.size());
    for (auto c : header_cells) cells.emplace_back(trim(c));

    auto find_col = [&cells](const std::string& name) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (cells[i] == name) return static_cast<int>(i);
        }
        return -1;
    };

    auto try_map = [&](const std::vector<std::string>& names, CsvColumnMap& map,
                       std::string& missing) {
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            const int col = find_col(names[f]);
            if (col < 0) {
                missing = names[f];
                return false;
            }
            map.feature_cols[f] = col;
        }
        return true;
    };

    CsvColumnMap map;
    std::string missing_canonical;
    std::string missing_cic;
    if (try_map(feature_names(), map, missing_canonical)) {
        map.cic_names = false;
    } else {
        CsvColumnMap cic_map;
        if (try_map(cicddos_feature_names(), cic_map, missing_cic)) {
            map = cic_map;
            map.cic_names = true;
        } else {
            throw csv_error(source + ": missing required column \"" + missing_cic +
                            "\" (and no canonical schema: missing \"" + missing_canonical + "\")");
        }
    }

    map.label_col = find_col(map.cic_names ? "Label" : "label");
    if (map.label_col < 0 && map.cic_names) map.label_col = find_col("label");
    if (map.label_col < 0 && !map.cic_names) map.label_col = find_col("Label");
    if (require_label && map.label_col < 0) {
        throw csv_error(source + ": missing required column \"" +
                        std::string(map.cic_names ? "Label" : "label") + "\"");
    }
    return map;
}

enum class RowStatus { ok, dropped_non_finite, dropped_unparseable, dropped_excluded_label, eof };

// Streaming row reader over an already-opened CSV. Used directly by the
// predict subcommand so that memory stays bounded, and by load_csv for
// whole-file ingestion.
class CsvFeatureReader {
public:
    CsvFeatureReader(std::istream& in, const std::string& source, bool require_label)
        : in_(in), source_(source) {
        std::string header;
        if (!std::getline(in_, header)) throw csv_error(source_ + ": empty file (no header row)");
        columns_ = resolve_columns(split(std::string_view(header), ','), require_label, source_);
        max_col_ = columns_.label_col;
        for (int c : columns_.feature_cols) max_col_ = std::max(max_col_, c);
    }

    const CsvColumnMap& columns() const { return columns_; }
    std::uint64_t line_number() const { return line_no_; }

    // Reads the next data row. label_out may be null when the caller does
    // not need labels (unlabeled prediction input). Unknown label strings
    // other than the excluded one are an error, not a drop.
    RowStatus next(FeatureVector& features, int* label_out) {
        std::string line;
        for (;;) {
            if (!std::getline(in_, line)) return RowStatus::eof;
            ++line_no_;
            std::string_view view = line;
            if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
            if (trim(view).empty()) continue;

            const auto cells = split(view, ',');
            if (static_cast<int>(cells.size()) <= max_col_) return RowStatus::dropped_unparseable;

            if (label_out != nullptr && columns_.label_col >= 0) {
                const auto label_text = trim(cells[static_cast<std::size_t>(columns_.label_col)]);
                if (label_text == kExcludedLabel) return RowStatus::dropped_excluded_label;
                const auto idx = label_index(label_text);
                if (!idx) {
                    throw csv_error(source_ + ":" + std::to_string(line_no_ + 1) +
                                    ": unknown label \"" + std::string(label_text) + "\"");
                }
                *label_out = *idx;
            }

            for (std::size_t f = 0; f < kFeatureCount; ++f) {
                const auto cell = cells[static_cast<std::size_t>(columns_.feature_cols[f])];
                auto value = parse_double(cell);
                if (!value && (f == kSrcIp || f == kDstIp)) {
                    if (auto ip = encode_ipv4(cell)) value = static_cast<double>(*ip);
                }
                if (!value) return RowStatus::dropped_unparseable;
                if (!std::isfinite(*value)) return RowStatus::dropped_non_finite;
                features[f] = *value;
            }
            return RowStatus::ok;
        }
    }

private:
    std::istream& in_;
    std::string source_;
    CsvColumnMap columns_;
    int max_col_ = 0;
    std::uint64_t line_no_ = 0; // data rows consumed (header excluded)
};

// Loads one or more labeled CSV files into a dataset with exactly the 18
// canonical columns. Timestamp and Flow ID columns are discarded; rows with
// the excluded label or non-finite / unparseable values are dropped and
// counted per reason.
inline LabeledDataset load_csv(const std::vector<std::string>& paths, LoadStats* stats_out = nullptr) {
    LabeledDataset ds;
    ds.x.cols = kFeatureCount;
    ds.feature_names = feature_names();
    ds.label_names = label_vocabulary();
    LoadStats stats;

    for (const auto& path : paths) {
        std::ifstream in(path);
        if (!in) throw csv_error(path + ": cannot open file");
        CsvFeatureReader reader(in, path, /*require_label=*/true);
        FeatureVector row;
        int label = 0;
        for (;;) {
            const RowStatus status = reader.next(row, &label);
            if (status == RowStatus::eof) break;
            ++stats.rows_read;
            switch (status) {
                case RowStatus::ok:
                    ds.x.append_row(row);
                    ds.y.push_back(label);
                    ++stats.rows_kept;
                    break;
                case RowStatus::dropped_non_finite: ++stats.dropped_non_finite; break;
                case RowStatus::dropped_unparseable: ++stats.dropped_unparseable; break;
                case RowStatus::dropped_excluded_label: ++stats.dropped_excluded_label; break;
                case RowStatus::eof: break;
            }
        }
        ds.provenance.push_back(path);
    }

    if (stats_out != nullptr) *stats_out = stats;
    if (ds.x.rows == 0) {
        throw csv_error("no usable rows after cleaning (" + std::to_string(stats.rows_read) +
                        " read, all dropped)");
    }
    return ds;
}

inline void write_dataset_csv(const LabeledDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary); // LF line endings everywhere
    if (!out) throw csv_error(path + ": cannot open for writing");
    out << join(ds.feature_names, ',') << ",label\n";
    for (std::size_t r = 0; r < ds.x.rows; ++r) {
        for (std::size_t c = 0; c < ds.x.cols; ++c) {
            if (c) out << ',';
            out << format_csv_value(ds.x.at(r, c));
        }
        out << ',' << ds.label_names[static_cast<std::size_t>(ds.y[r])] << '\n';
    }
    if (!out) throw csv_error(path + ": write failed");
}

namespace detail {

inline LabeledDataset take_rows(const LabeledDataset& ds, const std::vector<std::size_t>& rows) {
    LabeledDataset out;
    out.x = Matrix(0, ds.x.cols);
    out.feature_names = ds.feature_names;
    out.label_names = ds.label_names;
    out.provenance = ds.provenance;
    out.schema_version = ds.schema_version;
    out.y.reserve(rows.size());
    for (std::size_t r : rows) {
        out.x.append_row(ds.x.row(r));
        out.y.push_back(ds.y[r]);
    }
    return out;
}

inline std::vector<std::vector<std::size_t>> rows_by_class(const LabeledDataset& ds) {
    std::vector<std::vector<std::size_t>> by_class(ds.label_names.size());
    for (std::size_t r = 0; r < ds.y.size(); ++r) {
        by_class[static_cast<std::size_t>(ds.y[r])].push_back(r);
    }
    return by_class;
}

} // namespace detail

struct BalanceReport {
    std::vector<std::size_t> available_per_class;
    std::vector<std::size_t> selected_per_class;
};

// Samples min(per_class, available) rows per class uniformly without
// replacement, deterministically from (seed, class_index), then shuffles
// the combined output by seed. Never upsamples.
inline LabeledDataset balance(const LabeledDataset& ds, std::size_t per_class, std::uint64_t seed,
                              BalanceReport* report_out = nullptr) {
    if (per_class < 1) throw std::invalid_argument("balance: per_class must be >= 1");
    const auto by_class = detail::rows_by_class(ds);

    BalanceReport report;
    std::vector<std::size_t> picked;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const auto& rows = by_class[c];
        report.available_per_class.push_back(rows.size());
        if (rows.empty()) {
            report.selected_per_class.push_back(0);
            continue;
        }
        if (rows.size() < per_class) {
            log_warn("balance: class " + ds.label_names[c] + " has only " +
                     std::to_string(rows.size()) + " rows (requested " + std::to_string(per_class) +
                     "), using all of them");
        }
        Rng rng(derive_seed(seed, {0xBA1A0CEuLL, c}));
        const auto selection = sample_without_replacement(rows.size(), per_class, rng);
        for (std::size_t s : selection) picked.push_back(rows[s]);
        report.selected_per_class.push_back(selection.size());
    }

    Rng shuffle_rng(derive_seed(seed, {0xBA1A0CEuLL, 0xFFFFULL}));
    shuffle(picked, shuffle_rng);
    if (report_out != nullptr) *report_out = report;
    return detail::take_rows(ds, picked);
}

// Stratified split: each class contributes floor(count * train_fraction)
// rows to train (remainder to test), chosen by seeded shuffle. A single-row
// class goes entirely to train.
inline std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds,
                                                       double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("split: train_fraction must be in (0, 1)");
    }
    const auto by_class = detail::rows_by_class(ds);

    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        std::vector<std::size_t> rows = by_class[c];
        if (rows.empty()) continue;
        Rng rng(derive_seed(seed, {0x5B117uLL, c}));
        shuffle(rows, rng);
        std::size_t n_train = static_cast<std::size_t>(
            std::floor(static_cast<double>(rows.size()) * train_fraction));
        if (rows.size() == 1) {
            n_train = 1;
            log_warn("split: class " + ds.label_names[c] + " has a single row; assigning it to train");
        }
        train_rows.insert(train_rows.end(), rows.begin(), rows.begin() + n_train);
        test_rows.insert(test_rows.end(), rows.begin() + n_train, rows.end());
    }

    Rng train_rng(derive_seed(seed, {0x5B117uLL, 0x7EA17ULL}));
    Rng test_rng(derive_seed(seed, {0x5B117uLL, 0x7E57ULL}));
    shuffle(train_rows, train_rng);
    shuffle(test_rows, test_rng);
    return {detail::take_rows(ds, train_rows), detail::take_rows(ds, test_rows)};
}

} // namespace flowsentry
