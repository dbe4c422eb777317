#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "flowsentry/dataset.hpp"
#include "flowsentry/features.hpp"
#include "flowsentry/matrix.hpp"
#include "flowsentry/rng.hpp"

// Shared test helpers: fixture pcap encoding, independent oracles and
// synthetic dataset generators. Oracles here must stay independent of the
// implementation paths they check.

namespace testutil {

inline std::uint32_t ip(const char* dotted) { return *flowsentry::encode_ipv4(dotted); }

// ---------------------------------------------------------------------------
// Hand-encoded classic pcap fixtures.

class PcapWriter {
public:
    explicit PcapWriter(bool nanos = false, bool byteswapped = false, std::uint32_t link_type = 1)
        : nanos_(nanos), swap_(byteswapped) {
        const std::uint32_t magic = nanos ? 0xa1b23c4du : 0xa1b2c3d4u;
        u32(magic);
        u16(2);
        u16(4);
        u32(0); // thiszone
        u32(0); // sigfigs
        u32(65535);
        u32(link_type);
    }

    void add_frame(std::int64_t ts_us, const std::vector<std::uint8_t>& frame,
                   std::int64_t orig_len = -1) {
        u32(static_cast<std::uint32_t>(ts_us / 1000000));
        const auto frac = static_cast<std::uint32_t>(ts_us % 1000000);
        u32(nanos_ ? frac * 1000 : frac);
        u32(static_cast<std::uint32_t>(frame.size()));
        u32(static_cast<std::uint32_t>(orig_len < 0 ? frame.size() : orig_len));
        bytes.insert(bytes.end(), frame.begin(), frame.end());
    }

    // Truncates the capture mid-record to provoke the partial-result path.
    void add_truncated_record() {
        u32(0);
        u32(0);
        u32(100); // claims 100 bytes follow
        u32(100);
        bytes.push_back(0xAA); // but only one does
    }

    void write(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    }

    std::vector<std::uint8_t> bytes;

private:
    void u16(std::uint16_t v) {
        if (swap_) v = static_cast<std::uint16_t>((v >> 8) | (v << 8));
        bytes.push_back(static_cast<std::uint8_t>(v & 0xff));
        bytes.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        if (swap_) {
            v = ((v & 0x000000ffu) << 24) | ((v & 0x0000ff00u) << 8) | ((v & 0x00ff0000u) >> 8) |
                ((v & 0xff000000u) >> 24);
        }
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    }

    bool nanos_;
    bool swap_;
};

inline void be16(std::vector<std::uint8_t>& b, std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v >> 8));
    b.push_back(static_cast<std::uint8_t>(v & 0xff));
}
inline void be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    b.push_back(static_cast<std::uint8_t>(v >> 24));
    b.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    b.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    b.push_back(static_cast<std::uint8_t>(v & 0xff));
}

struct FrameSpec {
    std::uint32_t src_ip = 0;
    std::uint32_t dst_ip = 0;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::uint8_t protocol = 17;
    std::uint16_t payload_len = 0;
    std::uint8_t tcp_flags = 0x18; // PSH|ACK
    bool vlan_tag = false;
};

inline std::vector<std::uint8_t> ethernet_frame(const FrameSpec& spec) {
    std::vector<std::uint8_t> f;
    for (int i = 0; i < 6; ++i) f.push_back(0x02); // dst mac
    for (int i = 0; i < 6; ++i) f.push_back(0x04); // src mac
    if (spec.vlan_tag) {
        be16(f, 0x8100);
        be16(f, 0x0001); // TCI
    }
    be16(f, 0x0800);

    const std::uint16_t transport_header = spec.protocol == 6 ? 20 : 8;
    const std::uint16_t total_len = static_cast<std::uint16_t>(20 + transport_header + spec.payload_len);
    f.push_back(0x45); // version 4, IHL 5
    f.push_back(0);
    be16(f, total_len);
    be16(f, 0x1234); // id
    be16(f, 0x0000); // no fragmentation
    f.push_back(64);
    f.push_back(spec.protocol);
    be16(f, 0); // checksum not validated
    be32(f, spec.src_ip);
    be32(f, spec.dst_ip);

    be16(f, spec.src_port);
    be16(f, spec.dst_port);
    if (spec.protocol == 6) {
        be32(f, 1000); // seq
        be32(f, 2000); // ack
        f.push_back(0x50); // data offset 5
        f.push_back(spec.tcp_flags);
        be16(f, 8192); // window
        be16(f, 0);    // checksum
        be16(f, 0);    // urgent
    } else {
        be16(f, static_cast<std::uint16_t>(8 + spec.payload_len));
        be16(f, 0);
    }
    for (std::uint16_t i = 0; i < spec.payload_len; ++i) f.push_back(static_cast<std::uint8_t>(i));
    return f;
}

inline std::vector<std::uint8_t> arp_frame() {
    std::vector<std::uint8_t> f;
    for (int i = 0; i < 12; ++i) f.push_back(0x06);
    be16(f, 0x0806);
    for (int i = 0; i < 28; ++i) f.push_back(0x01);
    return f;
}

// ---------------------------------------------------------------------------
// Temporary directories for file-based tests.

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("flowsentry-" + tag + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

// ---------------------------------------------------------------------------
// Independent oracles.

struct OracleSplit {
    int feature = -1;
    double threshold = 0.0;
    double decrease = -1.0;
};

// Exhaustive best-Gini-split search by direct recounting: every feature,
// every midpoint between consecutive distinct sorted values, children
// counted from scratch. Tie rule: lowest feature, then lowest threshold.
inline OracleSplit brute_force_best_split(const flowsentry::Matrix& x, const std::vector<int>& y,
                                          int n_classes) {
    auto gini_of = [&](const std::vector<std::size_t>& counts, std::size_t n) {
        double sum_sq = 0.0;
        for (std::size_t c : counts) {
            const double p = static_cast<double>(c) / static_cast<double>(n);
            sum_sq += p * p;
        }
        return 1.0 - sum_sq;
    };

    const std::size_t n = x.rows;
    std::vector<std::size_t> parent_counts(static_cast<std::size_t>(n_classes), 0);
    for (int label : y) parent_counts[static_cast<std::size_t>(label)]++;
    const double parent = gini_of(parent_counts, n);

    OracleSplit best;
    for (std::size_t f = 0; f < x.cols; ++f) {
        std::vector<double> values;
        for (std::size_t r = 0; r < n; ++r) values.push_back(x.at(r, f));
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t v = 1; v < values.size(); ++v) {
            const double a = values[v - 1];
            const double b = values[v];
            double threshold = a + (b - a) / 2.0;
            if (!(threshold < b)) threshold = a;

            std::vector<std::size_t> left(static_cast<std::size_t>(n_classes), 0);
            std::vector<std::size_t> right(static_cast<std::size_t>(n_classes), 0);
            std::size_t nl = 0;
            for (std::size_t r = 0; r < n; ++r) {
                if (x.at(r, f) <= threshold) {
                    left[static_cast<std::size_t>(y[r])]++;
                    ++nl;
                } else {
                    right[static_cast<std::size_t>(y[r])]++;
                }
            }
            const std::size_t nr = n - nl;
            if (nl == 0 || nr == 0) continue;
            const double decrease =
                parent - (static_cast<double>(nl) / static_cast<double>(n)) * gini_of(left, nl) -
                (static_cast<double>(nr) / static_cast<double>(n)) * gini_of(right, nr);
            if (decrease > best.decrease) {
                best = OracleSplit{static_cast<int>(f), threshold, decrease};
            }
        }
    }
    return best;
}

// Wilcoxon pair statistic: fraction of (positive, negative) pairs ordered
// correctly, ties counted half.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    double ordered = 0.0;
    std::uint64_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!positive[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (positive[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) ordered += 1.0;
            else if (scores[i] == scores[j]) ordered += 0.5;
        }
    }
    return ordered / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Synthetic datasets.

inline double normal_sample(flowsentry::Rng& rng) {
    // Box-Muller; both inputs strictly inside (0, 1)
    const double u1 = 1.0 - rng.real01();
    const double u2 = rng.real01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

struct Synthetic {
    flowsentry::Matrix x;
    std::vector<int> y;
};

// Gaussian blobs with optional label noise and pure-noise padding features.
inline Synthetic make_blobs(std::size_t n_per_class, const std::vector<std::vector<double>>& centers,
                            double spread, std::size_t noise_features, double label_noise,
                            std::uint64_t seed) {
    flowsentry::Rng rng(seed);
    const std::size_t d = centers.front().size() + noise_features;
    Synthetic data;
    data.x = flowsentry::Matrix(n_per_class * centers.size(), d);
    std::size_t row = 0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            for (std::size_t j = 0; j < centers[c].size(); ++j) {
                data.x.at(row, j) = centers[c][j] + spread * normal_sample(rng);
            }
            for (std::size_t j = centers[c].size(); j < d; ++j) {
                data.x.at(row, j) = rng.real01() * 10.0;
            }
            int label = static_cast<int>(c);
            if (label_noise > 0.0 && rng.real01() < label_noise) {
                label = static_cast<int>(rng.below(centers.size()));
            }
            data.y.push_back(label);
        }
    }
    return data;
}

inline std::vector<std::string> generic_feature_names(std::size_t d) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < d; ++i) names.push_back("f" + std::to_string(i));
    return names;
}

inline std::vector<std::string> generic_label_names(std::size_t k) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < k; ++i) names.push_back("C" + std::to_string(i));
    return names;
}

} // namespace testutil
