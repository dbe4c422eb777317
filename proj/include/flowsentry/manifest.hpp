#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flowsentry/text.hpp"
#include "flowsentry/version.hpp"

// Every command that writes outputs drops a flat key/value manifest next to
// them: command, resolved parameters, seeds, input digests, row counters
// and wall-clock duration. Manifests are run logs, not data artifacts.

namespace flowsentry {

inline std::uint64_t file_digest_fnv1a64(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for digest: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
    }
    return h;
}

class RunManifest {
public:
    explicit RunManifest(std::string command)
        : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

    void param(const std::string& key, const std::string& value) {
        entries_.emplace_back("param." + key, value);
    }
    void param(const std::string& key, std::uint64_t value) { param(key, std::to_string(value)); }
    void param(const std::string& key, double value) { param(key, format_csv_value(value)); }

    void input(const std::string& path) {
        const std::size_t i = n_inputs_++;
        entries_.emplace_back("input." + std::to_string(i) + ".path", path);
        entries_.emplace_back("input." + std::to_string(i) + ".fnv1a64",
                              format_hex64(file_digest_fnv1a64(path)));
    }

    void counter(const std::string& key, std::uint64_t value) {
        entries_.emplace_back("counter." + key, std::to_string(value));
    }

    void output(const std::string& path) { entries_.emplace_back("output", path); }

    void write(const std::string& path) const {
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start_);
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write manifest: " + path);
        out << "flowsentry manifest v1\n";
        out << "command = " << command_ << "\n";
        out << "version = " << kVersion << "\n";
        for (const auto& [key, value] : entries_) out << key << " = " << value << "\n";
        out << "duration_ms = " << elapsed.count() << "\n";
    }

private:
    std::string command_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::pair<std::string, std::string>> entries_;
    std::size_t n_inputs_ = 0;
};

} // namespace flowsentry
