#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flowsentry {

// Closed label vocabulary, dense indices 0-12 with BENIGN = 0. WebDDoS is
// not part of the vocabulary: rows carrying it are dropped at ingestion
// (and counted), because the class has too few records to train on.
inline const std::vector<std::string>& label_vocabulary() {
    static const std::vector<std::string> labels = {
        "BENIGN",       "DrDoS_DNS",  "DrDoS_LDAP", "DrDoS_MSSQL", "DrDoS_NetBIOS",
        "DrDoS_NTP",    "DrDoS_SNMP", "DrDoS_SSDP", "DrDoS_UDP",   "Portmap",
        "Syn",          "TFTP",       "UDP-lag",
    };
    return labels;
}

inline constexpr std::string_view kExcludedLabel = "WebDDoS";

inline std::optional<int> label_index(std::string_view name) {
    const auto& vocab = label_vocabulary();
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        if (vocab[i] == name) return static_cast<int>(i);
    }
    return std::nullopt;
}

} // namespace flowsentry
