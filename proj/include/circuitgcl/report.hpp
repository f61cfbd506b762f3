#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <string>

#include <json.hpp>

#include "binary_io.hpp"

namespace circuitgcl {

inline constexpr int kReportSchemaVersion = 1;

/// Hex CRC32 of the compact dump of `payload`.
inline std::string payload_hash(const nlohmann::ordered_json& payload) {
    const std::string s = payload.dump();
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x",
                  crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}));
    return buf;
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// {schema_version, command, generated_at, payload_crc32, payload}. Only
/// `payload` is hashed; `generated_at` is the one field that varies between
/// identical runs.
inline nlohmann::ordered_json make_report(const std::string& command, nlohmann::ordered_json payload) {
    nlohmann::ordered_json r;
    r["schema_version"] = kReportSchemaVersion;
    r["command"] = command;
    r["generated_at"] = utc_timestamp();
    r["payload_crc32"] = payload_hash(payload);
    r["payload"] = std::move(payload);
    return r;
}

/// Recomputes the hash of a report parsed with key order preserved.
inline bool verify_report(const nlohmann::ordered_json& report) {
    return report.at("payload_crc32").get<std::string>() == payload_hash(report.at("payload"));
}

}  // namespace circuitgcl
