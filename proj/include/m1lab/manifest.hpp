#pragma once

#include "m1lab/version.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace m1lab {

inline std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct ExperimentManifest {
    std::string kind;          // simulate | distance | modulus | lemma34 | tightness | spde | converge
    std::string config_path;
    std::uint64_t seed = 0;
    std::size_t replicates = 0;
    std::string output;
    nlohmann::json config;     // effective configuration

    [[nodiscard]] std::string config_hash() const { return hex64(fnv1a64(config.dump())); }

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"kind", kind},
                {"config_path", config_path},
                {"seed", seed},
                {"replicates", replicates},
                {"output", output},
                {"tool_version", kToolVersion},
                {"manifest_format", kManifestFormat},
                {"config_hash", config_hash()},
                {"config", config}};
    }

    [[nodiscard]] std::string hash() const { return hex64(fnv1a64(to_json().dump())); }
};

inline void write_json(const std::filesystem::path& file, const nlohmann::json& j) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed for " + file.string());
}

/// Creates `dir` if needed and writes manifest.json into it; returns the manifest hash.
inline std::string write_manifest(const std::filesystem::path& file, const ExperimentManifest& m) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    write_json(file, m.to_json());
    return m.hash();
}

}  // namespace m1lab
