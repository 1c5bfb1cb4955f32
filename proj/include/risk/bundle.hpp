#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "risk/diagnostics.hpp"
#include "risk/predictor.hpp"

namespace risk {

// Record of one command run; written as manifest.json in every output directory.
struct RunManifest {
  std::string command;
  std::string config_hash;
  // Input path -> SHA-256.
  std::map<std::string, std::string> inputs;
  std::uint64_t seed = 0;
  std::string tool_version{risk::tool_version};
  std::string started;
  std::string finished;
  // Output file (relative to the directory) -> SHA-256.
  std::map<std::string, std::string> outputs;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

// UTC, ISO 8601, second resolution.
std::string utc_timestamp();

// Hashes the listed outputs and writes manifest.json into `dir`.
void write_manifest(const std::filesystem::path& dir, RunManifest manifest,
                    const std::vector<std::string>& outputs);
RunManifest read_manifest(const std::filesystem::path& dir);

inline constexpr const char* draws_file = "draws.csv";
inline constexpr const char* model_file = "model.json";
inline constexpr const char* schema_file = "schema.json";
inline constexpr const char* diagnostics_file = "diagnostics.json";
inline constexpr const char* provenance_file = "provenance.json";

// Writes draws, sub-model config, schema, optional diagnostics and provenance,
// then the manifest listing their hashes.
void save_bundle(const std::filesystem::path& dir, const FittedModel& model, const RunManifest& manifest,
                 const DiagnosticsReport* diagnostics = nullptr,
                 const std::optional<nlohmann::json>& provenance = std::nullopt);

// Loads a bundle after checking every listed artifact against its manifest hash.
FittedModel load_bundle(const std::filesystem::path& dir);

// Hash identifying a bundle: SHA-256 over its sorted artifact hashes.
std::string bundle_hash(const std::filesystem::path& dir);

void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

}  // namespace risk
