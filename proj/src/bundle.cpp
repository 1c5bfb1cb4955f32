#include "risk/bundle.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "risk/hash.hpp"

namespace risk {

namespace fs = std::filesystem;

nlohmann::json RunManifest::to_json() const {
  return {{"command", command},   {"config_hash", config_hash}, {"inputs", inputs},
          {"seed", seed},         {"tool_version", tool_version}, {"started", started},
          {"finished", finished}, {"outputs", outputs}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.command = j.value("command", "");
  m.config_hash = j.value("config_hash", "");
  m.inputs = j.value("inputs", std::map<std::string, std::string>{});
  m.seed = j.value("seed", std::uint64_t{0});
  m.tool_version = j.value("tool_version", "");
  m.started = j.value("started", "");
  m.finished = j.value("finished", "");
  m.outputs = j.value("outputs", std::map<std::string, std::string>{});
  return m;
}

std::string utc_timestamp() {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  const auto days = std::chrono::floor<std::chrono::days>(now);
  const std::chrono::year_month_day ymd{days};
  const std::chrono::hh_mm_ss hms{now - days};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long long>(hms.seconds().count()));
  return buf;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out << content;
  if (!out) throw io_error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_manifest(const fs::path& dir, RunManifest manifest, const std::vector<std::string>& outputs) {
  for (const auto& o : outputs) manifest.outputs[o] = sha256_file(dir / o);
  if (manifest.finished.empty()) manifest.finished = utc_timestamp();
  write_text(dir / "manifest.json", manifest.to_json().dump(2) + "\n");
}

RunManifest read_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.json";
  if (!fs::exists(path)) throw input_error("no manifest.json in " + dir.string());
  try {
    return RunManifest::from_json(nlohmann::json::parse(read_text(path)));
  } catch (const nlohmann::json::exception& e) {
    throw input_error("malformed manifest in " + dir.string() + ": " + e.what());
  }
}

void save_bundle(const fs::path& dir, const FittedModel& model, const RunManifest& manifest,
                 const DiagnosticsReport* diagnostics, const std::optional<nlohmann::json>& provenance) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create " + dir.string() + ": " + ec.message());

  std::ostringstream draws;
  write_draws(model.draws, draws);
  write_text(dir / draws_file, draws.str());

  nlohmann::json config = {{"submodels", submodels_to_json(model.submodels)}, {"prior", model.prior.to_json()}};
  std::vector<double> offsets(model.submodels.size(), 0.0);
  for (std::size_t m = 0; m < offsets.size(); ++m) offsets[m] = model.offset(m);
  config["offsets"] = offsets;
  write_text(dir / model_file, config.dump(2) + "\n");
  write_text(dir / schema_file, model.schema.to_json().dump(2) + "\n");

  std::vector<std::string> outputs{draws_file, model_file, schema_file};
  if (diagnostics) {
    write_text(dir / diagnostics_file, diagnostics->to_json().dump(2) + "\n");
    outputs.emplace_back(diagnostics_file);
  }
  if (provenance) {
    write_text(dir / provenance_file, provenance->dump(2) + "\n");
    outputs.emplace_back(provenance_file);
  }
  write_manifest(dir, manifest, outputs);
}

FittedModel load_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw input_error("bundle directory not found: " + dir.string());
  const auto manifest = read_manifest(dir);
  for (const char* name : {draws_file, model_file, schema_file}) {
    const auto it = manifest.outputs.find(name);
    if (it == manifest.outputs.end()) throw input_error(std::string("bundle manifest does not list ") + name);
    if (!fs::exists(dir / name)) throw input_error(std::string("bundle is missing ") + name);
    if (sha256_file(dir / name) != it->second) throw input_error(std::string("hash mismatch for ") + name);
  }
  FittedModel m;
  try {
    const auto config = nlohmann::json::parse(read_text(dir / model_file));
    m.submodels = submodels_from_json(config.at("submodels"));
    m.prior = PriorConfig::from_json(config.at("prior"));
    m.offsets = config.value("offsets", std::vector<double>(m.submodels.size(), 0.0));
    m.schema = Schema::from_json(nlohmann::json::parse(read_text(dir / schema_file)));
  } catch (const nlohmann::json::exception& e) {
    throw input_error("malformed bundle config: " + std::string(e.what()));
  }
  std::ifstream in(dir / draws_file);
  m.draws = read_draws(in);
  return m;
}

std::string bundle_hash(const fs::path& dir) {
  const auto manifest = read_manifest(dir);
  std::string joined;
  for (const char* name : {draws_file, model_file, schema_file}) {
    const auto it = manifest.outputs.find(name);
    if (it != manifest.outputs.end()) joined += it->second;
  }
  return sha256_hex(joined);
}

}  // namespace risk
