#include "run_manifest.hpp"

#include <utility>

#include "CLI11.hpp"
#include "densesteer/eval.hpp"
#include "densesteer/steering.hpp"
#include "densesteer/weights_io.hpp"

namespace densesteer::cli {

std::string version_string() {
  return "densesteer " + std::string(kToolVersion) + " (weights format v" +
         std::to_string(kWeightsVersion) + ", vector format v" + std::to_string(kVectorVersion) +
         ", report schema v" + std::to_string(kReportSchemaVersion) + ")";
}

json resolved_options(const CLI::App& command) {
  json out = json::object();
  for (const CLI::Option* opt : command.get_options()) {
    std::string name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    if (opt->count() > 0) {
      const std::vector<std::string>& r = opt->results();
      if (opt->get_expected_max() > 1) {
        out[name] = r;
      } else if (opt->get_type_size() == 0) {
        out[name] = true;
      } else {
        out[name] = r.back();
      }
    } else if (opt->get_type_size() == 0) {
      out[name] = false;
    } else {
      const std::string& d = opt->get_default_str();
      out[name] = d.empty() ? json(nullptr) : json(d);
    }
  }
  return out;
}

RunManifest::RunManifest(std::string subcommand, const CLI::App& command,
                         std::filesystem::path config_file)
    : subcommand_(std::move(subcommand)),
      config_(resolved_options(command)),
      start_(std::chrono::steady_clock::now()) {
  if (!config_file.empty()) add_input(config_file);
}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs_.push_back({path.string(), sha256_hex(read_file(path))});
}

void RunManifest::write_output(const std::filesystem::path& path, std::string_view data) {
  write_file_atomic(path, data);
  outputs_.push_back({path.string(), sha256_hex(data)});
}

json RunManifest::to_json() const {
  json inputs = json::array();
  for (const FileDigest& f : inputs_) inputs.push_back({{"path", f.path}, {"sha256", f.sha256}});
  json outputs = json::array();
  for (const FileDigest& f : outputs_) outputs.push_back({{"path", f.path}, {"sha256", f.sha256}});
  const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start_;
  return {
      {"subcommand", subcommand_},
      {"tool_version", kToolVersion},
      {"format_versions",
       {{"weights", kWeightsVersion}, {"vector", kVectorVersion}, {"report", kReportSchemaVersion}}},
      {"config", config_},
      {"inputs", inputs},
      {"outputs", outputs},
      {"duration_seconds", took.count()},
  };
}

void RunManifest::finish() const {
  if (outputs_.empty()) return;
  const std::string text = json_dump(to_json()) + "\n";
  for (const FileDigest& f : outputs_) write_file_atomic(f.path + ".manifest.json", text);
}

}  // namespace densesteer::cli
