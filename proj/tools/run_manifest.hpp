#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "densesteer/io.hpp"

namespace CLI {
class App;
}

namespace densesteer::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Tracks the files one subcommand reads and writes. Every output is written
// atomically and, once the command succeeds, gets a <output>.manifest.json
// sibling describing the whole run.
class RunManifest {
 public:
  RunManifest(std::string subcommand, const CLI::App& command,
              std::filesystem::path config_file = {});

  void add_input(const std::filesystem::path& path);
  void write_output(const std::filesystem::path& path, std::string_view data);
  void finish() const;

  json to_json() const;

 private:
  struct FileDigest {
    std::string path;
    std::string sha256;
  };
  std::string subcommand_;
  json config_;
  std::vector<FileDigest> inputs_;
  std::vector<FileDigest> outputs_;
  std::chrono::steady_clock::time_point start_;
};

// Resolved value of every option of `command`, keyed by long name.
json resolved_options(const CLI::App& command);

std::string version_string();

}  // namespace densesteer::cli
