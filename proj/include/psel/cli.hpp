#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace psel {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit status: 0 success, 2 input error, 3 numerical error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

struct RunManifest {
  std::string command;
  nlohmann::ordered_json config;
  std::uint64_t seed = 0;
  int workers = 1;
  double wall_time_seconds = 0.0;
  std::vector<std::string> outputs;  // paths; checksums computed on write
};

/// Writes manifest.json into dir listing every output with its checksum.
void write_manifest(const std::string& dir, const RunManifest& manifest);

}  // namespace psel
