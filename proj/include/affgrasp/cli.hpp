#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace affgrasp::cli {

enum ExitCode : int { kOk = 0, kDomainError = 1, kUsageError = 2 };

/// One record per run: what was asked for, with what, and when.
struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;  // resolved option values
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, git blob hash
  std::vector<std::string> outputs;
  std::string started, finished;  // UTC, ISO 8601
  std::string status = "ok";
  std::string error;

  std::string to_json() const;
};

/// Hash git assigns to a blob with these contents: sha1("blob <size>\0" + contents).
std::string git_blob_sha1(std::string_view contents);

/// Folds `key = value` lines from the file named by --config into args, skipping keys that
/// are already given as flags (flags win over the file, the file over built-in defaults).
/// '#' starts a comment. Throws affgrasp::Error(IoError / ParseError).
std::vector<std::string> merge_config(std::vector<std::string> args);

/// args excludes the program name.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace affgrasp::cli
