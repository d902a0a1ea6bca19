#pragma once

// Command-line front end: config resolution and subcommand dispatch.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cah/pipeline.hpp"

namespace cah::cli {

/// Bad arguments or configuration; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct EvalSettings {
  double threshold = 3.0;
  std::size_t per_category = 20;
  /// Synthetic evaluation pairs start here, past any training index.
  std::uint64_t first_index = 1000000;
};

struct Settings {
  GenConfig gen;
  std::vector<Category> categories{kCategories.begin(), kCategories.end()};
  ModelConfig model = ModelConfig::tiny();
  TrainConfig train = TrainConfig::tiny();
  EvalSettings eval;
};

/// Explicit "section.key" values layered over the defaults. Later sets win.
class Config {
 public:
  /// Every accepted key, in snapshot order.
  static const std::vector<std::string>& keys();

  void set(const std::string& key, const std::string& value);
  /// "key=value"
  void set_assignment(const std::string& assignment);
  /// INI file with one section per module.
  void load_file(const std::filesystem::path& path);

  Settings resolve() const;
  const std::map<std::string, std::string>& explicit_values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Resolved settings as INI text; loading it back reproduces them.
std::string snapshot(const Settings& s);
void write_snapshot(const std::filesystem::path& dir, const Settings& s);

/// Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cah::cli
