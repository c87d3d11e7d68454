#pragma once

#include "lpcdet/detector.hpp"
#include "lpcdet/scene.hpp"
#include "lpcdet/training.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

namespace lpcdet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "none" or "" -> {}, "all" -> {1..layers-1}, otherwise a comma list.
std::set<int> parse_refine_spec(const std::string& spec, int layers);
std::string format_refine_spec(const std::set<int>& layers);

/// Flat `key = value` run configuration. Every key has a default taken from
/// a named profile; unknown keys and malformed values are rejected.
class RunConfig {
 public:
  /// "desk" or "paper-shape".
  static RunConfig profile(const std::string& name);
  static const std::set<std::string>& profiles();

  const std::string& profile_name() const { return profile_; }

  void set(const std::string& key, const std::string& value);
  /// Applies `key = value` lines; '#' starts a comment.
  void merge_text(const std::string& text, const std::string& origin = "<text>");
  void merge_file(const std::filesystem::path& path);
  /// "key=value" as given on the command line.
  void merge_assignment(const std::string& assignment);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  double number(const std::string& key) const;
  int integer(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;

  /// Every key, sorted, one `key = value` line each; merge_text of the echo
  /// onto any profile reproduces this config.
  std::string echo() const;
  const std::map<std::string, std::string>& values() const { return values_; }

  Extent extent() const;
  SceneConfig scene_config() const;
  DetectorConfig detector_config() const;
  /// stage 1 uses train.*, stage 2 uses stage2.* for epochs and rate.
  TrainConfig train_config(int stage) const;
  AamTrainConfig aam_config() const;
  std::set<int> refine_layers() const;

  /// Builds every derived config once; throws ConfigError on violations.
  void validate() const;

 private:
  std::string profile_;
  std::map<std::string, std::string> values_;
};

}  // namespace lpcdet
