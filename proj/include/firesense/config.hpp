#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "firesense/data.hpp"
#include "firesense/model.hpp"
#include "firesense/train.hpp"

namespace firesense {

/// Flat key=value run configuration. Every key has a default; unknown keys and
/// unparsable values are rejected with ConfigError. Lines starting with '#' and
/// blank lines are ignored.
class RunConfig {
 public:
  RunConfig();

  /// Known keys in a stable order.
  static const std::vector<std::string>& keys();

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool contains(const std::string& key) const;

  void load_text(const std::string& text, const std::string& origin = "<config>");
  void load_file(const std::filesystem::path& path);

  /// "key=value" per line, every known key, stable order.
  std::string echo() const;
  void write_echo(const std::filesystem::path& path) const;

  ModelConfig model() const;
  TrainConfig train() const;
  SmoothingConfig smoothing() const;
  std::uint64_t split_seed() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace firesense
