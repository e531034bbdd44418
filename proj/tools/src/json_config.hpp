#pragma once

#include <string>
#include <vector>

#include <CLI11.hpp>

namespace geoslomo::cli {

/// JSON configuration files for CLI11. Top-level keys set global options; an
/// object keyed by a command name sets that command's options. Keys may use
/// underscores or dashes. Sections for commands other than `active` are
/// ignored.
class JsonConfig : public CLI::Config {
 public:
  JsonConfig(std::vector<std::string> commands, std::string active)
      : commands_(std::move(commands)), active_(std::move(active)) {}

  std::string to_config(const CLI::App* app, bool default_also, bool write_description,
                        std::string prefix) const override;
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override;

 private:
  std::vector<std::string> commands_;
  std::string active_;
};

}  // namespace geoslomo::cli
