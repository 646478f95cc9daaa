#pragma once

// Flat key=value configuration for cascade training. '#' starts a comment.

#include "gnf/cascade.hpp"

#include <string>
#include <vector>

namespace gnf {

struct ConfigKey {
  const char* name;
  const char* help;
};

/// Every recognised key with a one-line description.
const std::vector<ConfigKey>& config_keys();

/// Throws std::invalid_argument for unknown keys or unparsable values.
void set_config_value(CascadeConfig& config, const std::string& key, const std::string& value);

/// Applies "key=value" (used for flag overrides).
void apply_assignment(CascadeConfig& config, const std::string& assignment);

/// Throws DataError when the file is unreadable, std::invalid_argument on bad content.
CascadeConfig load_config(const std::string& path, CascadeConfig base = {});

/// Current values in the file format, one key per line.
std::string format_config(const CascadeConfig& config);

}  // namespace gnf
