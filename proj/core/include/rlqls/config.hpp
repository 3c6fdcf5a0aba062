#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rlqls/trainer.hpp"

namespace rlqls {

/// `key = value` lines; `#` starts a comment; blank lines ignored.
using KeyValues = std::map<std::string, std::string>;

/// Syntax problems are appended to `errors` (with line numbers).
KeyValues parse_key_values(const std::string& text, std::vector<std::string>& errors);

/// Applies `kv` on top of `cfg`. Unknown keys and unparsable values are all
/// collected in `errors`, not just the first one.
void apply_train_config(const KeyValues& kv, TrainConfig& cfg, std::vector<std::string>& errors);

/// Cross-field checks (ranges, m <= n, ...), appended to `errors`.
void check_train_config(const TrainConfig& cfg, std::vector<std::string>& errors);

/// Reads a config file, throwing ConfigError listing every problem found.
TrainConfig load_train_config(const std::string& path, const KeyValues& overrides = {});

std::string to_key_values(const TrainConfig& cfg);
nlohmann::ordered_json to_json(const TrainConfig& cfg);

}  // namespace rlqls
