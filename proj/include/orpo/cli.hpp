#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "orpo/data.hpp"
#include "orpo/reward.hpp"
#include "orpo/trainer.hpp"

namespace orpo::cli {

/// Stable exit codes.
enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kRuntime = 3 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Built-in defaults for every recognized config key.
nlohmann::json default_config();

/// Merges a flat JSON config file over the defaults. Unknown keys and
/// type mismatches throw ConfigError naming the field. The seed falls back
/// to ORPO_KIT_SEED when neither the file nor `seed_override` sets it.
nlohmann::json resolve_config(const std::optional<std::string>& config_path, const nlohmann::json& overrides,
                              std::string* raw_bytes = nullptr);

TrainConfig train_config_from(const nlohmann::json& cfg);
LMConfig lm_config_from(const nlohmann::json& cfg, const Vocab& vocab);
RewardTrainConfig reward_config_from(const nlohmann::json& cfg);

struct PreparedData {
  Vocab vocab;
  DatasetSplit split;
  LoadResult load;
};

/// load -> vocab -> filter -> split, as configured.
PreparedData prepare_data(const nlohmann::json& cfg);

/// Entry point; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace orpo::cli
