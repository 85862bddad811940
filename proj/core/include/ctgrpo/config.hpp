#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ctgrpo/error.hpp"
#include "ctgrpo/eval.hpp"
#include "ctgrpo/forge.hpp"
#include "ctgrpo/grpo.hpp"
#include "ctgrpo/policy.hpp"
#include "ctgrpo/records.hpp"
#include "ctgrpo/reward.hpp"
#include "ctgrpo/sft.hpp"
#include "ctgrpo/synth.hpp"

namespace ctgrpo {

/// Raised for unknown keys, unparsable values and failed validation. The
/// message names every offending key path.
class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// Flat `key = value` text. Blank lines and lines starting with '#' are
/// skipped; a `resolved.` prefix (as written in run manifests) is stripped.
/// Later assignments win.
using KeyValues = std::vector<std::pair<std::string, std::string>>;
KeyValues parse_key_values(const std::string& text, const std::string& source = "<config>");
KeyValues load_key_values(const std::filesystem::path& path);

struct RunConfig {
  std::uint64_t seed = 0;

  SynthConfig synth;
  std::size_t synth_cases = 200;
  std::uint64_t synth_seed = 0;

  AugmentConfig forge;
  double split_ratio = 0.8;
  std::uint64_t split_seed = 0;

  std::size_t policy_dim = 32;
  std::uint64_t policy_seed = 0;

  SftConfig sft;
  SftModes sft_modes = SftModes::kBoth;
  GrpoConfig grpo;
  RewardWeights reward;

  EvalMode eval_mode = EvalMode::kWithThink;
  DecodeSettings decode;
  QueryOptions query;

  std::size_t threads = 0;

  /// Input and output locations; command-line flags override them.
  std::map<std::string, std::string> paths;

  /// Applies assignments in order; collects all errors, then throws.
  void apply(const KeyValues& kv);
  void set(const std::string& key, const std::string& value) { apply({{key, value}}); }
  /// Cross-field checks of every section.
  void validate() const;

  /// Every known key with its current value, sorted by key.
  KeyValues resolved() const;
  std::vector<std::string> known_keys() const;

  PolicyShape shape() const;
  ExperimentConfig experiment() const;
  std::size_t effective_threads() const;
};

/// Writes `resolved.<key>=<value>` lines; loading the file as a config
/// reproduces the run.
void write_manifest(const std::filesystem::path& path, const RunConfig& cfg, const std::string& command);

}  // namespace ctgrpo
