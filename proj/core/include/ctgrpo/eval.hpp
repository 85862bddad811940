#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctgrpo/forge.hpp"
#include "ctgrpo/grpo.hpp"
#include "ctgrpo/policy.hpp"
#include "ctgrpo/records.hpp"
#include "ctgrpo/reward.hpp"
#include "ctgrpo/sft.hpp"

namespace ctgrpo {

/// with-think: think-requesting prompt. without-think: direct-answer prompt.
/// forced-think: direct-answer prompt with `<think>` forced as the first token.
enum class EvalMode { kWithThink, kWithoutThink, kForcedThink };
std::string_view eval_mode_name(EvalMode m);
EvalMode parse_eval_mode(std::string_view s);

struct DecodeSettings {
  bool greedy = true;
  std::uint64_t seed = 0;
  int max_len = 24;
  double temperature = 1.0;
};

struct EvalReport {
  double accuracy = 0.0;
  std::array<double, kNumClasses> per_class_accuracy{};
  std::array<std::size_t, kNumClasses> per_class_count{};
  double format_rate = 0.0;
  double validity_rate = 0.0;
  double consistency_rate = 0.0;
  std::size_t samples = 0;
  EvalMode mode = EvalMode::kWithThink;
  DecodeSettings decode;
};

/// Produces the response tokens for test item `index`.
using Decoder = std::function<std::vector<TokenId>(const Query& query, std::size_t index)>;

Decoder policy_decoder(const PolicyParams& params, EvalMode mode, const DecodeSettings& decode);

/// Copies of `queries` carrying the prompt mode that `mode` evaluates with.
std::vector<Query> prompt_for_mode(std::span<const Query> queries, EvalMode mode);

EvalReport evaluate(std::span<const Query> test, EvalMode mode, const Decoder& decoder,
                    const DecodeSettings& decode = {});
EvalReport evaluate(const PolicyParams& params, std::span<const Query> test, EvalMode mode,
                    const DecodeSettings& decode = {});

/// Share of responses whose think span, judged on its own, names the class the
/// answer gives. Responses missing either part count as inconsistent.
using ThinkJudge = std::function<std::optional<int>(std::span<const TokenId>)>;
double consistency(std::span<const Query> test, const Decoder& decoder, const ThinkJudge& judge);
double consistency(const PolicyParams& params, std::span<const Query> test, const DecodeSettings& decode = {},
                   EvalMode mode = EvalMode::kWithThink);

/// Everything a two-stage run needs besides data.
struct ExperimentConfig {
  PolicyShape shape;
  std::uint64_t init_seed = 0;
  SftConfig sft;
  SftModes sft_modes = SftModes::kBoth;
  GrpoConfig grpo;
  RewardWeights weights;
  DecodeSettings decode;
  QueryOptions query;
};

struct AblationRow {
  std::string name;
  bool sft = true;
  bool correctness = true;
  bool format = true;
  bool validity = true;

  bool uses_rl() const { return correctness || format || validity; }
  RewardWeights weights(const RewardWeights& base) const;
};

/// Rows of the reward ablation: SFT only, RL without SFT, SFT+RL without
/// validity, SFT+RL without format, and the full recipe.
std::vector<AblationRow> default_reward_grid();
std::vector<AblationRow> read_grid(const std::filesystem::path& path);

struct AblationEntry {
  AblationRow row;
  double accuracy = 0.0;
  double format_rate = 0.0;
  double consistency = 0.0;
  bool ok = false;
  std::string error;
};

struct AblationGrid {
  std::vector<AblationEntry> rows;
  /// Set when the SFT-only row scores below the RL-without-SFT row.
  bool sft_inversion = false;
};

/// Trains every row from the same initial parameters (one shared SFT
/// checkpoint) and evaluates all of them on the same test set.
AblationGrid run_ablation_grid(std::span<const AblationRow> rows, std::span<const QARecord> train,
                               std::span<const QARecord> test, const ExperimentConfig& cfg);
void write_ablation_csv(const std::filesystem::path& path, const AblationGrid& grid);

struct ZoomAblation {
  double with_zoom = 0.0;
  double without_zoom = 0.0;
  std::size_t sft_steps = 0;
};

/// Two SFT runs that differ only in whether the zoom entries are present;
/// evaluated without think. `cfg.query.hide_global_intensity` selects the
/// zoom-dependent setting.
ZoomAblation run_zoom_ablation(std::span<const QARecord> train, std::span<const QARecord> test,
                               const ExperimentConfig& cfg);

struct CotComparison {
  EvalReport sft_direct;
  EvalReport sft_forced;
  EvalReport rl_think;
};

CotComparison compare_cot(const PolicyParams& sft_params, const PolicyParams& rl_params,
                          std::span<const Query> test, const DecodeSettings& decode = {});
/// Columns model,protocol,metric,value; the four SFT / SFT+RL accuracy and
/// consistency bars plus the SFT direct-answer accuracy.
void write_cot_csv(const std::filesystem::path& path, const CotComparison& cmp);

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace ctgrpo
