#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ctgrpo/policy.hpp"
#include "ctgrpo/reward.hpp"
#include "ctgrpo/sft.hpp"

namespace ctgrpo {

struct GrpoConfig {
  int group_size = 5;
  double clip_delta = 0.2;
  double kl_coeff = 0.04;
  double lr = 0.02;
  int steps = 1500;
  double adv_epsilon = 1e-8;
  int queries_per_step = 16;
  std::uint64_t seed = 0;
  /// Per-token importance ratios instead of one ratio per response.
  bool token_level_ratio = false;
  /// Gradient steps per sampling round; the sampling snapshot is refreshed after them.
  int inner_updates = 1;
  int max_len = 24;
  double temperature = 1.0;
  FreezeMask freeze = FreezeMask::embedding_only();
  std::size_t threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

struct Group {
  Query query;
  std::vector<Response> responses;
  std::vector<RewardBreakdown> rewards;
  std::vector<double> advantages;
};

struct StepMetrics {
  std::size_t step = 0;
  double objective = 0.0;
  double mean_reward = 0.0;
  double format_rate = 0.0;
  double accuracy = 0.0;
  double mean_kl = 0.0;
  double mean_abs_ratio_dev = 0.0;
  double clip_fraction = 0.0;

  friend bool operator==(const StepMetrics&, const StepMetrics&) = default;
};

/// Group-standardized advantages (r - mean) / (popstd + eps). A group whose
/// rewards are all equal gets exactly zero advantages.
std::vector<double> compute_advantages(std::span<const double> rewards, double adv_epsilon);

/// Token-mean k3 estimate of KL(new || ref): mean(exp(d) - d - 1), d = ref - new.
double kl_estimate(std::span<const double> logp_new, std::span<const double> logp_ref);

struct SurrogateResult {
  double objective = 0.0;
  std::vector<double> gradient;  // dJ/d(new), every group included
  double mean_kl = 0.0;
  double mean_abs_ratio_dev = 0.0;
  double clip_fraction = 0.0;
};

/// Clipped surrogate minus the KL penalty for one group, averaged over its
/// responses, with its gradient w.r.t. `new_params`. The min() picks its
/// active branch; ties go to the unclipped term.
SurrogateResult surrogate_objective(const PolicyParams& new_params, const PolicyParams& old_params,
                                    const PolicyParams& ref_params, const Group& group,
                                    const GrpoConfig& cfg);

/// Samples a scored group from `old_params` with counter-derived seeds.
Group rollout_group(const PolicyParams& old_params, const Query& query, const GrpoConfig& cfg,
                    const RewardWeights& weights, std::size_t step, std::size_t query_index);

/// One GRPO iteration over `queries`; afterwards `old_params` mirrors `new_params`.
StepMetrics grpo_step(PolicyParams& new_params, PolicyParams& old_params, const PolicyParams& ref_params,
                      std::span<const Query> queries, const GrpoConfig& cfg,
                      const RewardWeights& weights, std::size_t step = 1);

/// Mean composite reward of `samples` sampled responses per query, with
/// seeds fixed by `seed` so two checkpoints are compared on the same draws.
double mean_sampled_reward(const PolicyParams& params, std::span<const Query> queries, const GrpoConfig& cfg,
                           const RewardWeights& weights, int samples, std::uint64_t seed);

struct GrpoResult {
  PolicyParams params;
  std::vector<StepMetrics> history;
};

using GrpoObserver = std::function<void(const StepMetrics&)>;

/// Runs cfg.steps iterations. The reference is a frozen copy of `init`.
GrpoResult grpo_train(const PolicyParams& init, std::span<const Query> dataset, const GrpoConfig& cfg,
                      const RewardWeights& weights, const GrpoObserver& observer = {});

}  // namespace ctgrpo
