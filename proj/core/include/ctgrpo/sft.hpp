#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ctgrpo/policy.hpp"

namespace ctgrpo {

/// Which parameter groups an update may touch.
struct FreezeMask {
  std::array<bool, kNumParamGroups> frozen{};

  static FreezeMask none() { return {}; }
  static FreezeMask all() { return {{true, true, true, true}}; }
  /// Stage-I default: the embedding table stays fixed, the rest adapts.
  static FreezeMask embedding_only() { return {{true, false, false, false}}; }

  bool is_frozen(ParamGroup g) const { return frozen[static_cast<int>(g)]; }
};

/// Zeroes gradient entries of frozen groups.
void apply_freeze(const PolicyParams& params, const FreezeMask& mask, std::span<double> grad);

struct SftExample {
  Query query;
  std::vector<TokenId> gold;
};

/// Mean per-token cross-entropy of the gold responses.
double cross_entropy(const PolicyParams& params, std::span<const SftExample> batch);

/// One gradient-descent step on mean token cross-entropy. Returns the loss
/// before the step. Frozen groups are left bit-unchanged.
double sft_step(PolicyParams& params, std::span<const SftExample> batch, double lr,
                const FreezeMask& freeze);

/// Linear warmup to `peak` over round(warmup_ratio * total) steps, then cosine
/// decay to zero at the final step. Steps are 1-based.
class WarmupCosine {
 public:
  WarmupCosine(double peak, std::size_t total_steps, double warmup_ratio);
  double at(std::size_t step) const;
  std::size_t warmup_steps() const { return warmup_; }
  std::size_t total_steps() const { return total_; }

 private:
  double peak_;
  std::size_t total_;
  std::size_t warmup_;
};

struct SftConfig {
  int epochs = 2;
  double lr = 1.0;
  double warmup_ratio = 0.1;
  int batch_size = 16;
  std::uint64_t seed = 0;
  FreezeMask freeze = FreezeMask::embedding_only();

  void validate() const;
};

struct SftStepRecord {
  std::size_t step = 0;
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct SftReport {
  std::vector<double> epoch_loss;  // mean training loss per epoch
  std::size_t steps = 0;
};

using SftObserver = std::function<void(const SftStepRecord&)>;

SftReport sft_train(PolicyParams& params, std::span<const SftExample> dataset, const SftConfig& cfg,
                    const SftObserver& observer = {});

}  // namespace ctgrpo
