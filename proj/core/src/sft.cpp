#include "ctgrpo/sft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ctgrpo/error.hpp"
#include "ctgrpo/rng.hpp"

namespace ctgrpo {

void apply_freeze(const PolicyParams& params, const FreezeMask& mask, std::span<double> grad) {
  for (int g = 0; g < kNumParamGroups; ++g) {
    if (!mask.frozen[g]) continue;
    auto [lo, hi] = params.layout().group_range(static_cast<ParamGroup>(g));
    std::fill(grad.begin() + static_cast<std::ptrdiff_t>(lo), grad.begin() + static_cast<std::ptrdiff_t>(hi), 0.0);
  }
}

double cross_entropy(const PolicyParams& params, std::span<const SftExample> batch) {
  if (batch.empty()) throw EmptyInput("cross-entropy of an empty batch");
  double nll = 0.0;
  std::size_t count = 0;
  for (const auto& ex : batch) {
    nll -= logprob(params, ex.query, ex.gold).total;
    count += ex.gold.size();
  }
  return nll / static_cast<double>(count);
}

double sft_step(PolicyParams& params, std::span<const SftExample> batch, double lr,
                const FreezeMask& freeze) {
  if (batch.empty()) throw EmptyInput("sft_step needs a non-empty batch");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidInput("learning rate must be finite and >= 0");
  if (params.role() != ParamRole::kTrainable) throw RoleViolation("sft_step updates trainable params only");

  std::size_t count = 0;
  for (const auto& ex : batch) count += ex.gold.size();
  const double scale = 1.0 / static_cast<double>(count);

  std::vector<double> grad(params.size(), 0.0);
  double nll = 0.0;
  for (const auto& ex : batch) {
    std::vector<double> w(ex.gold.size(), scale);
    const auto lp = accumulate_weighted_grad(params, ex.query, ex.gold, w, grad);
    for (double v : lp) nll -= v;
  }
  apply_freeze(params, freeze, grad);
  // grad holds d(mean log-likelihood); descending the loss means ascending it.
  if (lr > 0.0) {
    auto vals = params.values();
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] += lr * grad[i];
  }
  return nll * scale;
}

WarmupCosine::WarmupCosine(double peak, std::size_t total_steps, double warmup_ratio)
    : peak_(peak), total_(total_steps) {
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw InvalidInput("warmup ratio must be in [0, 1)");
  warmup_ = static_cast<std::size_t>(std::llround(warmup_ratio * static_cast<double>(total_steps)));
}

double WarmupCosine::at(std::size_t step) const {
  if (total_ == 0) return 0.0;
  step = std::clamp<std::size_t>(step, 1, total_);
  if (warmup_ > 0 && step <= warmup_)
    return peak_ * static_cast<double>(step) / static_cast<double>(warmup_);
  if (total_ == warmup_) return peak_;
  const double progress =
      static_cast<double>(step - warmup_) / static_cast<double>(total_ - warmup_);
  return peak_ * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void SftConfig::validate() const {
  if (epochs < 0) throw InvalidInput("sft.epochs must be >= 0");
  if (!(lr > 0.0)) throw InvalidInput("sft.lr must be > 0");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw InvalidInput("sft.warmup must be in [0, 1)");
  if (batch_size < 1) throw InvalidInput("sft.batch must be >= 1");
}

SftReport sft_train(PolicyParams& params, std::span<const SftExample> dataset, const SftConfig& cfg,
                    const SftObserver& observer) {
  cfg.validate();
  if (dataset.empty()) throw EmptyInput("sft_train needs a non-empty dataset");
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t per_epoch = (dataset.size() + batch - 1) / batch;
  const WarmupCosine schedule(cfg.lr, per_epoch * static_cast<std::size_t>(cfg.epochs), cfg.warmup_ratio);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<SftExample> mb;
  SftReport report;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed({cfg.seed, static_cast<std::uint64_t>(epoch), 0x736674ULL}));
    shuffle(std::span<std::size_t>(order), rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      mb.clear();
      for (std::size_t i = b * batch; i < std::min(dataset.size(), (b + 1) * batch); ++i)
        mb.push_back(dataset[order[i]]);
      ++report.steps;
      const double lr = schedule.at(report.steps);
      const double loss = sft_step(params, mb, lr, cfg.freeze);
      loss_sum += loss;
      if (observer) observer({report.steps, epoch, loss, lr});
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(per_epoch));
  }
  return report;
}

}  // namespace ctgrpo
