#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "ctgrpo/error.hpp"
#include "ctgrpo/grpo.hpp"
#include "support.hpp"

namespace ctgrpo {
namespace {

using testing::dense_random_params;
using testing::random_query;
using testing::random_tokens;

TEST(Advantages, HandComputedGroups) {
  const auto zero = compute_advantages(std::vector<double>{4, 4, 4, 4, 4}, 1e-8);
  for (double a : zero) EXPECT_EQ(a, 0.0);

  // mean 3.2, population std 1.6
  const auto a = compute_advantages(std::vector<double>{0, 4, 4, 4, 4}, 1e-8);
  const double s = 1.6 / (1.6 + 1e-8);
  EXPECT_NEAR(a[0], -2.0 * s, 1e-12);
  for (int i = 1; i < 5; ++i) EXPECT_NEAR(a[i], 0.5 * s, 1e-12);
  EXPECT_NEAR(a[0], -2.0, 1e-7);

  const auto b = compute_advantages(std::vector<double>{0, 4}, 1e-8);
  EXPECT_NEAR(b[0], -1.0, 1e-8);
  EXPECT_NEAR(b[1], 1.0, 1e-8);

  EXPECT_THROW(compute_advantages(std::vector<double>{1.0}, 1e-8), InvalidInput);
}

TEST(Advantages, StandardizedForNonDegenerateGroups) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> r(2 + uniform_index(rng, 8));
    for (double& v : r) v = static_cast<double>(uniform_index(rng, 5));
    if (std::all_of(r.begin(), r.end(), [&](double v) { return v == r[0]; })) continue;
    const auto a = compute_advantages(r, 1e-8);
    const double mean = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
    double var = 0.0;
    for (double v : a) var += (v - mean) * (v - mean);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(var / a.size()), 1.0, 1e-6);
  }
}

TEST(KlEstimate, ClosedForms) {
  const std::vector<double> x{-1.0, -2.5, -0.3};
  EXPECT_EQ(kl_estimate(x, x), 0.0);
  const std::vector<double> lp_new{-1.0};
  const std::vector<double> lp_ref{-1.0 + std::log(2.0)};
  EXPECT_NEAR(kl_estimate(lp_new, lp_ref), 1.0 - std::log(2.0), 1e-15);
  // token mean: one shifted token out of two
  EXPECT_NEAR(kl_estimate(std::vector<double>{-1.0, -2.0}, std::vector<double>{-1.0 + std::log(2.0), -2.0}),
              0.5 * (1.0 - std::log(2.0)), 1e-15);
  EXPECT_THROW(kl_estimate(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), InvalidInput);
}

TEST(KlEstimate, NonNegativeUnderRandomPerturbations) {
  Rng rng(11);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> a(1 + uniform_index(rng, 10)), b(a.size());
    const double scale = std::pow(10.0, 4.0 * uniform01(rng) - 3.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = -5.0 * uniform01(rng);
      b[i] = a[i] + scale * standard_normal(rng);
    }
    EXPECT_GE(kl_estimate(a, b), 0.0);
  }
}

// Group of identical single-token responses whose ratio under `new` vs a
// uniform `old` is exactly `ratio` up to rounding.
struct RatioSetup {
  PolicyParams new_params;
  PolicyParams old_params;
  Group group;
};

RatioSetup ratio_setup(double ratio, double advantage) {
  RatioSetup s{PolicyParams{}, PolicyParams{}, {}};
  const double V = static_cast<double>(Vocab::size());
  const double p = ratio / V;  // target probability of EOS
  s.new_params.values()[s.new_params.layout().head_bias + tok::kEos] = std::log(p * (V - 1.0) / (1.0 - p));
  s.group.responses = {Response{{tok::kEos}, {}, true}, Response{{tok::kEos}, {}, true}};
  s.group.advantages = {advantage, advantage};
  return s;
}

TEST(Surrogate, ClipBranchesOnBothAdvantageSigns) {
  GrpoConfig cfg;
  cfg.kl_coeff = 0.0;
  const PolicyParams& ref = PolicyParams{};
  for (double ratio : {0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.3, 2.0}) {
    for (double adv : {1.0, -1.0, 0.5}) {
      auto s = ratio_setup(ratio, adv);
      const auto res = surrogate_objective(s.new_params, s.old_params, ref, s.group, cfg);
      const double clipped = std::clamp(ratio, 0.8, 1.2);
      const double want = std::min(ratio * adv, clipped * adv);
      EXPECT_NEAR(res.objective, want, 1e-12) << "ratio " << ratio << " adv " << adv;
      const bool on_clip = ratio * adv > clipped * adv;
      EXPECT_EQ(res.clip_fraction, on_clip ? 1.0 : 0.0);
      const double gnorm = std::sqrt(std::inner_product(res.gradient.begin(), res.gradient.end(),
                                                        res.gradient.begin(), 0.0));
      if (on_clip)
        EXPECT_EQ(gnorm, 0.0);
      else
        EXPECT_GT(gnorm, 0.0);
    }
  }
  // the two worked cases
  auto up = ratio_setup(1.3, 1.0);
  EXPECT_NEAR(surrogate_objective(up.new_params, up.old_params, ref, up.group, cfg).objective, 1.2, 1e-12);
  auto down = ratio_setup(0.5, -1.0);
  EXPECT_NEAR(surrogate_objective(down.new_params, down.old_params, ref, down.group, cfg).objective, -0.8, 1e-12);
}

Group random_group(std::uint64_t seed, std::size_t n = 5) {
  Group g;
  g.query = random_query(seed);
  Rng rng(seed + 99);
  std::vector<double> rewards;
  for (std::size_t i = 0; i < n; ++i) {
    g.responses.push_back(Response{random_tokens(2 + uniform_index(rng, 6), Vocab::size(), seed * 31 + i), {}, false});
    rewards.push_back(static_cast<double>(uniform_index(rng, 5)));
  }
  rewards[0] = 4.0;
  rewards[1] = 0.0;
  g.advantages = compute_advantages(rewards, 1e-8);
  return g;
}

PolicyParams perturbed(const PolicyParams& base, std::uint64_t seed, double scale) {
  PolicyParams p = base;
  Rng rng(seed);
  for (double& v : p.values()) v += scale * standard_normal(rng);
  return p;
}

TEST(Surrogate, OnPolicyObjectiveIsMeanAdvantage) {
  GrpoConfig cfg;
  cfg.kl_coeff = 0.0;
  const auto p = dense_random_params({Vocab::size(), 8, kConditioningDim}, 1);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto g = random_group(s);
    const auto res = surrogate_objective(p, p, p, g, cfg);
    EXPECT_NEAR(res.objective, 0.0, 1e-12);
    EXPECT_EQ(res.mean_abs_ratio_dev, 0.0);
  }
}

TEST(Surrogate, ReducesToImportanceWeightedMean) {
  GrpoConfig cfg;
  cfg.kl_coeff = 0.0;
  cfg.clip_delta = std::numeric_limits<double>::infinity();
  const PolicyShape shape{Vocab::size(), 8, kConditioningDim};
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto old_p = dense_random_params(shape, s, 0.4);
    const auto new_p = perturbed(old_p, s + 1000, 0.1);
    const auto g = random_group(s);
    double want = 0.0;
    for (std::size_t i = 0; i < g.responses.size(); ++i) {
      const double rho = std::exp(logprob(new_p, g.query, g.responses[i]).total -
                                  logprob(old_p, g.query, g.responses[i]).total);
      want += rho * g.advantages[i] / static_cast<double>(g.responses.size());
    }
    EXPECT_NEAR(surrogate_objective(new_p, old_p, old_p, g, cfg).objective, want, 1e-12);
  }
}

TEST(Surrogate, KlIsZeroWhenNewEqualsReference) {
  GrpoConfig cfg;
  const auto p = dense_random_params({Vocab::size(), 8, kConditioningDim}, 4);
  const auto old_p = perturbed(p, 5, 0.05);
  const auto res = surrogate_objective(p, old_p, p, random_group(3), cfg);
  EXPECT_EQ(res.mean_kl, 0.0);
}

TEST(Surrogate, GradientMatchesFiniteDifferences) {
  const PolicyShape shape{Vocab::size(), 16, kConditioningDim};
  ASSERT_LE(PolicyParams(shape).size(), 2000u);
  const double eps = 1e-5;
  for (bool token_level : {false, true}) {
    GrpoConfig cfg;
    cfg.kl_coeff = 0.3;
    cfg.token_level_ratio = token_level;
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto ref = dense_random_params(shape, 500 + s, 0.4);
      const auto old_p = perturbed(ref, 600 + s, 0.03);
      auto new_p = perturbed(old_p, 700 + s, 0.03);
      const auto g = random_group(800 + s);
      const auto res = surrogate_objective(new_p, old_p, ref, g, cfg);
      double worst = 0.0;
      for (std::size_t i = 0; i < new_p.size(); ++i) {
        const double keep = new_p.values()[i];
        new_p.values()[i] = keep + eps;
        const double up = surrogate_objective(new_p, old_p, ref, g, cfg).objective;
        new_p.values()[i] = keep - eps;
        const double down = surrogate_objective(new_p, old_p, ref, g, cfg).objective;
        new_p.values()[i] = keep;
        const double fd = (up - down) / (2.0 * eps);
        const double scale = std::max({std::abs(fd), std::abs(res.gradient[i]), 1e-6});
        worst = std::max(worst, std::abs(fd - res.gradient[i]) / scale);
      }
      EXPECT_LT(worst, 1e-4) << "group " << s << (token_level ? " token-level" : "");
    }
  }
}

TEST(Surrogate, NonFiniteRatioReportsResponseIndex) {
  GrpoConfig cfg;
  PolicyParams new_p;
  new_p.values()[new_p.layout().head_bias + tok::kEos] = 800.0;
  PolicyParams old_p;
  old_p.values()[old_p.layout().head_bias + tok::kEos] = -800.0;
  Group g;
  g.responses = {Response{{tok::kPad}, {}, false}, Response{{tok::kEos}, {}, true}};
  g.advantages = {1.0, -1.0};
  try {
    surrogate_objective(new_p, old_p, PolicyParams{}, g, cfg);
    FAIL() << "expected NumericOverflow";
  } catch (const NumericOverflow& e) {
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(Surrogate, ReferenceCannotBeOptimized) {
  const auto ref = PolicyParams{}.with_role(ParamRole::kReference);
  EXPECT_THROW(surrogate_objective(ref, PolicyParams{}, ref, random_group(1), GrpoConfig{}), RoleViolation);
}

std::vector<Query> some_queries(std::size_t n, std::uint64_t seed) {
  std::vector<Query> qs;
  for (std::size_t i = 0; i < n; ++i) {
    auto q = random_query(seed + i);
    q.mode = PromptMode::kWithThink;
    q.gt_class = static_cast<int>(i % kNumClasses);
    qs.push_back(q);
  }
  return qs;
}

TEST(GrpoStep, ZeroVarianceGroupsLeaveParamsAtReference) {
  // Every sample is [EOS]: identical rewards, zero advantages, new = ref.
  PolicyParams init;
  init.values()[init.layout().head_bias + tok::kEos] = 1e6;
  PolicyParams new_p = init;
  PolicyParams old_p = init.with_role(ParamRole::kOldSnapshot);
  const PolicyParams ref = init.with_role(ParamRole::kReference);
  GrpoConfig cfg;
  cfg.freeze = FreezeMask::none();
  const auto m = grpo_step(new_p, old_p, ref, some_queries(4, 1), cfg, RewardWeights{});
  EXPECT_TRUE(bit_identical(new_p, init));
  EXPECT_EQ(m.objective, 0.0);
  EXPECT_EQ(m.mean_reward, 0.0);
}

TEST(GrpoStep, LargeKlCoefficientShrinksDisplacement) {
  const PolicyShape shape{Vocab::size(), 8, kConditioningDim};
  const auto ref = dense_random_params(shape, 21, 0.5).with_role(ParamRole::kReference);
  const auto start = perturbed(ref.with_role(ParamRole::kTrainable), 22, 0.05);
  auto displacement = [&](double kl) {
    GrpoConfig cfg;
    cfg.kl_coeff = kl;
    cfg.lr = 1e-6;
    cfg.seed = 3;
    cfg.freeze = FreezeMask::none();
    PolicyParams new_p = start;
    PolicyParams old_p = start.with_role(ParamRole::kOldSnapshot);
    grpo_step(new_p, old_p, ref, some_queries(6, 40), cfg, RewardWeights{});
    double d = 0.0;
    for (std::size_t i = 0; i < new_p.size(); ++i) d += std::pow(new_p.values()[i] - ref.values()[i], 2);
    return std::sqrt(d);
  };
  EXPECT_LT(displacement(1e4), displacement(0.0));
}

TEST(GrpoStep, RefreshesSnapshotAndRespectsFreeze) {
  const auto init = PolicyParams::random_init({Vocab::size(), 8, kConditioningDim}, 2);
  PolicyParams new_p = init;
  PolicyParams old_p = init.with_role(ParamRole::kOldSnapshot);
  const PolicyParams ref = init.with_role(ParamRole::kReference);
  const PolicyParams ref_copy = ref;
  GrpoConfig cfg;
  cfg.lr = 0.5;
  grpo_step(new_p, old_p, ref, some_queries(8, 5), cfg, RewardWeights{});
  EXPECT_TRUE(std::equal(new_p.values().begin(), new_p.values().end(), old_p.values().begin()));
  EXPECT_TRUE(bit_identical(ref, ref_copy));
  const auto e0 = init.group(ParamGroup::kEmbedding);
  const auto e1 = new_p.group(ParamGroup::kEmbedding);
  EXPECT_TRUE(std::equal(e0.begin(), e0.end(), e1.begin()));
}

TEST(GrpoTrain, DeterministicAndZeroStepsIsIdentity) {
  const auto init = PolicyParams::random_init({Vocab::size(), 8, kConditioningDim}, 6);
  const auto data = some_queries(10, 70);
  GrpoConfig cfg;
  cfg.steps = 0;
  EXPECT_TRUE(bit_identical(grpo_train(init, data, cfg, RewardWeights{}).params, init));

  cfg.steps = 5;
  cfg.seed = 9;
  cfg.lr = 0.1;
  const auto a = grpo_train(init, data, cfg, RewardWeights{});
  cfg.threads = 3;
  const auto b = grpo_train(init, data, cfg, RewardWeights{});
  EXPECT_EQ(a.history, b.history);
  EXPECT_TRUE(bit_identical(a.params, b.params));
  ASSERT_EQ(a.history.size(), 5u);
  for (const auto& m : a.history) {
    EXPECT_GE(m.mean_kl, 0.0);
    EXPECT_GE(m.clip_fraction, 0.0);
    EXPECT_LE(m.clip_fraction, 1.0);
  }
}

TEST(GrpoConfig, Validation) {
  GrpoConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.group_size = 1;
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg = {};
  cfg.clip_delta = 1.0;
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg = {};
  cfg.kl_coeff = -0.1;
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg = {};
  cfg.adv_epsilon = 0.0;
  EXPECT_THROW(cfg.validate(), InvalidInput);
}

}  // namespace
}  // namespace ctgrpo
