#include <gtest/gtest.h>

#include "ctgrpo/error.hpp"
#include "ctgrpo/records.hpp"
#include "ctgrpo/sft.hpp"
#include "support.hpp"

namespace ctgrpo {
namespace {

SftExample example(std::uint64_t seed) {
  SftExample ex;
  ex.query = testing::random_query(seed);
  ex.query.mode = PromptMode::kWithThink;
  FeatureVector f{};
  std::copy(ex.query.features.begin(), ex.query.features.end(), f.begin());
  ex.query.gt_class = classify_features(f);
  ex.gold = gold_tokens(f, ex.query.gt_class, PromptMode::kWithThink);
  return ex;
}

TEST(SftStep, ZeroLearningRateLeavesParams) {
  auto p = PolicyParams::random_init({}, 1);
  const auto before = p;
  const std::vector<SftExample> batch{example(1), example(2)};
  const double loss = sft_step(p, batch, 0.0, FreezeMask::none());
  EXPECT_TRUE(bit_identical(p, before));
  EXPECT_NEAR(loss, cross_entropy(before, batch), 1e-12);
  EXPECT_GT(loss, 0.0);
}

TEST(SftStep, OneStepOnRepeatedExampleLowersItsLoss) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto p = PolicyParams::random_init({}, 100 + s);
    const std::vector<SftExample> batch(4, example(s));
    const double before = sft_step(p, batch, 1e-2, FreezeMask::embedding_only());
    EXPECT_LT(cross_entropy(p, batch), before);
  }
}

TEST(SftStep, FreezeMasks) {
  const std::vector<SftExample> batch{example(3)};
  auto p = PolicyParams::random_init({}, 3);
  const auto before = p;
  sft_step(p, batch, 0.5, FreezeMask::all());
  EXPECT_TRUE(bit_identical(p, before));

  sft_step(p, batch, 0.5, FreezeMask::embedding_only());
  const auto e0 = before.group(ParamGroup::kEmbedding);
  const auto e1 = p.group(ParamGroup::kEmbedding);
  EXPECT_TRUE(std::equal(e0.begin(), e0.end(), e1.begin()));
  const auto h0 = before.group(ParamGroup::kHead);
  const auto h1 = p.group(ParamGroup::kHead);
  EXPECT_FALSE(std::equal(h0.begin(), h0.end(), h1.begin()));
}

TEST(SftStep, Errors) {
  auto p = PolicyParams::random_init({}, 3);
  EXPECT_THROW(sft_step(p, {}, 0.1, FreezeMask::none()), EmptyInput);
  const std::vector<SftExample> batch{example(1)};
  EXPECT_THROW(sft_step(p, batch, -1.0, FreezeMask::none()), InvalidInput);
  auto ref = p.with_role(ParamRole::kReference);
  EXPECT_THROW(sft_step(ref, batch, 0.1, FreezeMask::none()), RoleViolation);
}

TEST(WarmupCosine, ScheduleShape) {
  const WarmupCosine s(0.3, 100, 0.1);
  EXPECT_EQ(s.warmup_steps(), 10u);
  EXPECT_DOUBLE_EQ(s.at(10), 0.3);
  EXPECT_DOUBLE_EQ(s.at(1), 0.03);
  EXPECT_LE(s.at(100), 0.01 * 0.3);
  for (std::size_t t = 11; t <= 100; ++t) EXPECT_LE(s.at(t), s.at(t - 1));
  for (std::size_t t = 2; t <= 10; ++t) EXPECT_GT(s.at(t), s.at(t - 1));
}

TEST(SftTrain, SecondEpochLossNotAboveFirst) {
  const auto records = testing::small_dataset(40, 8);
  const auto train = select_split(records, Split::kTrain);
  const auto examples = sft_examples(train, SftModes::kBoth);
  ASSERT_FALSE(examples.empty());
  auto p = PolicyParams::random_init({}, 2);
  SftConfig cfg;
  cfg.lr = 0.3;
  std::size_t observed = 0;
  const auto rep = sft_train(p, examples, cfg, [&](const SftStepRecord& r) {
    ++observed;
    EXPECT_GE(r.epoch, 1);
    EXPECT_GT(r.loss, 0.0);
  });
  ASSERT_EQ(rep.epoch_loss.size(), 2u);
  EXPECT_LE(rep.epoch_loss[1], rep.epoch_loss[0]);
  EXPECT_EQ(rep.steps, observed);
  EXPECT_EQ(rep.steps, 2 * ((examples.size() + 15) / 16));
  EXPECT_THROW(sft_train(p, {}, cfg), EmptyInput);
}

}  // namespace
}  // namespace ctgrpo
