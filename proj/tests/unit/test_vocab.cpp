#include <gtest/gtest.h>

#include <set>

#include "ctgrpo/vocab.hpp"

namespace ctgrpo {
namespace {

TEST(Vocab, SymbolsRoundTrip) {
  std::set<std::string> seen;
  for (TokenId id = 0; id < static_cast<TokenId>(Vocab::size()); ++id) {
    const auto s = Vocab::symbol(id);
    EXPECT_TRUE(seen.insert(s).second) << s;
    EXPECT_EQ(Vocab::parse_symbol(s), id);
  }
  EXPECT_FALSE(Vocab::parse_symbol("nope"));
}

TEST(Vocab, TokenClasses) {
  int classes = 0, evidence = 0, tags = 0;
  for (TokenId id = 0; id < static_cast<TokenId>(Vocab::size()); ++id) {
    classes += Vocab::is_class(id);
    evidence += Vocab::is_evidence(id);
    tags += Vocab::is_tag(id);
  }
  EXPECT_EQ(classes, kNumClasses);
  EXPECT_EQ(evidence, kNumEvidence);
  EXPECT_EQ(tags, 4);
  EXPECT_FALSE(Vocab::contains(-1));
  EXPECT_FALSE(Vocab::contains(30));
}

TEST(Vocab, EvidenceEncodesFeatureAndBucket) {
  for (int k = 0; k < kNumFeatures; ++k) {
    for (bool high : {false, true}) {
      const TokenId t = Vocab::evidence_token(k, high);
      EXPECT_EQ(t, 14 + 2 * k + (high ? 1 : 0));
      EXPECT_EQ(Vocab::evidence_feature(t), k);
      EXPECT_EQ(Vocab::evidence_high(t), high);
    }
  }
}

TEST(Vocab, ClassLabelsAreStableAndDistinct) {
  EXPECT_EQ(class_label(0), "airway abnormalities");
  EXPECT_EQ(class_label(6), "pleural effusion/thickening");
  for (int k = 0; k < kNumClasses; ++k) {
    EXPECT_EQ(class_from_label(class_label(k)), k);
    EXPECT_EQ(Vocab::class_of(Vocab::class_token(k)), k);
  }
  EXPECT_FALSE(class_from_label("pneumothorax"));
}

}  // namespace
}  // namespace ctgrpo
