#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>

#include "ctgrpo/error.hpp"
#include "ctgrpo/policy.hpp"
#include "support.hpp"

namespace ctgrpo {
namespace {

using testing::dense_random_params;
using testing::random_query;
using testing::random_tokens;

// Straight-from-the-definition forward pass: every context is rebuilt from
// scratch and the softmax is evaluated without log-sum-exp.
double softmax_chain(const PolicyParams& p, const Query& q, const std::vector<TokenId>& resp) {
  const ParamLayout& L = p.layout();
  const std::size_t d = L.shape.dim, V = L.shape.vocab, F = L.shape.input;
  const auto w = p.values();
  const auto c = q.conditioning();
  double total = 0.0;
  bool seen_eos = false;
  for (std::size_t k = 0; k < resp.size(); ++k) {
    // pads after EOS contribute nothing
    const bool masked = seen_eos && resp[k] == tok::kPad;
    seen_eos = seen_eos || resp[k] == tok::kEos;
    if (masked) continue;
    std::vector<TokenId> ctx = q.prompt;
    ctx.insert(ctx.end(), resp.begin(), resp.begin() + static_cast<long>(k));
    std::vector<std::vector<double>> xs;
    for (std::size_t j = 0; j < ctx.size(); ++j) {
      std::vector<double> x(d);
      for (std::size_t r = 0; r < d; ++r) {
        x[r] = w[L.embedding + ctx[j] * d + r];
        if (j == 0) {
          x[r] += w[L.query_bias + r];
          for (std::size_t i = 0; i < F; ++i) x[r] += w[L.query_weight + r * F + i] * c[i];
        }
      }
      xs.push_back(x);
    }
    std::vector<double> m(d, 0.0);
    for (const auto& x : xs)
      for (std::size_t r = 0; r < d; ++r) m[r] += x[r] / static_cast<double>(xs.size());
    std::vector<double> h(d);
    for (std::size_t r = 0; r < d; ++r) {
      double a = w[L.mix_bias + r];
      for (std::size_t i = 0; i < d; ++i)
        a += w[L.mix_pool + r * d + i] * m[i] + w[L.mix_current + r * d + i] * xs.back()[i];
      h[r] = std::tanh(a);
    }
    std::vector<double> e(V);
    double z = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      double a = w[L.head_bias + v];
      for (std::size_t i = 0; i < d; ++i) a += w[L.head + v * d + i] * h[i];
      e[v] = std::exp(a);
      z += e[v];
    }
    total += std::log(e[static_cast<std::size_t>(resp[k])] / z);
  }
  return total;
}

TEST(Logprob, UniformPolicySingleToken) {
  const PolicyParams zero;
  const Query q;
  const std::vector<TokenId> resp{tok::kEos};
  EXPECT_NEAR(logprob(zero, q, resp).total, -std::log(30.0), 1e-12);
}

TEST(Logprob, RepeatedEvaluationIsBitIdentical) {
  const auto p = PolicyParams::random_init({}, 7);
  const auto q = random_query(3);
  const auto resp = random_tokens(9, Vocab::size(), 11);
  const auto a = logprob(p, q, resp);
  const auto b = logprob(p, q, resp);
  EXPECT_EQ(std::memcmp(&a.total, &b.total, sizeof(double)), 0);
  EXPECT_EQ(a.per_token, b.per_token);
}

TEST(Logprob, MatchesSoftmaxChainOracle) {
  const PolicyShape shape{8, 4, kConditioningDim};
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto p = dense_random_params(shape, 100 + s, 0.8);
    const auto q = random_query(200 + s);
    const auto resp = random_tokens(5, 8, 300 + s);
    const auto lp = logprob(p, q, resp);
    EXPECT_NEAR(lp.total, softmax_chain(p, q, resp), 1e-12) << "seed " << s;
    EXPECT_NEAR(lp.total, std::accumulate(lp.per_token.begin(), lp.per_token.end(), 0.0), 1e-12);
  }
}

TEST(Logprob, RejectsUnknownTokensAndEmptyResponses) {
  const PolicyParams p;
  const Query q;
  const std::vector<TokenId> bad{3, 30};
  EXPECT_THROW(logprob(p, q, bad), InvalidInput);
  EXPECT_THROW(logprob(p, q, std::vector<TokenId>{}), InvalidInput);
  EXPECT_THROW(grad_logprob(p, q, bad), InvalidInput);
}

TEST(Logprob, TrailingPadsAfterEosAreMasked) {
  const auto p = PolicyParams::random_init({}, 5);
  const auto q = random_query(5);
  const std::vector<TokenId> core{tok::kThinkOpen, 14, tok::kEos};
  std::vector<TokenId> padded = core;
  padded.insert(padded.end(), 4, tok::kPad);
  const auto a = logprob(p, q, core);
  const auto b = logprob(p, q, padded);
  EXPECT_EQ(a.total, b.total);
  for (std::size_t k = core.size(); k < padded.size(); ++k) EXPECT_EQ(b.per_token[k], 0.0);
  EXPECT_EQ(grad_logprob(p, q, core), grad_logprob(p, q, padded));
}

TEST(Policy, ProbabilitiesSumToOne) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto p = dense_random_params({}, s, 1.5);
    const auto q = random_query(s);
    const auto prefix = random_tokens(s % 10, Vocab::size(), s + 1000);
    const auto probs = next_token_distribution(p, q, prefix);
    EXPECT_NEAR(std::accumulate(probs.begin(), probs.end(), 0.0), 1.0, 1e-9);
  }
}

// Log-probabilities of long responses reach ~ -20, so central differences at
// eps = 1e-5 carry ~1e-10 of rounding; the floor keeps near-zero entries fair.
double max_rel_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-5});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

TEST(GradLogprob, MatchesCentralDifferences) {
  // d=16 keeps the policy at 1710 parameters.
  const PolicyShape shape{Vocab::size(), 16, kConditioningDim};
  ASSERT_LE(PolicyParams(shape).size(), 2000u);
  const double eps = 1e-5;
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto p = dense_random_params(shape, 40 + s, 0.4);
    const auto q = random_query(60 + s);
    const auto resp = random_tokens(3 + s % 6, Vocab::size(), 80 + s);
    const auto g = grad_logprob(p, q, resp);
    std::vector<double> fd(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p.values()[i];
      p.values()[i] = keep + eps;
      const double up = logprob(p, q, resp).total;
      p.values()[i] = keep - eps;
      const double down = logprob(p, q, resp).total;
      p.values()[i] = keep;
      fd[i] = (up - down) / (2.0 * eps);
    }
    EXPECT_LT(max_rel_error(g, fd), 1e-4) << "triple " << s;
  }
}

TEST(GradLogprob, SmallPolicyFiniteDifferences) {
  const PolicyShape shape{Vocab::size(), 4, kConditioningDim};
  auto p = dense_random_params(shape, 1, 0.7);
  const auto q = random_query(2);
  const auto resp = random_tokens(7, Vocab::size(), 3);
  const auto g = grad_logprob(p, q, resp);
  const double eps = 1e-5;
  std::vector<double> fd(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p.values()[i];
    p.values()[i] = keep + eps;
    const double up = logprob(p, q, resp).total;
    p.values()[i] = keep - eps;
    const double down = logprob(p, q, resp).total;
    p.values()[i] = keep;
    fd[i] = (up - down) / (2.0 * eps);
  }
  EXPECT_LT(max_rel_error(g, fd), 1e-4);
}

TEST(GradLogprob, ReferenceRoleIsRejected) {
  const auto ref = PolicyParams::random_init({}, 1).with_role(ParamRole::kReference);
  const Query q;
  const std::vector<TokenId> resp{tok::kEos};
  EXPECT_THROW(grad_logprob(ref, q, resp), RoleViolation);
}

TEST(Sample, HugeEosLogitStopsImmediately) {
  PolicyParams p;
  p.values()[p.layout().head_bias + tok::kEos] = 1e6;
  SampleOptions o;
  o.seed = 42;
  const auto r = sample(p, Query{}, o);
  ASSERT_EQ(r.tokens, std::vector<TokenId>{tok::kEos});
  EXPECT_TRUE(r.terminated);
}

TEST(Sample, SameSeedSameResponse) {
  const auto p = PolicyParams::random_init({}, 9);
  const auto q = random_query(9);
  SampleOptions o;
  o.seed = 1234;
  EXPECT_EQ(sample(p, q, o), sample(p, q, o));
}

TEST(Sample, StoredLogprobsMatchReevaluation) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto p = dense_random_params({}, s, 0.6);
    const auto q = random_query(s + 7);
    SampleOptions o;
    o.seed = s;
    o.max_len = 12;
    const auto r = sample(p, q, o);
    ASSERT_FALSE(r.tokens.empty());
    EXPECT_LE(r.tokens.size(), 12u);
    EXPECT_EQ(logprob(p, q, r).per_token, r.logprobs);
  }
}

TEST(Sample, EmpiricalFrequenciesMatchDistribution) {
  const PolicyShape shape{3, 4, kConditioningDim};
  PolicyParams p(shape);
  const std::array<double, 3> probs{0.2, 0.3, 0.5};
  for (int v = 0; v < 3; ++v) p.values()[p.layout().head_bias + v] = std::log(probs[v]);
  std::array<int, 3> counts{};
  const int n = 10000;
  SampleOptions o;
  o.max_len = 1;
  for (int i = 0; i < n; ++i) {
    o.seed = derive_seed({77, static_cast<std::uint64_t>(i)});
    ++counts[sample(p, Query{}, o).tokens.at(0)];
  }
  double chi2 = 0.0;
  for (int v = 0; v < 3; ++v) {
    EXPECT_NEAR(counts[v] / static_cast<double>(n), probs[v], 0.02);
    const double e = n * probs[v];
    chi2 += (counts[v] - e) * (counts[v] - e) / e;
  }
  // 99.9th percentile of chi-square with 2 degrees of freedom.
  EXPECT_LT(chi2, 13.82);
}

TEST(Sample, ForcedPrefixIsEmittedFirst) {
  const auto p = PolicyParams::random_init({}, 3);
  SampleOptions o;
  o.greedy = true;
  o.forced_prefix = {tok::kThinkOpen, 15};
  const auto r = sample(p, random_query(1), o);
  ASSERT_GE(r.tokens.size(), 2u);
  EXPECT_EQ(r.tokens[0], tok::kThinkOpen);
  EXPECT_EQ(r.tokens[1], 15);
}

TEST(Sample, RejectsZeroMaxLen) {
  SampleOptions o;
  o.max_len = 0;
  EXPECT_THROW(sample(PolicyParams{}, Query{}, o), InvalidInput);
}

TEST(Params, RandomInitIsSeedDeterministic) {
  EXPECT_TRUE(bit_identical(PolicyParams::random_init({}, 5), PolicyParams::random_init({}, 5)));
  EXPECT_FALSE(bit_identical(PolicyParams::random_init({}, 5), PolicyParams::random_init({}, 6)));
}

TEST(Params, GroupsTileTheParameterVector) {
  const PolicyParams p;
  std::size_t covered = 0;
  for (int g = 0; g < kNumParamGroups; ++g) covered += p.group(static_cast<ParamGroup>(g)).size();
  EXPECT_EQ(covered, p.size());
  EXPECT_EQ(p.group(ParamGroup::kEmbedding).size(), Vocab::size() * 32);
}

TEST(Query, ConditioningCarriesModeBit) {
  Query q;
  q.features[2] = 0.5;
  q.zoom[1] = -0.25;
  q.mode = PromptMode::kWithoutThink;
  auto c = q.conditioning();
  EXPECT_EQ(c[2], 0.5);
  EXPECT_EQ(c[kNumFeatures + 1], -0.25);
  EXPECT_EQ(c.back(), 0.0);
  q.mode = PromptMode::kWithThink;
  EXPECT_EQ(q.conditioning().back(), 1.0);
}

}  // namespace
}  // namespace ctgrpo
