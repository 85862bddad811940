#include "ctgrpo/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctgrpo/error.hpp"
#include "ctgrpo/parallel.hpp"
#include "ctgrpo/rng.hpp"

namespace ctgrpo {

void GrpoConfig::validate() const {
  if (group_size < 2) throw InvalidInput("grpo.group_size must be >= 2");
  if (!(clip_delta > 0.0 && clip_delta < 1.0)) throw InvalidInput("grpo.clip_delta must be in (0, 1)");
  if (!(kl_coeff >= 0.0) || !std::isfinite(kl_coeff)) throw InvalidInput("grpo.kl_coeff must be >= 0");
  if (!(adv_epsilon > 0.0)) throw InvalidInput("grpo.adv_epsilon must be > 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidInput("grpo.lr must be finite and >= 0");
  if (steps < 0) throw InvalidInput("grpo.steps must be >= 0");
  if (queries_per_step < 1) throw InvalidInput("grpo.queries_per_step must be >= 1");
  if (inner_updates < 1) throw InvalidInput("grpo.inner_updates must be >= 1");
  if (max_len < 1) throw InvalidInput("grpo.max_len must be >= 1");
  if (!(temperature > 0.0)) throw InvalidInput("grpo.temperature must be > 0");
}

std::vector<double> compute_advantages(std::span<const double> rewards, double adv_epsilon) {
  if (rewards.size() < 2) throw InvalidInput("advantages need a group of at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  std::vector<double> adv(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; }))
    return adv;
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / (sd + adv_epsilon);
  return adv;
}

double kl_estimate(std::span<const double> logp_new, std::span<const double> logp_ref) {
  if (logp_new.size() != logp_ref.size()) throw InvalidInput("kl_estimate: length mismatch");
  if (logp_new.empty()) throw InvalidInput("kl_estimate: empty input");
  double acc = 0.0;
  for (std::size_t t = 0; t < logp_new.size(); ++t) {
    const double delta = logp_ref[t] - logp_new[t];
    // expm1 keeps the estimate non-negative even when delta is tiny.
    acc += std::expm1(delta) - delta;
  }
  return std::max(0.0, acc / static_cast<double>(logp_new.size()));
}

namespace {

struct ResponseTerms {
  double objective = 0.0;
  double kl = 0.0;
  double abs_ratio_dev = 0.0;
  double clipped = 0.0;  // fraction of this response's ratios on the clipped branch
};

// Objective of one response and the per-token weights w_t such that
// d(objective - kl_coeff * kl)/d(theta) = sum_t w_t * d log p_new(o_t)/d(theta).
ResponseTerms response_terms(std::span<const double> lp_new, std::span<const double> lp_old,
                             std::span<const double> lp_ref, double advantage, const GrpoConfig& cfg,
                             std::size_t index, std::span<double> weights) {
  const std::size_t T = lp_new.size();
  const double lo = 1.0 - cfg.clip_delta;
  const double hi = 1.0 + cfg.clip_delta;
  ResponseTerms out;
  std::fill(weights.begin(), weights.end(), 0.0);

  auto branch = [&](double ratio, double& coeff) {
    if (!std::isfinite(ratio)) throw NumericOverflow("importance ratio is not finite", index);
    const double unclipped = ratio * advantage;
    const double clipped = std::clamp(ratio, lo, hi) * advantage;
    if (unclipped <= clipped) {
      coeff = unclipped;
      return std::pair{unclipped, false};
    }
    coeff = 0.0;
    return std::pair{clipped, true};
  };

  if (cfg.token_level_ratio) {
    const double inv_t = 1.0 / static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) {
      const double ratio = std::exp(lp_new[t] - lp_old[t]);
      double coeff = 0.0;
      auto [val, was_clipped] = branch(ratio, coeff);
      out.objective += val * inv_t;
      out.abs_ratio_dev += std::abs(ratio - 1.0) * inv_t;
      out.clipped += was_clipped ? inv_t : 0.0;
      weights[t] += coeff * inv_t;
    }
  } else {
    double sum_new = 0.0, sum_old = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      sum_new += lp_new[t];
      sum_old += lp_old[t];
    }
    const double ratio = std::exp(sum_new - sum_old);
    double coeff = 0.0;
    auto [val, was_clipped] = branch(ratio, coeff);
    out.objective = val;
    out.abs_ratio_dev = std::abs(ratio - 1.0);
    out.clipped = was_clipped ? 1.0 : 0.0;
    for (std::size_t t = 0; t < T; ++t) weights[t] += coeff;
  }

  out.kl = kl_estimate(lp_new, lp_ref);
  if (cfg.kl_coeff != 0.0) {
    const double inv_t = 1.0 / static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) {
      // d k3 / d lp_new = 1 - exp(lp_ref - lp_new)
      const double dk = -std::expm1(lp_ref[t] - lp_new[t]);
      weights[t] -= cfg.kl_coeff * dk * inv_t;
    }
  }
  return out;
}

// Shared by surrogate_objective and grpo_step. `old_logprobs` may hold
// precomputed per-response log-probs under the sampling snapshot.
SurrogateResult group_surrogate(const PolicyParams& new_params, const PolicyParams* old_params,
                                const std::vector<std::vector<double>>* old_logprobs,
                                const PolicyParams& ref_params, const Group& group,
                                const GrpoConfig& cfg) {
  const std::size_t N = group.responses.size();
  if (N == 0) throw EmptyInput("group has no responses");
  if (group.advantages.size() != N) throw InvalidInput("group advantages missing or mis-sized");
  if (new_params.role() == ParamRole::kReference)
    throw RoleViolation("the reference policy cannot be optimized");

  SurrogateResult res;
  res.gradient.assign(new_params.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(N);
  std::vector<double> weights;
  for (std::size_t i = 0; i < N; ++i) {
    const auto& tokens = group.responses[i].tokens;
    const LogProb lp_new = logprob(new_params, group.query, tokens);
    const std::vector<double> lp_old =
        old_logprobs ? (*old_logprobs)[i] : logprob(*old_params, group.query, tokens).per_token;
    const LogProb lp_ref = logprob(ref_params, group.query, tokens);
    weights.assign(tokens.size(), 0.0);
    const ResponseTerms terms = response_terms(lp_new.per_token, lp_old, lp_ref.per_token,
                                               group.advantages[i], cfg, i, weights);
    res.objective += (terms.objective - cfg.kl_coeff * terms.kl) * inv_n;
    res.mean_kl += terms.kl * inv_n;
    res.mean_abs_ratio_dev += terms.abs_ratio_dev * inv_n;
    res.clip_fraction += terms.clipped * inv_n;
    for (double& w : weights) w *= inv_n;
    if (std::any_of(weights.begin(), weights.end(), [](double w) { return w != 0.0; }))
      accumulate_weighted_grad(new_params, group.query, tokens, weights, res.gradient);
  }
  return res;
}

}  // namespace

SurrogateResult surrogate_objective(const PolicyParams& new_params, const PolicyParams& old_params,
                                    const PolicyParams& ref_params, const Group& group,
                                    const GrpoConfig& cfg) {
  return group_surrogate(new_params, &old_params, nullptr, ref_params, group, cfg);
}

Group rollout_group(const PolicyParams& old_params, const Query& query, const GrpoConfig& cfg,
                    const RewardWeights& weights, std::size_t step, std::size_t query_index) {
  Group g;
  g.query = query;
  const auto N = static_cast<std::size_t>(cfg.group_size);
  g.responses.reserve(N);
  std::vector<double> totals;
  for (std::size_t i = 0; i < N; ++i) {
    SampleOptions opt;
    opt.max_len = cfg.max_len;
    opt.temperature = cfg.temperature;
    opt.seed = derive_seed({cfg.seed, step, query_index, i});
    g.responses.push_back(sample(old_params, query, opt));
    g.rewards.push_back(score_tokens(g.responses.back().tokens, query.gt_class, weights));
    totals.push_back(g.rewards.back().total);
  }
  g.advantages = compute_advantages(totals, cfg.adv_epsilon);
  return g;
}

double mean_sampled_reward(const PolicyParams& params, std::span<const Query> queries, const GrpoConfig& cfg,
                           const RewardWeights& weights, int samples, std::uint64_t seed) {
  if (queries.empty()) throw EmptyInput("mean_sampled_reward needs at least one query");
  if (samples < 1) throw InvalidInput("mean_sampled_reward needs samples >= 1");
  std::vector<double> totals(queries.size(), 0.0);
  parallel_for(queries.size(), cfg.threads ? cfg.threads : default_threads(), [&](std::size_t q) {
    for (int i = 0; i < samples; ++i) {
      SampleOptions opt;
      opt.max_len = cfg.max_len;
      opt.temperature = cfg.temperature;
      opt.seed = derive_seed({seed, q, static_cast<std::uint64_t>(i)});
      totals[q] += score_tokens(sample(params, queries[q], opt).tokens, queries[q].gt_class, weights).total;
    }
  });
  double sum = 0.0;
  for (double t : totals) sum += t;
  return sum / (static_cast<double>(queries.size()) * samples);
}

StepMetrics grpo_step(PolicyParams& new_params, PolicyParams& old_params, const PolicyParams& ref_params,
                      std::span<const Query> queries, const GrpoConfig& cfg,
                      const RewardWeights& weights, std::size_t step) {
  if (queries.empty()) throw EmptyInput("grpo_step needs at least one query");
  if (new_params.role() != ParamRole::kTrainable) throw RoleViolation("grpo_step updates trainable params only");
  const std::size_t Q = queries.size();
  const std::size_t threads = cfg.threads ? cfg.threads : default_threads();

  std::vector<Group> groups(Q);
  std::vector<std::vector<std::vector<double>>> old_lp(Q);
  parallel_for(Q, threads, [&](std::size_t q) {
    groups[q] = rollout_group(old_params, queries[q], cfg, weights, step, q);
    for (const auto& r : groups[q].responses)
      old_lp[q].push_back(cfg.temperature == 1.0 ? r.logprobs
                                                 : logprob(old_params, queries[q], r.tokens).per_token);
  });

  StepMetrics m;
  m.step = step;
  double responses = 0.0;
  for (const auto& g : groups) {
    for (const auto& r : g.rewards) {
      m.mean_reward += r.total;
      m.format_rate += r.format;
      m.accuracy += r.correctness;
      responses += 1.0;
    }
  }
  m.mean_reward /= responses;
  m.format_rate /= responses;
  m.accuracy /= responses;

  std::vector<SurrogateResult> parts(Q);
  std::vector<double> grad(new_params.size());
  const double inv_q = 1.0 / static_cast<double>(Q);
  for (int inner = 0; inner < cfg.inner_updates; ++inner) {
    parallel_for(Q, threads, [&](std::size_t q) {
      parts[q] = group_surrogate(new_params, nullptr, &old_lp[q], ref_params, groups[q], cfg);
    });
    std::fill(grad.begin(), grad.end(), 0.0);
    double objective = 0.0, kl = 0.0, dev = 0.0, clip = 0.0;
    for (const auto& p : parts) {  // fixed order keeps the sum deterministic
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += p.gradient[k] * inv_q;
      objective += p.objective * inv_q;
      kl += p.mean_kl * inv_q;
      dev += p.mean_abs_ratio_dev * inv_q;
      clip += p.clip_fraction * inv_q;
    }
    if (inner == 0) {
      m.objective = objective;
      m.mean_kl = kl;
    }
    m.mean_abs_ratio_dev = dev;
    m.clip_fraction = clip;
    apply_freeze(new_params, cfg.freeze, grad);
    auto vals = new_params.values();
    for (std::size_t k = 0; k < vals.size(); ++k) vals[k] += cfg.lr * grad[k];
  }
  std::copy(new_params.values().begin(), new_params.values().end(), old_params.values().begin());
  return m;
}

GrpoResult grpo_train(const PolicyParams& init, std::span<const Query> dataset, const GrpoConfig& cfg,
                      const RewardWeights& weights, const GrpoObserver& observer) {
  cfg.validate();
  weights.validate();
  if (dataset.empty()) throw EmptyInput("grpo_train needs a non-empty dataset");
  GrpoResult out{init.with_role(ParamRole::kTrainable), {}};
  const PolicyParams ref = init.with_role(ParamRole::kReference);
  PolicyParams old = init.with_role(ParamRole::kOldSnapshot);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::uint64_t epoch = 0;
  std::vector<Query> batch;
  const auto per_step = static_cast<std::size_t>(cfg.queries_per_step);
  for (std::size_t step = 1; step <= static_cast<std::size_t>(cfg.steps); ++step) {
    batch.clear();
    while (batch.size() < per_step) {
      if (cursor == order.size()) {
        Rng rng(derive_seed({cfg.seed, 0x717565727973ULL, epoch++}));
        shuffle(std::span<std::size_t>(order), rng);
        cursor = 0;
      }
      batch.push_back(dataset[order[cursor++]]);
    }
    StepMetrics m = grpo_step(out.params, old, ref, batch, cfg, weights, step);
    if (observer) observer(m);
    out.history.push_back(m);
  }
  return out;
}

}  // namespace ctgrpo
