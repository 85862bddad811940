#include "ctgrpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "ctgrpo/error.hpp"
#include "ctgrpo/rng.hpp"

namespace ctgrpo {

ParamLayout::ParamLayout(PolicyShape s) : shape(s) {
  if (s.vocab == 0 || s.dim == 0 || s.input == 0) throw InvalidInput("policy shape must be non-empty");
  std::size_t off = 0;
  auto take = [&off](std::size_t n) {
    const std::size_t at = off;
    off += n;
    return at;
  };
  embedding = take(s.vocab * s.dim);
  query_weight = take(s.dim * s.input);
  query_bias = take(s.dim);
  mix_pool = take(s.dim * s.dim);
  mix_current = take(s.dim * s.dim);
  mix_bias = take(s.dim);
  head = take(s.vocab * s.dim);
  head_bias = take(s.vocab);
  total = off;
}

std::pair<std::size_t, std::size_t> ParamLayout::group_range(ParamGroup g) const {
  switch (g) {
    case ParamGroup::kEmbedding: return {embedding, query_weight};
    case ParamGroup::kQueryProjection: return {query_weight, mix_pool};
    case ParamGroup::kMixing: return {mix_pool, head};
    case ParamGroup::kHead: return {head, total};
  }
  return {0, 0};
}

PolicyParams::PolicyParams(PolicyShape shape, ParamRole role)
    : layout_(shape), role_(role), values_(layout_.total, 0.0) {}

PolicyParams PolicyParams::random_init(PolicyShape shape, std::uint64_t seed) {
  PolicyParams p(shape);
  Rng rng(derive_seed({seed, 0x706f6c696379ULL}));
  const ParamLayout& L = p.layout_;
  const double d = static_cast<double>(shape.dim);
  const double in = static_cast<double>(shape.input);
  auto fill = [&](std::size_t off, std::size_t n, double scale) {
    for (std::size_t i = 0; i < n; ++i) p.values_[off + i] = scale * standard_normal(rng);
  };
  fill(L.embedding, shape.vocab * shape.dim, 1.0);
  fill(L.query_weight, shape.dim * shape.input, 2.0 / std::sqrt(in));
  fill(L.mix_pool, shape.dim * shape.dim, 1.0 / std::sqrt(d));
  fill(L.mix_current, shape.dim * shape.dim, 1.0 / std::sqrt(d));
  fill(L.head, shape.vocab * shape.dim, 0.1 / std::sqrt(d));
  return p;
}

PolicyParams PolicyParams::with_role(ParamRole role) const {
  PolicyParams copy = *this;
  copy.role_ = role;
  return copy;
}

std::span<double> PolicyParams::group(ParamGroup g) {
  auto [lo, hi] = layout_.group_range(g);
  return std::span<double>(values_).subspan(lo, hi - lo);
}

std::span<const double> PolicyParams::group(ParamGroup g) const {
  auto [lo, hi] = layout_.group_range(g);
  return std::span<const double>(values_).subspan(lo, hi - lo);
}

bool PolicyParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

bool bit_identical(const PolicyParams& a, const PolicyParams& b) {
  return a.shape() == b.shape() && a.role() == b.role() && a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::array<double, kConditioningDim> Query::conditioning() const {
  std::array<double, kConditioningDim> c{};
  std::copy(features.begin(), features.end(), c.begin());
  std::copy(zoom.begin(), zoom.end(), c.begin() + kNumFeatures);
  c[kConditioningDim - 1] = mode == PromptMode::kWithThink ? 1.0 : 0.0;
  return c;
}

namespace {

// Hidden state computation shared by scoring, sampling and backprop.
//   x_0 = E[prompt_0] + Wq c + bq,  x_j = E[token_j]
//   m_j = mean(x_0..x_j)
//   h_j = tanh(Wp m_j + Wc x_j + bm)
//   z_j = H h_j + bh
class Evaluator {
 public:
  Evaluator(const PolicyParams& params, const Query& query)
      : p_(params), L_(params.layout()), d_(L_.shape.dim), V_(L_.shape.vocab) {
    if (L_.shape.input != static_cast<std::size_t>(kConditioningDim))
      throw InvalidInput("policy input width does not match query conditioning");
    if (query.prompt.empty()) throw InvalidInput("query prompt is empty");
    for (TokenId t : query.prompt) check_token(t);
    cond_ = query.conditioning();
  }

  std::size_t dim() const { return d_; }
  std::size_t vocab() const { return V_; }

  void check_token(TokenId t) const {
    if (t < 0 || static_cast<std::size_t>(t) >= L_.shape.vocab)
      throw InvalidInput("token id " + std::to_string(t) + " is outside the vocabulary");
  }

  // Input vector of position j (token t) into out.
  void input(std::size_t j, TokenId t, double* out) const {
    const double* E = p_.data() + L_.embedding + static_cast<std::size_t>(t) * d_;
    std::copy(E, E + d_, out);
    if (j == 0) {
      const double* Wq = p_.data() + L_.query_weight;
      const double* bq = p_.data() + L_.query_bias;
      const std::size_t F = L_.shape.input;
      for (std::size_t r = 0; r < d_; ++r) {
        double acc = bq[r];
        for (std::size_t c = 0; c < F; ++c) acc += Wq[r * F + c] * cond_[c];
        out[r] += acc;
      }
    }
  }

  void hidden(const double* m, const double* x, double* h) const {
    const double* Wp = p_.data() + L_.mix_pool;
    const double* Wc = p_.data() + L_.mix_current;
    const double* bm = p_.data() + L_.mix_bias;
    for (std::size_t r = 0; r < d_; ++r) {
      double acc = bm[r];
      const double* wp = Wp + r * d_;
      const double* wc = Wc + r * d_;
      for (std::size_t c = 0; c < d_; ++c) acc += wp[c] * m[c] + wc[c] * x[c];
      h[r] = std::tanh(acc);
    }
  }

  // Logits scaled by 1/temperature; returns log-sum-exp of the scaled logits.
  double logits(const double* h, double inv_temp, double* z) const {
    const double* H = p_.data() + L_.head;
    const double* bh = p_.data() + L_.head_bias;
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < V_; ++v) {
      double acc = bh[v];
      const double* hv = H + v * d_;
      for (std::size_t c = 0; c < d_; ++c) acc += hv[c] * h[c];
      z[v] = acc * inv_temp;
      zmax = std::max(zmax, z[v]);
    }
    double s = 0.0;
    for (std::size_t v = 0; v < V_; ++v) s += std::exp(z[v] - zmax);
    return zmax + std::log(s);
  }

  const PolicyParams& params() const { return p_; }
  const ParamLayout& layout() const { return L_; }
  const std::array<double, kConditioningDim>& cond() const { return cond_; }

 private:
  const PolicyParams& p_;
  const ParamLayout& L_;
  std::size_t d_;
  std::size_t V_;
  std::array<double, kConditioningDim> cond_{};
};

bool masked_position(std::span<const TokenId> response, std::size_t k, bool seen_eos) {
  return seen_eos && response[k] == tok::kPad;
}

double checked_inv_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw InvalidInput("temperature must be positive and finite");
  return 1.0 / temperature;
}

// Full forward pass over prompt ++ response, keeping activations for backprop.
struct Trace {
  std::size_t prompt_len = 0;
  std::size_t n = 0;           // context positions
  std::vector<double> x, m, h;  // n x d
  std::vector<double> probs;    // response.size() x V
  std::vector<double> logp;     // response.size()
  std::vector<char> mask;       // response.size()
};

Trace forward(const Evaluator& ev, const Query& query, std::span<const TokenId> response,
              double inv_temp) {
  if (response.empty()) throw InvalidInput("response is empty");
  for (TokenId t : response) ev.check_token(t);
  const std::size_t d = ev.dim();
  const std::size_t V = ev.vocab();
  Trace tr;
  tr.prompt_len = query.prompt.size();
  tr.n = tr.prompt_len + response.size() - 1;
  tr.x.assign(tr.n * d, 0.0);
  tr.m.assign(tr.n * d, 0.0);
  tr.h.assign(tr.n * d, 0.0);
  tr.probs.assign(response.size() * V, 0.0);
  tr.logp.assign(response.size(), 0.0);
  tr.mask.assign(response.size(), 0);

  std::vector<double> sum(d, 0.0);
  std::vector<double> z(V);
  bool seen_eos = false;
  for (std::size_t j = 0; j < tr.n; ++j) {
    const TokenId t = j < tr.prompt_len ? query.prompt[j] : response[j - tr.prompt_len];
    double* x = tr.x.data() + j * d;
    double* m = tr.m.data() + j * d;
    ev.input(j, t, x);
    const double inv = 1.0 / static_cast<double>(j + 1);
    for (std::size_t c = 0; c < d; ++c) {
      sum[c] += x[c];
      m[c] = sum[c] * inv;
    }
    if (j + 1 < tr.prompt_len) continue;
    const std::size_t k = j + 1 - tr.prompt_len;  // response index predicted here
    double* h = tr.h.data() + j * d;
    ev.hidden(m, x, h);
    const double lse = ev.logits(h, inv_temp, z.data());
    double* pr = tr.probs.data() + k * V;
    for (std::size_t v = 0; v < V; ++v) pr[v] = std::exp(z[v] - lse);
    if (masked_position(response, k, seen_eos)) {
      tr.mask[k] = 1;
    } else {
      tr.logp[k] = z[static_cast<std::size_t>(response[k])] - lse;
    }
    if (response[k] == tok::kEos) seen_eos = true;
  }
  return tr;
}

}  // namespace

LogProb logprob(const PolicyParams& params, const Query& query, std::span<const TokenId> response,
                double temperature) {
  const double inv_temp = checked_inv_temperature(temperature);
  Evaluator ev(params, query);
  if (response.empty()) throw InvalidInput("response is empty");
  for (TokenId t : response) ev.check_token(t);

  // Incremental pass; no activations are retained.
  const std::size_t d = ev.dim();
  const std::size_t P = query.prompt.size();
  std::vector<double> sum(d, 0.0), x(d), m(d), h(d), z(ev.vocab());
  LogProb out;
  out.per_token.assign(response.size(), 0.0);
  bool seen_eos = false;
  const std::size_t n = P + response.size() - 1;
  for (std::size_t j = 0; j < n; ++j) {
    const TokenId t = j < P ? query.prompt[j] : response[j - P];
    ev.input(j, t, x.data());
    const double inv = 1.0 / static_cast<double>(j + 1);
    for (std::size_t c = 0; c < d; ++c) {
      sum[c] += x[c];
      m[c] = sum[c] * inv;
    }
    if (j + 1 < P) continue;
    const std::size_t k = j + 1 - P;
    if (!masked_position(response, k, seen_eos)) {
      ev.hidden(m.data(), x.data(), h.data());
      const double lse = ev.logits(h.data(), inv_temp, z.data());
      out.per_token[k] = z[static_cast<std::size_t>(response[k])] - lse;
    }
    if (response[k] == tok::kEos) seen_eos = true;
  }
  for (double v : out.per_token) out.total += v;
  return out;
}

std::vector<double> next_token_distribution(const PolicyParams& params, const Query& query,
                                            std::span<const TokenId> prefix) {
  Evaluator ev(params, query);
  for (TokenId t : prefix) ev.check_token(t);
  const std::size_t d = ev.dim();
  const std::size_t P = query.prompt.size();
  std::vector<double> sum(d, 0.0), x(d), m(d), h(d), z(ev.vocab());
  const std::size_t n = P + prefix.size();
  for (std::size_t j = 0; j < n; ++j) {
    const TokenId t = j < P ? query.prompt[j] : prefix[j - P];
    ev.input(j, t, x.data());
    for (std::size_t c = 0; c < d; ++c) sum[c] += x[c];
  }
  for (std::size_t c = 0; c < d; ++c) m[c] = sum[c] / static_cast<double>(n);
  ev.hidden(m.data(), x.data(), h.data());
  const double lse = ev.logits(h.data(), 1.0, z.data());
  for (double& v : z) v = std::exp(v - lse);
  return z;
}

Response sample(const PolicyParams& params, const Query& query, const SampleOptions& options) {
  if (options.max_len < 1) throw InvalidInput("max_len must be at least 1");
  const double inv_temp = checked_inv_temperature(options.temperature);
  Evaluator ev(params, query);
  for (TokenId t : options.forced_prefix) ev.check_token(t);

  const std::size_t d = ev.dim();
  const std::size_t V = ev.vocab();
  const std::size_t max_len = static_cast<std::size_t>(options.max_len);
  Rng rng(options.seed);
  std::vector<double> sum(d, 0.0), x(d), m(d), h(d), z(V);
  Response out;
  out.tokens.reserve(max_len);
  out.logprobs.reserve(max_len);

  std::size_t j = 0;
  auto push_context = [&](TokenId t) {
    ev.input(j, t, x.data());
    const double inv = 1.0 / static_cast<double>(j + 1);
    for (std::size_t c = 0; c < d; ++c) {
      sum[c] += x[c];
      m[c] = sum[c] * inv;
    }
    ++j;
  };
  for (TokenId t : query.prompt) push_context(t);

  while (out.tokens.size() < max_len) {
    ev.hidden(m.data(), x.data(), h.data());
    const double lse = ev.logits(h.data(), inv_temp, z.data());
    const std::size_t k = out.tokens.size();
    TokenId chosen = 0;
    if (k < options.forced_prefix.size()) {
      chosen = options.forced_prefix[k];
    } else if (options.greedy) {
      chosen = static_cast<TokenId>(std::max_element(z.begin(), z.end()) - z.begin());
    } else {
      // Inverse CDF over the normalized distribution.
      const double u = uniform01(rng);
      double acc = 0.0;
      chosen = static_cast<TokenId>(V - 1);
      for (std::size_t v = 0; v < V; ++v) {
        acc += std::exp(z[v] - lse);
        if (u < acc) {
          chosen = static_cast<TokenId>(v);
          break;
        }
      }
    }
    out.tokens.push_back(chosen);
    out.logprobs.push_back(z[static_cast<std::size_t>(chosen)] - lse);
    if (chosen == tok::kEos) {
      out.terminated = true;
      break;
    }
    if (out.tokens.size() < max_len) push_context(chosen);
  }
  return out;
}

std::vector<double> accumulate_weighted_grad(const PolicyParams& params, const Query& query,
                                             std::span<const TokenId> response,
                                             std::span<const double> weights,
                                             std::span<double> grad) {
  if (params.role() == ParamRole::kReference)
    throw RoleViolation("gradients of the frozen reference policy are never computed");
  if (grad.size() != params.size()) throw InvalidInput("gradient buffer has the wrong size");
  if (weights.size() != response.size()) throw InvalidInput("one weight per response token required");
  Evaluator ev(params, query);
  const Trace tr = forward(ev, query, response, 1.0);

  const ParamLayout& L = params.layout();
  const std::size_t d = L.shape.dim;
  const std::size_t V = L.shape.vocab;
  const std::size_t F = L.shape.input;
  const double* W = params.data();
  double* G = grad.data();

  std::vector<double> dx(tr.n * d, 0.0);
  std::vector<double> dm_scaled(tr.n * d, 0.0);  // dL/dm_j / (j + 1)
  std::vector<double> g(V), dh(d), da(d);

  for (std::size_t k = 0; k < response.size(); ++k) {
    if (tr.mask[k] || weights[k] == 0.0) continue;
    const std::size_t j = tr.prompt_len - 1 + k;
    const double w = weights[k];
    const double* pr = tr.probs.data() + k * V;
    for (std::size_t v = 0; v < V; ++v) g[v] = -w * pr[v];
    g[static_cast<std::size_t>(response[k])] += w;

    const double* h = tr.h.data() + j * d;
    const double* x = tr.x.data() + j * d;
    const double* m = tr.m.data() + j * d;
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t v = 0; v < V; ++v) {
      const double gv = g[v];
      G[L.head_bias + v] += gv;
      double* gH = G + L.head + v * d;
      const double* Hv = W + L.head + v * d;
      for (std::size_t c = 0; c < d; ++c) {
        gH[c] += gv * h[c];
        dh[c] += gv * Hv[c];
      }
    }
    for (std::size_t r = 0; r < d; ++r) da[r] = dh[r] * (1.0 - h[r] * h[r]);

    const double inv = 1.0 / static_cast<double>(j + 1);
    double* dxj = dx.data() + j * d;
    double* dmj = dm_scaled.data() + j * d;
    for (std::size_t r = 0; r < d; ++r) {
      const double a = da[r];
      G[L.mix_bias + r] += a;
      double* gWp = G + L.mix_pool + r * d;
      double* gWc = G + L.mix_current + r * d;
      const double* Wp = W + L.mix_pool + r * d;
      const double* Wc = W + L.mix_current + r * d;
      for (std::size_t c = 0; c < d; ++c) {
        gWp[c] += a * m[c];
        gWc[c] += a * x[c];
        dmj[c] += a * Wp[c] * inv;
        dxj[c] += a * Wc[c];
      }
    }
  }

  // m_j averages x_0..x_j, so x_i receives sum_{j >= i} dm_j / (j + 1).
  std::vector<double> carry(d, 0.0);
  for (std::size_t j = tr.n; j-- > 0;) {
    double* dxj = dx.data() + j * d;
    const double* dmj = dm_scaled.data() + j * d;
    for (std::size_t c = 0; c < d; ++c) {
      carry[c] += dmj[c];
      dxj[c] += carry[c];
    }
  }

  for (std::size_t j = 0; j < tr.n; ++j) {
    const TokenId t = j < tr.prompt_len ? query.prompt[j] : response[j - tr.prompt_len];
    double* gE = G + L.embedding + static_cast<std::size_t>(t) * d;
    const double* dxj = dx.data() + j * d;
    for (std::size_t c = 0; c < d; ++c) gE[c] += dxj[c];
  }
  const auto& cond = ev.cond();
  for (std::size_t r = 0; r < d; ++r) {
    const double v = dx[r];
    G[L.query_bias + r] += v;
    for (std::size_t c = 0; c < F; ++c) G[L.query_weight + r * F + c] += v * cond[c];
  }
  return tr.logp;
}

std::vector<double> grad_logprob(const PolicyParams& params, const Query& query,
                                 std::span<const TokenId> response) {
  std::vector<double> grad(params.size(), 0.0);
  std::vector<double> ones(response.size(), 1.0);
  accumulate_weighted_grad(params, query, response, ones, grad);
  return grad;
}

}  // namespace ctgrpo
