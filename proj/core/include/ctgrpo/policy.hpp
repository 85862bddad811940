#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctgrpo/vocab.hpp"

namespace ctgrpo {

/// Zoom-derived entries appended to the lesion descriptor when the slice
/// carries a zoom-in patch: lesion intensity and area fraction inside the patch.
inline constexpr int kNumZoomFeatures = 2;
/// Conditioning input: lesion descriptor, zoom entries, prompt-mode bit.
inline constexpr int kConditioningDim = kNumFeatures + kNumZoomFeatures + 1;

enum class ParamRole { kTrainable, kOldSnapshot, kReference };

/// Contiguous parameter groups. Freeze masks operate at this granularity.
enum class ParamGroup : int { kEmbedding = 0, kQueryProjection = 1, kMixing = 2, kHead = 3 };
inline constexpr int kNumParamGroups = 4;

struct PolicyShape {
  std::size_t vocab = Vocab::size();
  std::size_t dim = 32;
  std::size_t input = kConditioningDim;

  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

/// Offsets of every tensor inside the flat parameter vector. Tensors are
/// row-major and laid out group by group so each group is one contiguous range.
struct ParamLayout {
  explicit ParamLayout(PolicyShape s);

  PolicyShape shape;
  std::size_t embedding = 0;     // vocab x dim
  std::size_t query_weight = 0;  // dim x input
  std::size_t query_bias = 0;    // dim
  std::size_t mix_pool = 0;      // dim x dim, applied to the mean-pooled prefix
  std::size_t mix_current = 0;   // dim x dim, applied to the current position
  std::size_t mix_bias = 0;      // dim
  std::size_t head = 0;          // vocab x dim
  std::size_t head_bias = 0;     // vocab
  std::size_t total = 0;

  std::pair<std::size_t, std::size_t> group_range(ParamGroup g) const;
};

/// Parameters of the causal token policy. The same type holds the trainable
/// policy, the sampling snapshot and the frozen reference; `role` says which.
class PolicyParams {
 public:
  explicit PolicyParams(PolicyShape shape = {}, ParamRole role = ParamRole::kTrainable);

  static PolicyParams random_init(PolicyShape shape, std::uint64_t seed);

  const PolicyShape& shape() const { return layout_.shape; }
  const ParamLayout& layout() const { return layout_; }
  ParamRole role() const { return role_; }
  void set_role(ParamRole role) { role_ = role; }
  PolicyParams with_role(ParamRole role) const;

  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> group(ParamGroup g);
  std::span<const double> group(ParamGroup g) const;

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  bool all_finite() const;

 private:
  ParamLayout layout_;
  ParamRole role_;
  std::vector<double> values_;
};

/// Bitwise equality of roles, shapes and every parameter value.
bool bit_identical(const PolicyParams& a, const PolicyParams& b);

enum class PromptMode { kWithThink, kWithoutThink };

struct Query {
  std::array<double, kNumFeatures> features{};
  std::array<double, kNumZoomFeatures> zoom{};
  PromptMode mode = PromptMode::kWithThink;
  std::vector<TokenId> prompt{tok::kBos};
  int gt_class = 0;
  std::string patient_id;

  std::array<double, kConditioningDim> conditioning() const;
};

struct Response {
  std::vector<TokenId> tokens;
  std::vector<double> logprobs;  // per token, under the generating policy
  bool terminated = false;       // EOS reached

  friend bool operator==(const Response&, const Response&) = default;
};

struct LogProb {
  double total = 0.0;
  std::vector<double> per_token;
};

struct SampleOptions {
  int max_len = 24;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  bool greedy = false;
  /// Tokens emitted verbatim before decoding starts (forced-think protocol).
  std::vector<TokenId> forced_prefix;
};

/// Log-probability of every response token given the query and its prefix.
/// Trailing pad tokens after EOS are masked and contribute exactly 0.
LogProb logprob(const PolicyParams& params, const Query& query, std::span<const TokenId> response,
                double temperature = 1.0);
inline LogProb logprob(const PolicyParams& params, const Query& query, const Response& response,
                       double temperature = 1.0) {
  return logprob(params, query, response.tokens, temperature);
}

Response sample(const PolicyParams& params, const Query& query, const SampleOptions& options);

/// Next-token distribution after `prefix` (response tokens so far).
std::vector<double> next_token_distribution(const PolicyParams& params, const Query& query,
                                            std::span<const TokenId> prefix);

/// Gradient of the total response log-probability w.r.t. every parameter.
std::vector<double> grad_logprob(const PolicyParams& params, const Query& query,
                                 std::span<const TokenId> response);
inline std::vector<double> grad_logprob(const PolicyParams& params, const Query& query,
                                        const Response& response) {
  return grad_logprob(params, query, response.tokens);
}

/// Adds d/dθ sum_t weights[t] * log p(response[t] | prefix) into `grad`.
/// Returns the per-token log-probabilities computed along the way.
std::vector<double> accumulate_weighted_grad(const PolicyParams& params, const Query& query,
                                             std::span<const TokenId> response,
                                             std::span<const double> weights,
                                             std::span<double> grad);

}  // namespace ctgrpo
