#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>

#include "ctgrpo/vocab.hpp"

namespace ctgrpo {

/// Weights of the composite reward. `beta_v` weights validity; it is unrelated
/// to the KL coefficient of the policy objective.
struct RewardWeights {
  double alpha = 1.0;   // format
  double beta_v = 1.0;  // validity
  double gamma = 2.0;   // correctness

  void validate() const;
};

/// Half-open token index range [first, second) of a span's content.
using TokenSpan = std::pair<std::size_t, std::size_t>;

struct ParsedResponse {
  std::optional<TokenSpan> think;
  std::optional<TokenSpan> answer;
  std::optional<int> class_id;
  bool well_formed = false;
};

struct RewardBreakdown {
  int format = 0;
  int validity = 0;
  int correctness = 0;
  double total = 0.0;

  friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

/// Tag-structure parse. The sequence is cut at its first EOS and pads are
/// ignored. It is well formed iff what remains is exactly
///   <think> X* </think> <answer> Y* </answer>
/// with no tags inside X or Y. The answer span needs exactly one <answer> and
/// one </answer>, open before close, whatever happens to the think tags; the
/// class is extracted when that span holds a single class token and nothing
/// else. The think span follows the same uniqueness rule.
ParsedResponse parse_response(std::span<const TokenId> tokens);

RewardBreakdown score(const ParsedResponse& parsed, int gt_class, const RewardWeights& w = {});

inline RewardBreakdown score_tokens(std::span<const TokenId> tokens, int gt_class,
                                    const RewardWeights& w = {}) {
  return score(parse_response(tokens), gt_class, w);
}

}  // namespace ctgrpo
