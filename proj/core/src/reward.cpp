#include "ctgrpo/reward.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ctgrpo/error.hpp"

namespace ctgrpo {

void RewardWeights::validate() const {
  for (double w : {alpha, beta_v, gamma})
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("reward weights must be finite and >= 0");
}

namespace {

// Positions (in the original sequence) of the tokens that take part in parsing.
std::vector<std::size_t> effective_positions(std::span<const TokenId> tokens) {
  std::vector<std::size_t> pos;
  pos.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == tok::kEos) break;
    if (tokens[i] == tok::kPad) continue;
    pos.push_back(i);
  }
  return pos;
}

std::optional<TokenSpan> unique_pair(std::span<const TokenId> tokens, std::span<const std::size_t> pos,
                                     TokenId open, TokenId close) {
  std::size_t n_open = 0, n_close = 0, at_open = 0, at_close = 0;
  for (std::size_t p : pos) {
    if (tokens[p] == open) {
      ++n_open;
      at_open = p;
    } else if (tokens[p] == close) {
      ++n_close;
      at_close = p;
    }
  }
  if (n_open != 1 || n_close != 1 || at_open > at_close) return std::nullopt;
  return TokenSpan{at_open + 1, at_close};
}

}  // namespace

ParsedResponse parse_response(std::span<const TokenId> tokens) {
  ParsedResponse out;
  const std::vector<std::size_t> pos = effective_positions(tokens);
  out.think = unique_pair(tokens, pos, tok::kThinkOpen, tok::kThinkClose);
  out.answer = unique_pair(tokens, pos, tok::kAnswerOpen, tok::kAnswerClose);

  if (out.answer) {
    std::optional<int> cls;
    bool clean = true;
    for (std::size_t i = out.answer->first; i < out.answer->second; ++i) {
      const TokenId t = tokens[i];
      if (t == tok::kPad || t == tok::kEos) continue;
      if (Vocab::is_class(t) && !cls) {
        cls = Vocab::class_of(t);
      } else {
        clean = false;
      }
    }
    if (clean) out.class_id = cls;
  }

  if (out.think && out.answer && !pos.empty()) {
    // Unique pairs already hold; check order and that nothing sits outside them.
    const bool starts_with_think = tokens[pos.front()] == tok::kThinkOpen;
    const bool ends_with_answer = tokens[pos.back()] == tok::kAnswerClose;
    const std::size_t think_close = out.think->second;
    const std::size_t answer_open = out.answer->first - 1;
    bool adjacent = think_close < answer_open;
    for (std::size_t p : pos)
      if (p > think_close && p < answer_open) adjacent = false;
    bool tags_inside = false;
    for (std::size_t p : pos) {
      const bool in_think = p >= out.think->first && p < out.think->second;
      const bool in_answer = p >= out.answer->first && p < out.answer->second;
      if ((in_think || in_answer) && Vocab::is_tag(tokens[p])) tags_inside = true;
    }
    out.well_formed = starts_with_think && ends_with_answer && adjacent && !tags_inside;
  }
  return out;
}

RewardBreakdown score(const ParsedResponse& parsed, int gt_class, const RewardWeights& w) {
  if (gt_class < 0 || gt_class >= kNumClasses) throw InvalidInput("ground-truth class out of range");
  w.validate();
  RewardBreakdown r;
  r.format = parsed.well_formed ? 1 : 0;
  r.validity = parsed.class_id && *parsed.class_id >= 0 && *parsed.class_id < kNumClasses ? 1 : 0;
  r.correctness = r.validity && *parsed.class_id == gt_class ? 1 : 0;
  r.total = w.alpha * r.format + w.beta_v * r.validity + w.gamma * r.correctness;
  return r;
}

}  // namespace ctgrpo
