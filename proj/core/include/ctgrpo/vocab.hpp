#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ctgrpo {

using TokenId = std::int32_t;

inline constexpr int kNumClasses = 7;
inline constexpr int kNumFeatures = 8;
inline constexpr int kNumEvidence = 2 * kNumFeatures;  // low/high bucket per feature

/// Fixed token table. Ids are dense and 0-based:
///   0 pad, 1 BOS, 2 EOS, 3..6 structural tags, 7..13 classes, 14..29 evidence.
namespace tok {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kThinkOpen = 3;
inline constexpr TokenId kThinkClose = 4;
inline constexpr TokenId kAnswerOpen = 5;
inline constexpr TokenId kAnswerClose = 6;
inline constexpr TokenId kFirstClass = 7;
inline constexpr TokenId kFirstEvidence = kFirstClass + kNumClasses;
inline constexpr TokenId kVocabSize = kFirstEvidence + kNumEvidence;
}  // namespace tok

class Vocab {
 public:
  static constexpr std::size_t size() { return static_cast<std::size_t>(tok::kVocabSize); }

  static bool contains(TokenId id) { return id >= 0 && id < tok::kVocabSize; }
  static bool is_class(TokenId id) {
    return id >= tok::kFirstClass && id < tok::kFirstClass + kNumClasses;
  }
  static bool is_evidence(TokenId id) {
    return id >= tok::kFirstEvidence && id < tok::kFirstEvidence + kNumEvidence;
  }
  static bool is_tag(TokenId id) { return id >= tok::kThinkOpen && id <= tok::kAnswerClose; }

  static TokenId class_token(int class_id) { return tok::kFirstClass + class_id; }
  static int class_of(TokenId id) { return id - tok::kFirstClass; }

  /// Evidence token naming bucket `high` of feature `feature`.
  static TokenId evidence_token(int feature, bool high) {
    return tok::kFirstEvidence + 2 * feature + (high ? 1 : 0);
  }
  static int evidence_feature(TokenId id) { return (id - tok::kFirstEvidence) / 2; }
  static bool evidence_high(TokenId id) { return ((id - tok::kFirstEvidence) % 2) == 1; }

  static std::string symbol(TokenId id);
  static std::optional<TokenId> parse_symbol(std::string_view symbol);
};

/// Short class symbols as they appear in token streams.
std::string_view class_symbol(int class_id);
/// Clinical category labels used in dataset records.
std::string_view class_label(int class_id);
std::optional<int> class_from_label(std::string_view label);

}  // namespace ctgrpo
