#include "ctgrpo/vocab.hpp"

#include <charconv>

namespace ctgrpo {
namespace {

constexpr std::array<std::string_view, kNumClasses> kClassSymbols = {
    "Airway", "Emphysema", "Fibrosis", "Nodule", "Consolidation", "GGO", "Pleural"};

constexpr std::array<std::string_view, kNumClasses> kClassLabels = {
    "airway abnormalities",
    "emphysema",
    "fibrosis-related changes",
    "pulmonary nodules/masses",
    "consolidation/atelectasis",
    "ground-glass opacity",
    "pleural effusion/thickening"};

constexpr std::array<std::string_view, 7> kSpecial = {
    "<pad>", "<bos>", "<eos>", "<think>", "</think>", "<answer>", "</answer>"};

}  // namespace

std::string_view class_symbol(int class_id) { return kClassSymbols.at(class_id); }
std::string_view class_label(int class_id) { return kClassLabels.at(class_id); }

std::optional<int> class_from_label(std::string_view label) {
  for (int c = 0; c < kNumClasses; ++c)
    if (kClassLabels[c] == label || kClassSymbols[c] == label) return c;
  return std::nullopt;
}

std::string Vocab::symbol(TokenId id) {
  if (!contains(id)) return "<unk:" + std::to_string(id) + ">";
  if (id < tok::kFirstClass) return std::string(kSpecial[id]);
  if (is_class(id)) return std::string(kClassSymbols[class_of(id)]);
  return "e" + std::to_string(id - tok::kFirstEvidence);
}

std::optional<TokenId> Vocab::parse_symbol(std::string_view s) {
  for (TokenId id = 0; id < tok::kFirstClass; ++id)
    if (kSpecial[id] == s) return id;
  for (int c = 0; c < kNumClasses; ++c)
    if (kClassSymbols[c] == s) return class_token(c);
  if (s.size() >= 2 && s.front() == 'e') {
    int idx = -1;
    auto [ptr, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), idx);
    if (ec == std::errc{} && ptr == s.data() + s.size() && idx >= 0 && idx < kNumEvidence)
      return tok::kFirstEvidence + idx;
  }
  return std::nullopt;
}

}  // namespace ctgrpo
