#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctgrpo/image.hpp"
#include "ctgrpo/policy.hpp"

namespace ctgrpo {

using FeatureVector = std::array<double, kNumFeatures>;
using BucketVector = std::array<bool, kNumFeatures>;

/// Feature meanings (each in [-1, 1], bucket "high" iff > 0):
///   0 lesion size, 1 lesion intensity, 2 peripheral placement, 3 elongation,
///   4 multiplicity, 5 inferior position, 6 texture, 7 slice extent.
namespace feature {
inline constexpr int kSize = 0;
inline constexpr int kIntensity = 1;
inline constexpr int kPeripheral = 2;
inline constexpr int kElongation = 3;
inline constexpr int kMultiplicity = 4;
inline constexpr int kInferior = 5;
inline constexpr int kTexture = 6;
inline constexpr int kExtent = 7;
}  // namespace feature

namespace cls {
inline constexpr int kAirway = 0;
inline constexpr int kEmphysema = 1;
inline constexpr int kFibrosis = 2;
inline constexpr int kNodule = 3;
inline constexpr int kConsolidation = 4;
inline constexpr int kGroundGlass = 5;
inline constexpr int kPleural = 6;
}  // namespace cls

BucketVector bucketize(const FeatureVector& features);

/// Decision list over feature buckets; the all-low vector lands on airway abnormalities.
int classify_buckets(const BucketVector& b);
int classify_features(const FeatureVector& features);

struct SynthConfig {
  int size = 512;
  int min_slices = 8;
  int max_slices = 40;
  std::array<double, kNumClasses> mixture{1.0 / 7, 1.0 / 7, 1.0 / 7, 1.0 / 7, 1.0 / 7, 1.0 / 7, 1.0 / 7};
  double distractor_prob = 0.3;
  /// Probability of replacing the latent class by a uniform draw. Off by default;
  /// when on, labels no longer follow the feature rule.
  double label_noise = 0.0;

  void validate() const;
};

/// Per-class binary masks of one slice; absent classes have no entry.
using SliceMasks = std::map<int, GrayImage>;

struct SyntheticCase {
  std::string patient_id;
  std::uint64_t seed = 0;
  int class_id = 0;
  FeatureVector features{};
  std::vector<GrayImage> slices;
  std::vector<SliceMasks> masks;

  int width() const { return slices.empty() ? 0 : slices.front().width; }
  int height() const { return slices.empty() ? 0 : slices.front().height; }
  const GrayImage* mask(int slice, int class_id) const;
};

SyntheticCase gen_case(std::uint64_t seed, const SynthConfig& cfg, std::string patient_id = "P000000");

struct CaseDescriptor {
  int class_id = 0;
  FeatureVector features{};
};

/// Class and descriptor that gen_case(seed, cfg) would produce, without
/// rendering any slices.
CaseDescriptor describe_case(std::uint64_t seed, const SynthConfig& cfg);

/// Patient id for case index i, e.g. "P000042".
std::string patient_id_for(std::size_t index);
std::uint64_t case_seed(std::uint64_t run_seed, std::size_t index);

/// Gold token sequence for a descriptor; the think span lists one evidence
/// token per feature. Ends with EOS.
std::vector<TokenId> gold_tokens(const FeatureVector& features, int class_id, PromptMode mode);

struct Demonstration {
  Query query;
  std::vector<TokenId> gold;
};

/// Training pair for one lesion slice of a case. Throws InvalidInput when the
/// slice shows no lesion of the case's class.
Demonstration demonstration(const SyntheticCase& c, int slice, PromptMode mode,
                            std::array<double, kNumZoomFeatures> zoom = {});

/// Rule-based stand-in for a reasoning judge: reads the feature buckets named
/// by evidence tokens (unnamed buckets are low) and applies the class rule.
std::optional<int> judge_think(std::span<const TokenId> think_tokens);

}  // namespace ctgrpo
