#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ctgrpo/image.hpp"
#include "ctgrpo/policy.hpp"
#include "ctgrpo/synth.hpp"

namespace ctgrpo {

/// Component labeling of a binary mask. Labels are dense from 1 in raster
/// order of each component's first pixel; background is 0.
struct Regions {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> labels;
  std::vector<std::size_t> areas;  // areas[k - 1] is the pixel count of label k
  std::vector<Rect> boxes;         // tight bounding box per label

  std::size_t count() const { return areas.size(); }
  std::int32_t label(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

Regions connected_components(const GrayImage& mask, int connectivity = 8);

struct LesionBox {
  int class_id = 0;
  int slice = 0;
  Rect bbox;
  std::size_t area = 0;  // component pixels, not bbox area

  friend bool operator==(const LesionBox&, const LesionBox&) = default;
};

/// One box per component with area strictly greater than `min_area`, sorted by (y0, x0).
std::vector<LesionBox> extract_boxes(const Regions& regions, int class_id, int slice, std::size_t min_area);

/// Evenly spaced subset of at most `cap` indices: positions
/// round(k (n - 1) / (cap - 1)), k = 0..cap-1.
std::vector<int> sample_slices(std::span<const int> eligible, std::size_t cap = 20);

struct AugmentConfig {
  int patch = 128;
  std::array<std::uint8_t, 3> border_color{0, 255, 0};
  int border = 3;
  std::size_t min_area = 1300;
  std::size_t slice_cap = 20;
  int connectivity = 8;
  bool augment = true;

  void validate(int width, int height) const;
  int pasted_side() const { return patch + 2 * border; }
};

/// Bounding box grown to a centred square (side = longer bbox side), shifted
/// and clamped to stay inside the image.
Rect square_crop(const Rect& bbox, int width, int height);

/// Crops the lesion, resizes it bilinearly to the patch resolution, frames it
/// and pastes it into the upper-left corner of an RGB copy of the slice.
RgbImage zoom_augment(const GrayImage& slice, const LesionBox& box, const AugmentConfig& cfg);

/// Zoom-derived features of a crop window: mean lesion intensity mapped to
/// roughly [-1, 1] and the lesion area fraction mapped to [-1, 1].
std::array<double, kNumZoomFeatures> zoom_features(const GrayImage& slice, const GrayImage& mask,
                                                   const Rect& window);

enum class Split { kUnassigned, kTrain, kTest };
std::string_view split_name(Split s);

inline constexpr std::string_view kQuestionTemplate = "Which abnormality is present in this CT slice?";

struct QARecord {
  std::string image;
  bool augmented = false;
  std::string question{kQuestionTemplate};
  std::string answer;
  int class_id = 0;
  Rect bbox;
  std::string patient_id;
  int slice = 0;
  Split split = Split::kUnassigned;
  FeatureVector features{};
  std::array<double, kNumZoomFeatures> zoom{};

  friend bool operator==(const QARecord&, const QARecord&) = default;
};

/// Receives each emitted record with its image; may be called from worker threads.
using ImageSink = std::function<void(const QARecord&, const RgbImage&)>;

struct CaseOutput {
  std::vector<QARecord> records;
  std::vector<std::string> warnings;
};

/// Runs the per-case pipeline: eligible slices, cap, largest box, augmentation.
CaseOutput process_case(const SyntheticCase& c, const AugmentConfig& cfg, const ImageSink& sink = {});

struct BuildResult {
  std::vector<QARecord> records;  // sorted by (patient id, slice)
  std::vector<std::string> warnings;
};

BuildResult build_dataset(std::span<const SyntheticCase> cases, const AugmentConfig& cfg,
                          const ImageSink& sink = {}, std::size_t threads = 1);

/// Patient-level split: patients are shuffled by seed, and the train set is
/// the shuffled prefix whose record share best approximates `ratio`.
/// Returns warnings (e.g. for a single patient).
std::vector<std::string> split_dataset(std::vector<QARecord>& records, double ratio, std::uint64_t seed);

}  // namespace ctgrpo
