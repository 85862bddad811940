#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ctgrpo/forge.hpp"
#include "ctgrpo/sft.hpp"
#include "ctgrpo/synth.hpp"

namespace ctgrpo {

/// One JSON object per record with keys in a fixed order:
/// image, augmented, question, answer, class_id, bbox, patient_id, slice,
/// split, features, zoom. No trailing whitespace; the caller adds "\n".
std::string record_to_json(const QARecord& record);
QARecord record_from_json(const std::string& line);

void write_records(const std::filesystem::path& path, std::span<const QARecord> records);
std::vector<QARecord> read_records(const std::filesystem::path& path);

/// Views of a record set.
std::vector<QARecord> select_split(std::span<const QARecord> records, Split split);
/// Same records with the zoom entries cleared (the raw, non-augmented variant).
std::vector<QARecord> without_zoom(std::span<const QARecord> records);

struct QueryOptions {
  /// Blank the intensity descriptor so it is only visible through the zoom
  /// entries (global view cannot resolve lesion intensity).
  bool hide_global_intensity = false;
};

Query query_from_record(const QARecord& record, PromptMode mode, const QueryOptions& opts = {});
std::vector<Query> queries_from_records(std::span<const QARecord> records, PromptMode mode,
                                        const QueryOptions& opts = {});

enum class SftModes { kBoth, kWithThink, kWithoutThink };

/// Demonstrations for every record in the requested prompt modes.
std::vector<SftExample> sft_examples(std::span<const QARecord> records, SftModes modes,
                                     const QueryOptions& opts = {});

/// On-disk layout of a synthesized cohort:
///   <dir>/manifest.jsonl                one line per case
///   <dir>/<patient>/slice_NNN.png       8-bit grayscale slice
///   <dir>/<patient>/mask_NNN_cK.png     binary mask of class K (0/255)
void write_case(const std::filesystem::path& dir, const SyntheticCase& c, std::ostream& manifest);
SyntheticCase read_case(const std::filesystem::path& dir, const std::string& manifest_line);

}  // namespace ctgrpo
