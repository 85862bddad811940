#include "ctgrpo/records.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "ctgrpo/error.hpp"
#include "ctgrpo/png_io.hpp"

namespace ctgrpo {

using ordered_json = nlohmann::ordered_json;

namespace {

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  if (s == "unassigned") return Split::kUnassigned;
  throw InvalidInput("unknown split tag '" + s + "'");
}

template <std::size_t N>
std::array<double, N> read_array(const ordered_json& j, const char* key) {
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != N) throw InvalidInput(std::string("record field '") + key + "' has the wrong length");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = a[i].get<double>();
  return out;
}

}  // namespace

std::string record_to_json(const QARecord& r) {
  ordered_json j;
  j["image"] = r.image;
  j["augmented"] = r.augmented;
  j["question"] = r.question;
  j["answer"] = r.answer;
  j["class_id"] = r.class_id;
  j["bbox"] = {r.bbox.x0, r.bbox.y0, r.bbox.x1, r.bbox.y1};
  j["patient_id"] = r.patient_id;
  j["slice"] = r.slice;
  j["split"] = std::string(split_name(r.split));
  j["features"] = r.features;
  j["zoom"] = r.zoom;
  return j.dump();
}

QARecord record_from_json(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
    QARecord r;
    r.image = j.at("image").get<std::string>();
    r.augmented = j.at("augmented").get<bool>();
    r.question = j.at("question").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.class_id = j.at("class_id").get<int>();
    const auto& b = j.at("bbox");
    if (!b.is_array() || b.size() != 4) throw InvalidInput("record bbox must have 4 entries");
    r.bbox = Rect{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
    r.patient_id = j.at("patient_id").get<std::string>();
    r.slice = j.at("slice").get<int>();
    r.split = parse_split(j.at("split").get<std::string>());
    r.features = read_array<kNumFeatures>(j, "features");
    r.zoom = read_array<kNumZoomFeatures>(j, "zoom");
    if (r.class_id < 0 || r.class_id >= kNumClasses) throw InvalidInput("record class_id out of range");
    if (class_label(r.class_id) != r.answer) throw InvalidInput("record answer does not match class_id");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed record: ") + e.what());
  }
}

void write_records(const std::filesystem::path& path, std::span<const QARecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& r : records) out << record_to_json(r) << '\n';
}

std::vector<QARecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open records file " + path.string());
  std::vector<QARecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(line));
    } catch (const InvalidInput& e) {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<QARecord> select_split(std::span<const QARecord> records, Split split) {
  std::vector<QARecord> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(r);
  return out;
}

std::vector<QARecord> without_zoom(std::span<const QARecord> records) {
  std::vector<QARecord> out(records.begin(), records.end());
  for (auto& r : out) {
    r.augmented = false;
    r.zoom = {};
  }
  return out;
}

Query query_from_record(const QARecord& record, PromptMode mode, const QueryOptions& opts) {
  Query q;
  q.features = record.features;
  if (opts.hide_global_intensity) q.features[feature::kIntensity] = 0.0;
  q.zoom = record.zoom;
  q.mode = mode;
  q.gt_class = record.class_id;
  q.patient_id = record.patient_id;
  return q;
}

std::vector<Query> queries_from_records(std::span<const QARecord> records, PromptMode mode,
                                        const QueryOptions& opts) {
  std::vector<Query> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(query_from_record(r, mode, opts));
  return out;
}

std::vector<SftExample> sft_examples(std::span<const QARecord> records, SftModes modes,
                                     const QueryOptions& opts) {
  std::vector<SftExample> out;
  for (const auto& r : records) {
    for (PromptMode m : {PromptMode::kWithThink, PromptMode::kWithoutThink}) {
      if (modes == SftModes::kWithThink && m != PromptMode::kWithThink) continue;
      if (modes == SftModes::kWithoutThink && m != PromptMode::kWithoutThink) continue;
      out.push_back({query_from_record(r, m, opts), gold_tokens(r.features, r.class_id, m)});
    }
  }
  return out;
}

void write_case(const std::filesystem::path& dir, const SyntheticCase& c, std::ostream& manifest) {
  const std::filesystem::path pdir = dir / c.patient_id;
  std::filesystem::create_directories(pdir);
  ordered_json j;
  j["patient_id"] = c.patient_id;
  j["seed"] = c.seed;
  j["class_id"] = c.class_id;
  j["class"] = std::string(class_label(c.class_id));
  j["features"] = c.features;
  j["width"] = c.width();
  j["height"] = c.height();
  ordered_json slices = ordered_json::array();
  for (std::size_t z = 0; z < c.slices.size(); ++z) {
    char name[64];
    std::snprintf(name, sizeof(name), "slice_%03zu.png", z);
    write_png(pdir / name, c.slices[z]);
    ordered_json s;
    s["index"] = z;
    s["image"] = c.patient_id + "/" + name;
    ordered_json masks = ordered_json::object();
    for (const auto& [cls, mask] : c.masks[z]) {
      std::snprintf(name, sizeof(name), "mask_%03zu_c%d.png", z, cls);
      GrayImage scaled = mask;
      for (auto& v : scaled.pixels) v = v ? 255 : 0;
      write_png(pdir / name, scaled);
      masks[std::to_string(cls)] = c.patient_id + "/" + name;
    }
    s["masks"] = masks;
    slices.push_back(s);
  }
  j["slices"] = slices;
  manifest << j.dump() << '\n';
}

SyntheticCase read_case(const std::filesystem::path& dir, const std::string& manifest_line) {
  try {
    const auto j = ordered_json::parse(manifest_line);
    SyntheticCase c;
    c.patient_id = j.at("patient_id").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.class_id = j.at("class_id").get<int>();
    c.features = read_array<kNumFeatures>(j, "features");
    for (const auto& s : j.at("slices")) {
      c.slices.push_back(read_png_gray(dir / s.at("image").get<std::string>()));
      SliceMasks masks;
      for (const auto& [key, path] : s.at("masks").items()) {
        GrayImage m = read_png_gray(dir / path.get<std::string>());
        for (auto& v : m.pixels) v = v ? 1 : 0;
        masks.emplace(std::stoi(key), std::move(m));
      }
      c.masks.push_back(std::move(masks));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed case manifest line: ") + e.what());
  }
}

}  // namespace ctgrpo
