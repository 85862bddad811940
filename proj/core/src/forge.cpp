#include "ctgrpo/forge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <tuple>

#include "ctgrpo/error.hpp"
#include "ctgrpo/parallel.hpp"
#include "ctgrpo/rng.hpp"

namespace ctgrpo {

namespace {

struct UnionFind {
  std::vector<std::int32_t> parent;

  std::int32_t make() {
    parent.push_back(static_cast<std::int32_t>(parent.size()));
    return parent.back();
  }
  std::int32_t find(std::int32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

Regions connected_components(const GrayImage& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8) throw InvalidInput("connectivity must be 4 or 8");
  const int W = mask.width, H = mask.height;
  Regions r;
  r.width = W;
  r.height = H;
  r.labels.assign(static_cast<std::size_t>(W) * H, 0);

  // Two-pass labeling with provisional labels starting at 1 (0 is a dummy root).
  UnionFind uf;
  uf.make();
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!mask.at(x, y)) continue;
      std::int32_t best = 0;
      std::int32_t neigh[4];
      int nn = 0;
      auto look = [&](int nx, int ny) {
        if (nx < 0 || nx >= W || ny < 0) return;
        const std::int32_t l = r.labels[static_cast<std::size_t>(ny) * W + nx];
        if (l) neigh[nn++] = l;
      };
      look(x - 1, y);
      look(x, y - 1);
      if (connectivity == 8) {
        look(x - 1, y - 1);
        look(x + 1, y - 1);
      }
      if (nn == 0) {
        best = uf.make();
      } else {
        best = neigh[0];
        for (int i = 1; i < nn; ++i) best = std::min(best, neigh[i]);
        for (int i = 0; i < nn; ++i) uf.unite(best, neigh[i]);
      }
      r.labels[static_cast<std::size_t>(y) * W + x] = best;
    }
  }

  // Resolve to dense final labels in raster order of first appearance.
  std::vector<std::int32_t> final_label(uf.parent.size(), 0);
  for (auto& l : r.labels) {
    if (!l) continue;
    const std::int32_t root = uf.find(l);
    if (!final_label[root]) {
      final_label[root] = static_cast<std::int32_t>(r.areas.size() + 1);
      r.areas.push_back(0);
      r.boxes.push_back(Rect{W, H, 0, 0});
    }
    l = final_label[root];
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::int32_t l = r.labels[static_cast<std::size_t>(y) * W + x];
      if (!l) continue;
      ++r.areas[l - 1];
      Rect& b = r.boxes[l - 1];
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x + 1);
      b.y1 = std::max(b.y1, y + 1);
    }
  }
  return r;
}

std::vector<LesionBox> extract_boxes(const Regions& regions, int class_id, int slice, std::size_t min_area) {
  std::vector<LesionBox> out;
  for (std::size_t k = 0; k < regions.count(); ++k) {
    if (regions.areas[k] <= min_area) continue;
    out.push_back(LesionBox{class_id, slice, regions.boxes[k], regions.areas[k]});
  }
  std::stable_sort(out.begin(), out.end(), [](const LesionBox& a, const LesionBox& b) {
    return std::pair{a.bbox.y0, a.bbox.x0} < std::pair{b.bbox.y0, b.bbox.x0};
  });
  return out;
}

std::vector<int> sample_slices(std::span<const int> eligible, std::size_t cap) {
  if (eligible.empty()) throw EmptyInput("sample_slices needs at least one eligible slice");
  if (cap == 0) throw InvalidInput("slice cap must be >= 1");
  if (eligible.size() <= cap) return {eligible.begin(), eligible.end()};
  std::vector<int> out;
  if (cap == 1) return {eligible.front()};
  const double span = static_cast<double>(eligible.size() - 1);
  for (std::size_t k = 0; k < cap; ++k) {
    const auto pos = static_cast<std::size_t>(std::lround(static_cast<double>(k) * span / static_cast<double>(cap - 1)));
    if (out.empty() || out.back() != eligible[pos]) out.push_back(eligible[pos]);
  }
  return out;
}

void AugmentConfig::validate(int width, int height) const {
  if (patch < 1 || border < 0) throw InvalidInput("forge.patch must be >= 1 and forge.border >= 0");
  if (pasted_side() > width || pasted_side() > height)
    throw InvalidInput("zoom patch with border does not fit inside the slice");
  if (min_area == 0) throw InvalidInput("forge.min_area must be > 0");
  if (slice_cap == 0) throw InvalidInput("forge.slice_cap must be >= 1");
  if (connectivity != 4 && connectivity != 8) throw InvalidInput("forge.connectivity must be 4 or 8");
}

Rect square_crop(const Rect& bbox, int width, int height) {
  const int side = std::min({std::max(bbox.width(), bbox.height()), width, height});
  // Centre the square on the bbox (integer arithmetic keeps it exact).
  int x0 = bbox.x0 - (side - bbox.width()) / 2;
  int y0 = bbox.y0 - (side - bbox.height()) / 2;
  x0 = std::clamp(x0, 0, width - side);
  y0 = std::clamp(y0, 0, height - side);
  return Rect{x0, y0, x0 + side, y0 + side};
}

RgbImage zoom_augment(const GrayImage& slice, const LesionBox& box, const AugmentConfig& cfg) {
  cfg.validate(slice.width, slice.height);
  const Rect& b = box.bbox;
  if (b.empty() || b.x0 < 0 || b.y0 < 0 || b.x1 > slice.width || b.y1 > slice.height)
    throw InvalidInput("lesion box lies outside the slice");
  const Rect crop = square_crop(b, slice.width, slice.height);
  const GrayImage patch = resize_bilinear(slice, crop, cfg.patch, cfg.patch);

  RgbImage out = to_rgb(slice);
  const int side = cfg.pasted_side();
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      std::uint8_t* p = out.px(x, y);
      const bool inner = x >= cfg.border && x < cfg.border + cfg.patch && y >= cfg.border &&
                         y < cfg.border + cfg.patch;
      if (inner) {
        p[0] = p[1] = p[2] = patch.at(x - cfg.border, y - cfg.border);
      } else {
        p[0] = cfg.border_color[0];
        p[1] = cfg.border_color[1];
        p[2] = cfg.border_color[2];
      }
    }
  }
  return out;
}

std::array<double, kNumZoomFeatures> zoom_features(const GrayImage& slice, const GrayImage& mask,
                                                   const Rect& window) {
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = window.y0; y < window.y1; ++y) {
    for (int x = window.x0; x < window.x1; ++x) {
      if (!mask.at(x, y)) continue;
      sum += slice.at(x, y);
      ++n;
    }
  }
  if (n == 0) return {0.0, -1.0};
  const double mean = sum / static_cast<double>(n);
  const double frac = static_cast<double>(n) / static_cast<double>(window.area());
  return {(mean - 150.0) / 60.0, 2.0 * frac - 1.0};
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
    case Split::kUnassigned: break;
  }
  return "unassigned";
}

CaseOutput process_case(const SyntheticCase& c, const AugmentConfig& cfg, const ImageSink& sink) {
  CaseOutput out;
  if (c.slices.empty()) {
    out.warnings.push_back("case " + c.patient_id + " has no slices; skipped");
    return out;
  }
  cfg.validate(c.width(), c.height());

  std::vector<int> eligible;
  std::map<int, LesionBox> chosen;
  for (int z = 0; z < static_cast<int>(c.slices.size()); ++z) {
    const GrayImage* mask = c.mask(z, c.class_id);
    if (!mask) continue;
    const auto boxes = extract_boxes(connected_components(*mask, cfg.connectivity), c.class_id, z, cfg.min_area);
    if (boxes.empty()) continue;
    eligible.push_back(z);
    // Largest component; ties keep the first in (y0, x0) order.
    const LesionBox* best = &boxes.front();
    for (const auto& b : boxes)
      if (b.area > best->area) best = &b;
    chosen.emplace(z, *best);
  }
  if (eligible.empty()) {
    out.warnings.push_back("case " + c.patient_id + " has no lesion component larger than " +
                           std::to_string(cfg.min_area) + " px; skipped");
    return out;
  }

  for (int z : sample_slices(eligible, cfg.slice_cap)) {
    const LesionBox& box = chosen.at(z);
    const GrayImage& slice = c.slices[static_cast<std::size_t>(z)];
    QARecord rec;
    char name[64];
    std::snprintf(name, sizeof(name), "images/%s_s%03d.png", c.patient_id.c_str(), z);
    rec.image = name;
    rec.augmented = cfg.augment;
    rec.answer = std::string(class_label(c.class_id));
    rec.class_id = c.class_id;
    rec.bbox = box.bbox;
    rec.patient_id = c.patient_id;
    rec.slice = z;
    rec.features = c.features;
    if (cfg.augment) {
      const Rect window = square_crop(box.bbox, slice.width, slice.height);
      rec.zoom = zoom_features(slice, *c.mask(z, c.class_id), window);
      if (sink) sink(rec, zoom_augment(slice, box, cfg));
    } else if (sink) {
      sink(rec, to_rgb(slice));
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

BuildResult build_dataset(std::span<const SyntheticCase> cases, const AugmentConfig& cfg,
                          const ImageSink& sink, std::size_t threads) {
  if (cases.empty()) throw EmptyInput("build_dataset needs at least one case");
  std::vector<CaseOutput> parts(cases.size());
  parallel_for(cases.size(), threads, [&](std::size_t i) { parts[i] = process_case(cases[i], cfg, sink); });
  BuildResult out;
  for (auto& p : parts) {
    std::move(p.records.begin(), p.records.end(), std::back_inserter(out.records));
    std::move(p.warnings.begin(), p.warnings.end(), std::back_inserter(out.warnings));
  }
  std::stable_sort(out.records.begin(), out.records.end(), [](const QARecord& a, const QARecord& b) {
    return std::tie(a.patient_id, a.slice) < std::tie(b.patient_id, b.slice);
  });
  return out;
}

std::vector<std::string> split_dataset(std::vector<QARecord>& records, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidInput("split ratio must be in (0, 1)");
  std::vector<std::string> warnings;
  std::map<std::string, std::size_t> per_patient;
  for (const auto& r : records) ++per_patient[r.patient_id];
  if (per_patient.empty()) return warnings;

  std::vector<std::string> patients;
  for (const auto& [id, n] : per_patient) patients.push_back(id);
  if (patients.size() == 1) {
    for (auto& r : records) r.split = Split::kTrain;
    warnings.push_back("only one patient (" + patients.front() + "); every record assigned to train");
    return warnings;
  }
  Rng rng(derive_seed({seed, 0x73706c6974ULL}));
  shuffle(std::span<std::string>(patients), rng);

  // Best prefix boundary, keeping at least one patient on each side.
  const double total = static_cast<double>(records.size());
  std::size_t cum = 0, best_k = 1;
  double best_err = 2.0;
  for (std::size_t k = 1; k < patients.size(); ++k) {
    cum += per_patient[patients[k - 1]];
    const double err = std::abs(static_cast<double>(cum) / total - ratio);
    if (err < best_err) {
      best_err = err;
      best_k = k;
    }
  }
  std::map<std::string, Split> assign;
  for (std::size_t k = 0; k < patients.size(); ++k) assign[patients[k]] = k < best_k ? Split::kTrain : Split::kTest;
  for (auto& r : records) r.split = assign.at(r.patient_id);
  return warnings;
}

}  // namespace ctgrpo
