#include "ctgrpo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "ctgrpo/error.hpp"
#include "ctgrpo/rng.hpp"

namespace ctgrpo {

BucketVector bucketize(const FeatureVector& features) {
  BucketVector b{};
  for (int k = 0; k < kNumFeatures; ++k) b[k] = features[k] > 0.0;
  return b;
}

int classify_buckets(const BucketVector& b) {
  using namespace feature;
  if (b[kPeripheral] && !b[kElongation]) return cls::kPleural;
  if (b[kTexture]) return b[kIntensity] ? cls::kConsolidation : cls::kGroundGlass;
  if (b[kElongation] && b[kExtent]) return cls::kFibrosis;
  if (b[kSize] && !b[kMultiplicity]) return cls::kNodule;
  if (b[kMultiplicity]) return cls::kEmphysema;
  return cls::kAirway;
}

int classify_features(const FeatureVector& features) {
  for (double f : features)
    if (!std::isfinite(f)) throw InvalidInput("features must be finite");
  return classify_buckets(bucketize(features));
}

void SynthConfig::validate() const {
  if (size < 64) throw InvalidInput("synth.size must be >= 64");
  if (min_slices < 1 || max_slices < min_slices) throw InvalidInput("synth slice range is invalid");
  double total = 0.0;
  for (double p : mixture) {
    if (!(p >= 0.0)) throw InvalidInput("synth.mixture entries must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("synth.mixture must sum to 1");
  if (!(distractor_prob >= 0.0 && distractor_prob <= 1.0)) throw InvalidInput("synth.distractor_prob must be in [0, 1]");
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw InvalidInput("synth.label_noise must be in [0, 1]");
}

const GrayImage* SyntheticCase::mask(int slice, int class_id) const {
  if (slice < 0 || static_cast<std::size_t>(slice) >= masks.size()) return nullptr;
  auto it = masks[static_cast<std::size_t>(slice)].find(class_id);
  return it == masks[static_cast<std::size_t>(slice)].end() ? nullptr : &it->second;
}

std::string patient_id_for(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "P%06zu", index);
  return buf;
}

std::uint64_t case_seed(std::uint64_t run_seed, std::size_t index) {
  return derive_seed({run_seed, 0x63617365ULL, index});
}

namespace {

// Deterministic per-pixel noise in [-1, 1).
inline double pixel_noise(std::uint64_t key, int x, int y) {
  const std::uint64_t h = splitmix64(key ^ (static_cast<std::uint64_t>(y) << 32 | static_cast<std::uint32_t>(x)));
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

struct Lesion {
  int class_id = 0;
  double cx = 0, cy = 0;
  double rx = 0, ry = 0;   // semi-axes at peak
  double intensity = 0;
  double texture = 0;
  int z0 = 0, extent = 1;  // slices [z0, z0 + extent)
};

GrayImage base_slice(int size, std::uint64_t key) {
  GrayImage img(size, size, 0);
  const double s = size;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double bx = (x - 0.5 * s) / (0.47 * s), by = (y - 0.5 * s) / (0.42 * s);
      if (bx * bx + by * by > 1.0) continue;
      double v = 110.0;
      const double lx = (std::abs(x - 0.5 * s) - 0.21 * s) / (0.16 * s), ly = (y - 0.5 * s) / (0.33 * s);
      if (lx * lx + ly * ly <= 1.0) v = 45.0;
      v += 6.0 * pixel_noise(key, x, y);
      img.at(x, y) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  return img;
}

void paint(SyntheticCase& c, const Lesion& l, std::uint64_t key) {
  const int n = static_cast<int>(c.slices.size());
  for (int z = l.z0; z < std::min(n, l.z0 + l.extent); ++z) {
    const double p = std::sin(std::numbers::pi * (z - l.z0 + 0.5) / l.extent);
    const double rx = l.rx * std::sqrt(p), ry = l.ry * std::sqrt(p);
    if (rx < 1.0 || ry < 1.0) continue;
    GrayImage& img = c.slices[static_cast<std::size_t>(z)];
    const int W = img.width, H = img.height;
    const int ylo = std::max(0, static_cast<int>(std::floor(l.cy - ry)));
    const int yhi = std::min(H - 1, static_cast<int>(std::ceil(l.cy + ry)));
    const int xlo = std::max(0, static_cast<int>(std::floor(l.cx - rx)));
    const int xhi = std::min(W - 1, static_cast<int>(std::ceil(l.cx + rx)));
    if (ylo > yhi || xlo > xhi) continue;
    auto [it, inserted] = c.masks[static_cast<std::size_t>(z)].try_emplace(l.class_id, W, H, 0);
    GrayImage& mask = it->second;
    const std::uint64_t zkey = derive_seed({key, static_cast<std::uint64_t>(z)});
    for (int y = ylo; y <= yhi; ++y) {
      const double dy = (y - l.cy) / ry;
      for (int x = xlo; x <= xhi; ++x) {
        const double dx = (x - l.cx) / rx;
        if (dx * dx + dy * dy > 1.0) continue;
        const double v = l.intensity + l.texture * pixel_noise(zkey, x, y);
        img.at(x, y) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        mask.at(x, y) = 1;
      }
    }
  }
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

int draw_class(Rng& rng, const std::array<double, kNumClasses>& mixture) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (int k = 0; k < kNumClasses; ++k) {
    acc += mixture[k];
    if (u < acc) return k;
  }
  for (int k = kNumClasses - 1; k >= 0; --k)
    if (mixture[k] > 0.0) return k;
  return 0;
}

FeatureVector features_for_class(Rng& rng, int cls) {
  BucketVector b{};
  do {
    for (auto&& bit : b) bit = (rng() >> 63) != 0;
  } while (classify_buckets(b) != cls);
  FeatureVector f{};
  for (int k = 0; k < kNumFeatures; ++k) f[k] = (b[k] ? 1.0 : -1.0) * uniform(rng, 0.25, 1.0);
  return f;
}

CaseDescriptor draw_descriptor(Rng& rng, const SynthConfig& cfg) {
  CaseDescriptor d;
  const int cls = draw_class(rng, cfg.mixture);
  d.features = features_for_class(rng, cls);
  d.class_id = cls;
  if (cfg.label_noise > 0.0 && uniform01(rng) < cfg.label_noise)
    d.class_id = static_cast<int>(uniform_index(rng, kNumClasses));
  return d;
}

// Geometry of the primary lesion follows the descriptor.
Lesion primary_lesion(Rng& rng, const FeatureVector& f, int cls, int size, int slices) {
  using namespace feature;
  Lesion l;
  l.class_id = cls;
  const double a = 32.0 + 10.0 * (f[kSize] + 1.0);
  const double aspect = 1.0 + 0.5 * (f[kElongation] + 1.0);
  const bool vertical = (rng() >> 63) != 0;
  l.rx = vertical ? a / aspect : a;
  l.ry = vertical ? a : a / aspect;
  l.intensity = 150.0 + 60.0 * f[kIntensity];
  l.texture = 20.0 + 15.0 * f[kTexture];
  l.extent = std::min(slices, static_cast<int>(std::lround(4.0 + 3.0 * (f[kExtent] + 1.0))));
  l.z0 = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(slices - l.extent + 1)));

  const double s = size;
  const bool inferior = f[kInferior] > 0.0;
  if (f[kPeripheral] > 0.0) {
    // Centre within the outer band, close to a lateral or vertical edge.
    const double band = 0.2 * s;
    const int side = static_cast<int>(uniform_index(rng, 4));
    const bool horizontal_edge = side >= 2;
    const double reach = horizontal_edge ? l.ry : l.rx;
    const double d = uniform(rng, std::min(reach + 6.0, band - 8.0), band - 8.0);
    const double along_lo = (horizontal_edge ? l.rx : l.ry) + 6.0;
    double along = inferior ? uniform(rng, 0.5 * s, s - along_lo) : uniform(rng, along_lo, 0.5 * s);
    if (horizontal_edge) {
      l.cx = along;
      l.cy = side == 2 ? d : s - d;
    } else {
      l.cx = side == 0 ? d : s - d;
      l.cy = along;
    }
  } else {
    l.cx = uniform(rng, 0.28 * s, 0.72 * s);
    l.cy = inferior ? uniform(rng, 0.5 * s, 0.72 * s) : uniform(rng, 0.28 * s, 0.5 * s);
  }
  return l;
}

}  // namespace

CaseDescriptor describe_case(std::uint64_t seed, const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed({seed, 0x67656eULL}));
  return draw_descriptor(rng, cfg);
}

SyntheticCase gen_case(std::uint64_t seed, const SynthConfig& cfg, std::string patient_id) {
  cfg.validate();
  Rng rng(derive_seed({seed, 0x67656eULL}));
  SyntheticCase c;
  c.patient_id = std::move(patient_id);
  c.seed = seed;
  const CaseDescriptor desc = draw_descriptor(rng, cfg);
  c.features = desc.features;
  c.class_id = desc.class_id;

  const int n = cfg.min_slices + static_cast<int>(uniform_index(
                                     rng, static_cast<std::uint64_t>(cfg.max_slices - cfg.min_slices + 1)));
  const std::uint64_t key = derive_seed({seed, 0x706978ULL});
  const GrayImage base = base_slice(cfg.size, key);
  c.slices.assign(static_cast<std::size_t>(n), base);
  c.masks.assign(static_cast<std::size_t>(n), SliceMasks{});

  const Lesion primary = primary_lesion(rng, c.features, c.class_id, cfg.size, n);
  std::vector<Lesion> lesions{primary};
  if (c.features[feature::kMultiplicity] > 0.0) {
    // Satellites: small same-class blobs near the primary lesion.
    const int extra = 1 + static_cast<int>(uniform_index(rng, 2));
    for (int i = 0; i < extra; ++i) {
      Lesion s = primary;
      s.rx = s.ry = uniform(rng, 8.0, 16.0);
      const double ang = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double dist = std::max(primary.rx, primary.ry) + s.rx + uniform(rng, 4.0, 20.0);
      s.cx = std::clamp(primary.cx + dist * std::cos(ang), s.rx + 1.0, cfg.size - s.rx - 2.0);
      s.cy = std::clamp(primary.cy + dist * std::sin(ang), s.ry + 1.0, cfg.size - s.ry - 2.0);
      lesions.push_back(s);
    }
  }
  if (uniform01(rng) < cfg.distractor_prob) {
    Lesion d;
    d.class_id = static_cast<int>((c.class_id + 1 + uniform_index(rng, kNumClasses - 1)) % kNumClasses);
    d.rx = uniform(rng, 12.0, 40.0);
    d.ry = uniform(rng, 12.0, 40.0);
    d.cx = uniform(rng, 60.0, cfg.size - 60.0);
    d.cy = uniform(rng, 60.0, cfg.size - 60.0);
    d.intensity = uniform(rng, 90.0, 210.0);
    d.texture = uniform(rng, 5.0, 35.0);
    d.extent = std::min(n, 2 + static_cast<int>(uniform_index(rng, 6)));
    d.z0 = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n - d.extent + 1)));
    lesions.insert(lesions.begin(), d);  // painted first; the primary lesion stays on top
  }
  for (std::size_t i = 0; i < lesions.size(); ++i) paint(c, lesions[i], derive_seed({key, i + 1}));
  return c;
}

std::vector<TokenId> gold_tokens(const FeatureVector& features, int class_id, PromptMode mode) {
  if (class_id < 0 || class_id >= kNumClasses) throw InvalidInput("class id out of range");
  std::vector<TokenId> out;
  if (mode == PromptMode::kWithThink) {
    out.push_back(tok::kThinkOpen);
    for (int k = 0; k < kNumFeatures; ++k) out.push_back(Vocab::evidence_token(k, features[k] > 0.0));
    out.push_back(tok::kThinkClose);
  }
  out.push_back(tok::kAnswerOpen);
  out.push_back(Vocab::class_token(class_id));
  out.push_back(tok::kAnswerClose);
  out.push_back(tok::kEos);
  return out;
}

Demonstration demonstration(const SyntheticCase& c, int slice, PromptMode mode,
                            std::array<double, kNumZoomFeatures> zoom) {
  const GrayImage* m = c.mask(slice, c.class_id);
  if (!m || std::none_of(m->pixels.begin(), m->pixels.end(), [](std::uint8_t v) { return v != 0; }))
    throw InvalidInput("slice " + std::to_string(slice) + " shows no lesion of the case class");
  Demonstration d;
  d.query.features = c.features;
  d.query.zoom = zoom;
  d.query.mode = mode;
  d.query.gt_class = c.class_id;
  d.query.patient_id = c.patient_id;
  d.gold = gold_tokens(c.features, c.class_id, mode);
  return d;
}

std::optional<int> judge_think(std::span<const TokenId> think_tokens) {
  BucketVector b{};
  bool any = false;
  for (TokenId t : think_tokens) {
    if (!Vocab::is_evidence(t)) continue;
    b[Vocab::evidence_feature(t)] = Vocab::evidence_high(t);
    any = true;
  }
  if (!any) return std::nullopt;
  return classify_buckets(b);
}

}  // namespace ctgrpo
