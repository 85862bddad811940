#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "ctgrpo/forge.hpp"
#include "ctgrpo/policy.hpp"
#include "ctgrpo/rng.hpp"

namespace ctgrpo::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ctgrpo_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Random parameters with every entry (biases too) drawn at `scale`.
inline PolicyParams dense_random_params(PolicyShape shape, std::uint64_t seed, double scale = 0.5) {
  PolicyParams p(shape);
  Rng rng(seed);
  for (double& v : p.values()) v = scale * standard_normal(rng);
  return p;
}

inline Query random_query(std::uint64_t seed) {
  Rng rng(seed);
  Query q;
  for (double& f : q.features) f = 2.0 * uniform01(rng) - 1.0;
  for (double& z : q.zoom) z = 2.0 * uniform01(rng) - 1.0;
  q.mode = uniform01(rng) < 0.5 ? PromptMode::kWithThink : PromptMode::kWithoutThink;
  return q;
}

inline std::vector<TokenId> random_tokens(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenId> t(n);
  for (auto& v : t) v = static_cast<TokenId>(uniform_index(rng, vocab));
  return t;
}

/// Records of `cases` synthetic cases, split 8:2 by patient.
inline std::vector<QARecord> small_dataset(std::size_t cases, std::uint64_t seed) {
  std::vector<SyntheticCase> cs;
  for (std::size_t i = 0; i < cases; ++i) cs.push_back(gen_case(case_seed(seed, i), SynthConfig{}, patient_id_for(i)));
  auto built = build_dataset(cs, AugmentConfig{});
  split_dataset(built.records, 0.8, seed);
  return built.records;
}

}  // namespace ctgrpo::testing
