#include "ctgrpo/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ctgrpo/error.hpp"

namespace ctgrpo {
namespace {

constexpr std::array<char, 8> kMagic = {'C', 'T', 'G', 'R', 'P', 'O', 'C', 'K'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw InvalidInput("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw InvalidInput("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

std::array<std::array<std::uint32_t, 2>, 8> shape_table(const PolicyShape& s) {
  const auto V = static_cast<std::uint32_t>(s.vocab);
  const auto d = static_cast<std::uint32_t>(s.dim);
  const auto F = static_cast<std::uint32_t>(s.input);
  return {{{V, d}, {d, F}, {d, 1}, {d, d}, {d, d}, {d, 1}, {V, d}, {V, 1}}};
}

}  // namespace

void write_checkpoint(std::ostream& out, const PolicyParams& params) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(params.role()));
  const PolicyShape& s = params.shape();
  put_u32(out, static_cast<std::uint32_t>(s.vocab));
  put_u32(out, static_cast<std::uint32_t>(s.dim));
  put_u32(out, static_cast<std::uint32_t>(s.input));
  const auto table = shape_table(s);
  put_u32(out, static_cast<std::uint32_t>(table.size()));
  for (const auto& [rows, cols] : table) {
    put_u32(out, rows);
    put_u32(out, cols);
  }
  for (double v : params.values()) put_f64(out, v);
  if (!out) throw std::runtime_error("failed writing checkpoint");
}

PolicyParams read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic)
    throw InvalidInput("not a checkpoint (bad magic)");
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion)
    throw InvalidInput("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t role = get_u32(in);
  if (role > 2) throw InvalidInput("checkpoint role out of range");
  PolicyShape s;
  s.vocab = get_u32(in);
  s.dim = get_u32(in);
  s.input = get_u32(in);
  const auto expected = shape_table(s);
  if (get_u32(in) != expected.size()) throw InvalidInput("checkpoint tensor count mismatch");
  for (const auto& [rows, cols] : expected) {
    if (get_u32(in) != rows || get_u32(in) != cols)
      throw InvalidInput("checkpoint shape table does not match its header");
  }
  PolicyParams params(s, static_cast<ParamRole>(role));
  for (double& v : params.values()) v = get_f64(in);
  if (!params.all_finite()) throw InvalidInput("checkpoint contains non-finite values");
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(out, params);
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace ctgrpo
