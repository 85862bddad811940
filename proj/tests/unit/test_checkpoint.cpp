#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "ctgrpo/checkpoint.hpp"
#include "ctgrpo/error.hpp"
#include "support.hpp"

namespace ctgrpo {
namespace {

TEST(Checkpoint, RoundTripIsBitIdentical) {
  for (auto role : {ParamRole::kTrainable, ParamRole::kOldSnapshot, ParamRole::kReference}) {
    const auto p = PolicyParams::random_init({Vocab::size(), 8, kConditioningDim}, 3).with_role(role);
    std::stringstream buf;
    write_checkpoint(buf, p);
    EXPECT_TRUE(bit_identical(read_checkpoint(buf), p));
  }
}

TEST(Checkpoint, HeaderLayout) {
  const PolicyParams p({Vocab::size(), 4, kConditioningDim});
  std::stringstream buf;
  write_checkpoint(buf, p);
  const std::string bytes = buf.str();
  EXPECT_EQ(bytes.substr(0, 8), "CTGRPOCK");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), kCheckpointVersion);
  // magic + version + role + 3 dims + count + 8 (rows, cols) pairs, then values.
  EXPECT_EQ(bytes.size(), 8 + 4 * 5 + 4 + 8 * 8 + 8 * p.size());
}

TEST(Checkpoint, FileRoundTrip) {
  testing::TempDir dir("ckpt");
  const auto p = PolicyParams::random_init({}, 11);
  save_checkpoint(dir / "p.ckpt", p);
  EXPECT_TRUE(bit_identical(load_checkpoint(dir / "p.ckpt"), p));
}

TEST(Checkpoint, RejectsCorruptInput) {
  const auto p = PolicyParams::random_init({Vocab::size(), 4, kConditioningDim}, 1);
  std::stringstream buf;
  write_checkpoint(buf, p);
  const std::string good = buf.str();

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  std::stringstream a(bad_magic);
  EXPECT_THROW(read_checkpoint(a), InvalidInput);

  std::string bad_version = good;
  bad_version[8] = 9;
  std::stringstream b(bad_version);
  EXPECT_THROW(read_checkpoint(b), InvalidInput);

  std::stringstream c(good.substr(0, good.size() - 3));
  EXPECT_THROW(read_checkpoint(c), InvalidInput);

  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt"), InvalidInput);
}

}  // namespace
}  // namespace ctgrpo
