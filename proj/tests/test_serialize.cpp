#include <gtest/gtest.h>

#include <cstring>

#include "pkan/serialize.hpp"
#include "support.hpp"

using namespace pkan;
using testing_support::Gen;
using testing_support::TempDir;

namespace {

ModelState random_model(Gen& gen) {
  const Family families[] = {Family::p_kan, Family::p_mlp, Family::kan_pf, Family::mlp_pf};
  ModelConfig cfg = ModelConfig::defaults(families[gen.index(0, 3)], gen.coin() ? Likelihood::gaussian : Likelihood::student_t);
  cfg.context = gen.index(1, 12);
  cfg.horizon = gen.index(1, 5);
  cfg.hidden_sizes.clear();
  for (std::size_t i = gen.index(0, 3); i > 0; --i) cfg.hidden_sizes.push_back(gen.index(1, 6));
  cfg.spline_order = static_cast<int>(gen.index(0, 3));
  cfg.num_basis = static_cast<std::size_t>(cfg.spline_order) + gen.index(1, 6);
  cfg.grid_min = gen.uniform(-4, -1);
  cfg.grid_max = gen.uniform(1, 4);
  cfg.seed = gen.index(0, 1u << 20);
  ModelState m = init_model(cfg);
  for (Tensor* t : m.parameters()) {
    for (double& v : t->values()) v = gen.normal(3.0);
  }
  m.standardizer = {gen.uniform(-100, 100), gen.uniform(1e-9, 50)};
  return m;
}

}  // namespace

TEST(Crc, StandardCheckValue) {
  const std::string s = "123456789";
  const std::vector<std::uint8_t> bytes(s.begin(), s.end());
  EXPECT_EQ(detail::crc32(bytes), 0xCBF43926u);
}

TEST(SerializeProperty, RoundTripIsBitExact) {
  Gen gen(1);
  for (int trial = 0; trial < 100; ++trial) {
    const ModelState m = random_model(gen);
    const auto bytes = serialize(m);
    const ModelState back = deserialize(bytes);
    EXPECT_EQ(back.config, m.config);
    EXPECT_EQ(back.standardizer, m.standardizer);
    const auto a = m.flatten(), b = back.flatten();
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
    EXPECT_EQ(serialize(back), bytes);
    EXPECT_EQ(parameter_checksum(back), parameter_checksum(m));
  }
}

TEST(Serialize, HeaderLayout) {
  Gen gen(2);
  const auto bytes = serialize(random_model(gen));
  EXPECT_EQ(std::memcmp(bytes.data(), "PKAN", 4), 0);
  EXPECT_EQ(bytes[4], kModelFormatVersion);
  EXPECT_EQ(bytes[5], 0);
}

TEST(Serialize, CorruptionIsDetected) {
  Gen gen(3);
  const auto good = serialize(random_model(gen));
  for (std::size_t pos : {std::size_t{0}, std::size_t{5}, good.size() / 2, good.size() - 1}) {
    auto bad = good;
    bad[pos] ^= 0x40;
    EXPECT_THROW(deserialize(bad), FormatError) << pos;
  }
  auto truncated = good;
  truncated.resize(good.size() - 9);
  EXPECT_THROW(deserialize(truncated), FormatError);
  EXPECT_THROW(deserialize(std::vector<std::uint8_t>{'P', 'K'}), FormatError);
}

TEST(Serialize, VersionMismatchWithValidChecksum) {
  Gen gen(4);
  auto bytes = serialize(random_model(gen));
  bytes.resize(bytes.size() - 4);
  bytes[4] = 9;
  const auto crc = detail::crc32(bytes);
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
  try {
    (void)deserialize(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version 9"), std::string::npos) << e.what();
  }
}

TEST(Serialize, FileRoundTripAndPredictionsAgree) {
  Gen gen(5);
  TempDir dir("ser");
  ModelConfig cfg = ModelConfig::defaults(Family::p_kan, Likelihood::student_t);
  cfg.hidden_sizes = {4};
  ModelState m = init_model(cfg);
  m.standardizer = {60.0, 12.0};
  const auto path = dir.path() / "m.pkan";
  save_model(m, path);
  const ModelState back = load_model(path);
  const auto ctx = gen.uniforms(168, 0, 120);
  const auto a = std::get<DistributionParams>(predict(m, ctx));
  const auto b = std::get<DistributionParams>(predict(back, ctx));
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.sigma, b.sigma);
  EXPECT_EQ(a.nu, b.nu);
  EXPECT_THROW(load_model(dir.path() / "missing.pkan"), Error);
}
