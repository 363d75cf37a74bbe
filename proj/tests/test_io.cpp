#include "rtr/config.hpp"
#include "rtr/dataset_io.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

using namespace rtr;

namespace {

std::string error_of(auto&& fn)
{
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

DatasetFile sample_file(bool with_truth)
{
  SyntheticSpec spec;
  spec.dims = {3, 4, 2};
  spec.ranks = {2, 2, 1};
  spec.n = 17;
  spec.noise = {NoiseFamily::student_t, 2.5, 0.7};
  spec.lambda_min = 1.5;
  spec.lambda_max = 2.5;
  spec.contamination = {0.1, 50};
  spec.seed = 123456789012345ULL;
  Dataset d = gen_dataset(spec);
  if (!with_truth)
    d.samples.ground_truth.reset();
  return {spec, d.samples};
}

std::string serialize(const DatasetFile& f)
{
  std::ostringstream os(std::ios::binary);
  write_dataset(os, f);
  return os.str();
}

} // namespace

TEST(ConfigParse, CommentsBlanksAndWhitespace)
{
  const auto e = parse_config("# header\n\n  n = 40  # trailing\nnoise=student_t\r\ndims = 4,5,6\n");
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[0].key, "n");
  EXPECT_EQ(e[0].value, "40");
  EXPECT_EQ(e[0].line, 3);
  EXPECT_EQ(e[1].value, "student_t");
  EXPECT_EQ(e[2].value, "4,5,6");
}

TEST(ConfigParse, Errors)
{
  EXPECT_NE(error_of([] { parse_config("a = 1\nbroken line\n", "f.cfg"); }).find("f.cfg:2"), std::string::npos);
  EXPECT_NE(error_of([] { parse_config("a = 1\na = 2\n"); }).find("duplicate key 'a'"), std::string::npos);
  EXPECT_NE(error_of([] { parse_config("bad key = 1\n"); }).find("invalid key"), std::string::npos);
  EXPECT_THROW(parse_config("= 3\n"), ConfigError);
  EXPECT_THROW(parse_config_file("/nonexistent/rtr.cfg"), ConfigError);
}

TEST(ResolvedConfig, DefaultsOverridesAndUnknownKeys)
{
  const std::vector<ConfigKey> schema{{"n", "10", ""}, {"dims", "4,4,4", ""}, {"flag", "false", ""}, {"x", "0.5", ""}};
  const ResolvedConfig cfg(schema, parse_config("n = 25\nflag = true\n"));
  EXPECT_EQ(cfg.get_int("n"), 25);
  EXPECT_TRUE(cfg.is_explicit("n"));
  EXPECT_FALSE(cfg.is_explicit("dims"));
  EXPECT_EQ(cfg.get_triple("dims"), (std::array<Index, 3>{4, 4, 4}));
  EXPECT_TRUE(cfg.get_bool("flag"));
  EXPECT_DOUBLE_EQ(cfg.get_double("x"), 0.5);
  ASSERT_EQ(cfg.entries().size(), 4u);
  EXPECT_EQ(cfg.entries()[0].first, "n");

  const std::string msg = error_of([&] { ResolvedConfig(schema, parse_config("n = 1\nbogus_key = 3\n")); });
  EXPECT_NE(msg.find("bogus_key"), std::string::npos);
  EXPECT_THROW(ResolvedConfig(schema, parse_config("bogus = 3\n")), ConfigError);
}

TEST(ResolvedConfig, TypedAccessorsRejectGarbage)
{
  const std::vector<ConfigKey> schema{{"a", "12x", ""}, {"b", "1,2", ""}, {"c", "maybe", ""}, {"d", "-3", ""},
                                      {"e", "1.5, 2.5 ,3", ""}};
  const ResolvedConfig cfg(schema, {});
  EXPECT_THROW(cfg.get_int("a"), ConfigError);
  EXPECT_THROW(cfg.get_double("a"), ConfigError);
  EXPECT_THROW(cfg.get_triple("b"), ConfigError);
  EXPECT_THROW(cfg.get_bool("c"), ConfigError);
  EXPECT_THROW(cfg.get_u64("d"), ConfigError);
  EXPECT_EQ(cfg.get_int("d"), -3);
  EXPECT_EQ(cfg.get_doubles("e"), (std::vector<double>{1.5, 2.5, 3}));
  EXPECT_EQ(cfg.get_ints("b"), (std::vector<std::int64_t>{1, 2}));
  EXPECT_THROW(cfg.get("zzz"), ConfigError);
  EXPECT_EQ(parse_double("inf", "x"), std::numeric_limits<double>::infinity());
}

TEST(DatasetIO, HeaderSizeAndMagic)
{
  const std::string bytes = serialize(sample_file(true));
  ASSERT_GE(bytes.size(), kDatasetHeaderBytes);
  EXPECT_EQ(std::memcmp(bytes.data(), "RTRDATA\0", 8), 0);
  const std::size_t p = 3 * 4 * 2, n = 17;
  EXPECT_EQ(bytes.size(), kDatasetHeaderBytes + 8 * (p + p * n + n));
  EXPECT_EQ(serialize(sample_file(false)).size(), kDatasetHeaderBytes + 8 * (p * n + n));
}

TEST(DatasetIO, RoundTripIsBitExact)
{
  for (bool truth : {true, false}) {
    const DatasetFile f = sample_file(truth);
    std::istringstream is(serialize(f), std::ios::binary);
    const DatasetFile g = read_dataset(is);
    EXPECT_EQ(g.samples.dims, f.samples.dims);
    EXPECT_EQ(g.samples.design, f.samples.design);
    EXPECT_EQ(g.samples.response, f.samples.response);
    EXPECT_EQ(g.samples.ground_truth.has_value(), truth);
    if (truth) {
      EXPECT_EQ(*g.samples.ground_truth, *f.samples.ground_truth);
    }
    EXPECT_EQ(g.spec.seed, f.spec.seed);
    EXPECT_EQ(g.spec.ranks, f.spec.ranks);
    EXPECT_EQ(g.spec.noise.family, f.spec.noise.family);
    EXPECT_EQ(g.spec.noise.param, f.spec.noise.param);
    EXPECT_EQ(g.spec.noise.scale, f.spec.noise.scale);
    EXPECT_EQ(g.spec.contamination.fraction, f.spec.contamination.fraction);
    EXPECT_EQ(g.spec.contamination.factor, f.spec.contamination.factor);
    EXPECT_EQ(g.spec.lambda_max, f.spec.lambda_max);
    EXPECT_EQ(serialize(g), serialize(f));
  }
}

TEST(DatasetIO, FileRoundTrip)
{
  const auto path = std::filesystem::temp_directory_path() / "rtr_test_io.bin";
  const DatasetFile f = sample_file(true);
  write_dataset_file(path.string(), f);
  const DatasetFile g = read_dataset_file(path.string());
  EXPECT_EQ(serialize(g), serialize(f));
  std::filesystem::remove(path);
  EXPECT_THROW(read_dataset_file(path.string()), std::runtime_error);
}

TEST(DatasetIO, CorruptInputsRejected)
{
  const std::string good = serialize(sample_file(true));
  auto read = [](const std::string& s) {
    std::istringstream is(s, std::ios::binary);
    return read_dataset(is);
  };
  std::string bad = good;
  bad[0] = 'X';
  EXPECT_NE(error_of([&] { read(bad); }).find("magic"), std::string::npos);
  EXPECT_NE(error_of([&] { read(good.substr(0, good.size() - 3)); }).find("truncated"), std::string::npos);
  EXPECT_NE(error_of([&] { read(good.substr(0, 50)); }).find("truncated"), std::string::npos);
  EXPECT_NE(error_of([&] { read(good + "x"); }).find("trailing"), std::string::npos);
  bad = good;
  bad[8] = 9;
  EXPECT_NE(error_of([&] { read(bad); }).find("version"), std::string::npos);
}
