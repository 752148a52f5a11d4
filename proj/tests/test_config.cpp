#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "adalab/config.hpp"
#include "adalab/errors.hpp"

using namespace adalab;

namespace {

const std::string kBase = R"({
  "schema_version": 1,
  "name": "base",
  "objective": {"type": "quadratic", "dim": 3, "eigenvalues": [1, 2, 3]},
  "initial_point": [1, 1, 1],
  "oracle": {"type": "additive_gaussian", "sigma": 0.5},
  "optimizer": {"type": "adagrad_norm", "alpha0": 1, "S0": 1},
  "T": 1000,
  "horizons": [10, 100, 1000],
  "seeds": {"count": 4, "base_seed": 9},
  "delta0": 1.0
})";

std::string replace(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  return text.replace(pos, from.size(), to);
}

std::string config_error(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  ADD_FAILURE() << "no ConfigError";
  return {};
}

}  // namespace

TEST(Config, ParsesBase) {
  const auto c = parse_config_text(kBase);
  EXPECT_EQ(c.name, "base");
  EXPECT_EQ(c.T, 1000u);
  EXPECT_EQ(c.horizons, (std::vector<std::uint64_t>{10, 100, 1000}));
  EXPECT_EQ(c.seed_count, 4u);
  EXPECT_EQ(c.base_seed, 9u);
  EXPECT_EQ(c.record_stride, 1u);
  EXPECT_EQ(c.output_dir, "out");
  EXPECT_FALSE(c.jobs.has_value());
}

TEST(Config, HorizonsDefaultToT) {
  auto text = replace(kBase, R"("horizons": [10, 100, 1000],)", "");
  EXPECT_EQ(parse_config_text(text).horizons, (std::vector<std::uint64_t>{1000}));
}

TEST(Config, SyntaxErrorCarriesLineAndColumn) {
  const auto msg = config_error("{\n  \"schema_version\": 1,\n  \"name\" \"x\"\n}");
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("column"), std::string::npos) << msg;
}

TEST(Config, FieldErrorsNameThePath) {
  EXPECT_NE(config_error(replace(kBase, R"("T": 1000,)", R"("T": -1,)")).find("config.T"), std::string::npos);
  EXPECT_NE(config_error(replace(kBase, "[10, 100, 1000]", "[10, 100, 2000]")).find("config.horizons[2]"),
            std::string::npos);
  EXPECT_NE(config_error(replace(kBase, "[10, 100, 1000]", "[100, 10, 1000]")).find("config.horizons[1]"),
            std::string::npos);
  EXPECT_NE(config_error(replace(kBase, R"("count": 4)", R"("count": 0)")).find("config.seeds.count"),
            std::string::npos);
  EXPECT_NE(config_error(replace(kBase, R"("name": "base",)", R"("name": "base", "colour": 1,)"))
                .find("config.colour: unknown field"),
            std::string::npos);
  EXPECT_NE(config_error(replace(kBase, R"("schema_version": 1)", R"("schema_version": 2)"))
                .find("unsupported version"),
            std::string::npos);
  EXPECT_NE(config_error(replace(kBase, "[1, 1, 1]", "[1, 1]")).find("initial_point"), std::string::npos);
  EXPECT_NE(config_error(replace(kBase, "1.0\n", "\"auto-percentile:0\"\n")).find("delta0"), std::string::npos);
}

TEST(Config, MissingRequiredField) {
  const auto msg = config_error(replace(kBase, R"("T": 1000,)", ""));
  EXPECT_NE(msg.find("config.T: required field missing"), std::string::npos) << msg;
}

TEST(Config, AutoPercentileDelta0) {
  const auto c = parse_config_text(replace(kBase, "1.0\n", "\"auto-percentile:90\"\n"));
  EXPECT_FALSE(c.delta0.value.has_value());
  EXPECT_EQ(c.delta0.percentile, 90.0);
}

TEST(Config, RoundTripThroughJson) {
  const auto a = parse_config_text(kBase);
  const auto b = parse_config(a.to_json());
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(config_fingerprint(a), config_fingerprint(b));
}

TEST(Config, FingerprintIgnoresFormattingJobsAndOutputDir) {
  const auto a = parse_config_text(kBase);
  auto spaced = replace(kBase, R"("T": 1000,)", R"("T":    1000, "jobs": 3, "output_dir": "elsewhere",)");
  const auto b = parse_config_text(spaced);
  EXPECT_EQ(config_fingerprint(a), config_fingerprint(b));
  EXPECT_FALSE(b.to_json().contains("jobs"));
  EXPECT_EQ(b.to_json()["output_dir"], "elsewhere");
}

TEST(Config, FingerprintSeesSemanticChanges) {
  const auto a = parse_config_text(kBase);
  const auto b = parse_config_text(replace(kBase, R"("base_seed": 9)", R"("base_seed": 10)"));
  const auto c = parse_config_text(replace(kBase, R"("sigma": 0.5)", R"("sigma": 0.50000000000000011)"));
  EXPECT_NE(config_fingerprint(a), config_fingerprint(b));
  EXPECT_NE(config_fingerprint(a), config_fingerprint(c));
}

TEST(Config, ShippedConfigsLoad) {
  const std::filesystem::path dir = ADALAB_SOURCE_DIR "/configs";
  int n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    SCOPED_TRACE(e.path().string());
    const auto c = load_config(e.path().string());
    EXPECT_EQ(parse_config(c.to_json()).to_json().dump(), c.to_json().dump());
    ++n;
  }
  EXPECT_GE(n, 5);
}

TEST(Config, MissingFileIsIoError) {
  EXPECT_THROW(load_config("/nonexistent/adalab.json"), IoError);
}
