#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "gammafm/io.hpp"

using gfm::KeyValueConfig;
using gfm::Matrix;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("gammafm_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST(Csv, RoundTripIsBitExact) {
    gfm::SeededRng rng(1);
    Matrix m(50, 4);
    for (double& v : m.data) v = rng.normal() * std::pow(10.0, rng.uniform(-300.0, 300.0));
    m(0, 0) = 0.1;
    m(0, 1) = -0.0;
    m(0, 2) = std::numeric_limits<double>::denorm_min();
    m(0, 3) = std::numeric_limits<double>::max();
    const auto t = gfm::parse_csv(gfm::to_csv({"a", "b", "c", "d"}, m));
    ASSERT_EQ(t.header, (std::vector<std::string>{"a", "b", "c", "d"}));
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        EXPECT_EQ(std::bit_cast<std::uint64_t>(t.values.data[i]), std::bit_cast<std::uint64_t>(m.data[i])) << i;
    }
}

TEST(Csv, SeventeenDigitsAndLfEndings) {
    const std::string text = gfm::to_csv({"x"}, Matrix::from_rows({{0.1}, {1.0}}));
    EXPECT_EQ(text, "x\n0.10000000000000001\n1\n");
}

TEST(Csv, RaggedRowRejected) {
    EXPECT_THROW(gfm::parse_csv("a,b\n1,2\n3\n"), std::invalid_argument);
    EXPECT_THROW(gfm::parse_csv("a\nfoo\n"), std::invalid_argument);
}

TEST(Fnv1a, ReferenceVectors) {
    EXPECT_EQ(gfm::fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(gfm::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(gfm::fnv1a64("foobar"), 0x85944171f73967e8ULL);
    EXPECT_EQ(gfm::hex64(0xabcULL), "0000000000000abc");
}

TEST(KeyValueConfig, ParseCommentsAndWhitespace) {
    const auto c = KeyValueConfig::parse("# header\n gamma = 0.5  # inline\n\nsteps=32\nname = ring20d\n");
    EXPECT_EQ(c.get_double("gamma"), 0.5);
    EXPECT_EQ(c.get_uint("steps"), 32u);
    EXPECT_EQ(c.get_string("name"), "ring20d");
    EXPECT_THROW(c.get_string("missing"), std::invalid_argument);
    EXPECT_THROW(c.get_uint("name"), std::invalid_argument);
    EXPECT_THROW(KeyValueConfig::parse("novalue\n"), std::invalid_argument);
}

TEST(KeyValueConfig, SerializeRoundTripIsExact) {
    gfm::SeededRng rng(2);
    KeyValueConfig c;
    for (int i = 0; i < 20; ++i) c.set("key" + std::to_string(i), rng.normal() * 1e-7);
    c.set("list", gfm::format_list({0.0, 0.2, 0.5, 1.0}));
    const std::string text = c.serialize();
    const auto back = KeyValueConfig::parse(text);
    EXPECT_EQ(back.serialize(), text);
    for (const auto& [k, v] : c.entries()) {
        if (k == "list") continue;
        EXPECT_EQ(back.get_double(k), c.get_double(k));
    }
    EXPECT_EQ(back.get_list("list"), (std::vector<double>{0.0, 0.2, 0.5, 1.0}));
}

TEST(KeyValueConfig, PrecedenceFlagsOverFileOverDefaults) {
    KeyValueConfig defaults = KeyValueConfig::parse("gamma = 0\nsteps = 32\nseed = 0\n");
    KeyValueConfig file = KeyValueConfig::parse("gamma = 1\nseed = 7\n");
    KeyValueConfig flags = KeyValueConfig::parse("seed = 9\n");
    KeyValueConfig resolved = defaults;
    resolved.override_with(file);
    resolved.override_with(flags);
    EXPECT_EQ(resolved.get_string("gamma"), "1");
    EXPECT_EQ(resolved.get_string("steps"), "32");
    EXPECT_EQ(resolved.get_string("seed"), "9");
}

TEST(RunManifest, RecordsConfigAndArtifactHashes) {
    const auto dir = scratch_dir("manifest");
    KeyValueConfig c = KeyValueConfig::parse("seed = 3\ngamma = 1\n");
    gfm::RunManifest m("train", dir.string(), c);
    m.emit("a.csv", "x\n1\n");
    m.finalize();
    const auto j = gfm::read_json((dir / "manifest.json").string());
    EXPECT_EQ(j["command"], "train");
    EXPECT_EQ(j["seed"], "3");
    EXPECT_EQ(j["artifacts"]["a.csv"], gfm::hex64(gfm::fnv1a64("x\n1\n")));
    EXPECT_EQ(j["artifacts"]["config.txt"], gfm::file_hash((dir / "config.txt").string()));
    EXPECT_EQ(KeyValueConfig::load((dir / "config.txt").string()).serialize(), c.serialize());
}
