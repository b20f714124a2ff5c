#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "json.hpp"

#include "cli.hpp"
#include "jiang/error.hpp"

using namespace jiang;
namespace fs = std::filesystem;

namespace {

const fs::path kData = JIANG_DATA_DIR;

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("jiang_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::size_t count(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

// A small vocabulary plus a training config that runs in a second or two.
fs::path write_train_setup(const fs::path& dir) {
  const auto voc = dir / "v.jvoc";
  const auto r = run({"tok", "train", "--corpus", (kData / "train_repeated.txt").string(), "--merges", "60", "--out",
                      voc.string()});
  EXPECT_EQ(r.code, 0) << r.err;
  const auto cfg = dir / "c.cfg";
  std::ofstream(cfg) << "data.vocab = v.jvoc\n"
                     << "data.corpus = " << (kData / "train_repeated.txt").string() << "\n"
                     << "model.d_model = 16\nmodel.n_layers = 1\nmodel.n_heads = 2\nmodel.max_seq_len = 64\n"
                     << "train.batch_token_budget = 128\ntrain.seq_len_initial = 32\n"
                     << "train.seq_len_extended = 64\ntrain.switch_threshold_tokens = 1280\n"
                     << "train.total_tokens = 2560\ntrain.eval_every_steps = 5\ntrain.lr = 0.003\n";
  return cfg;
}

}  // namespace

TEST(Cli, NoArgumentsPrintsUsage) {
  const auto r = run({});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE((r.out + r.err).find("Usage"), std::string::npos);
}

TEST(Cli, UnknownSubcommand) {
  const auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, MissingRequiredOption) {
  EXPECT_EQ(run({"tok", "encode", "hello"}).code, cli::kUsage);
}

TEST(Cli, EncodeDecodeRoundTrip) {
  const auto dir = fresh_dir("tok");
  const auto voc = (dir / "v.jvoc").string();
  ASSERT_EQ(run({"tok", "train", "--corpus", (kData / "train_repeated.txt").string(), "--merges", "20", "--out", voc})
                .code,
            0);
  const auto enc = run({"tok", "encode", "--vocab", voc, "hello"});
  ASSERT_EQ(enc.code, 0) << enc.err;
  EXPECT_TRUE(std::regex_match(enc.out, std::regex(R"(\d+( \d+)*\n)"))) << enc.out;
  std::vector<std::string> args{"tok", "decode", "--vocab", voc};
  std::istringstream ids(enc.out);
  for (std::string id; ids >> id;) args.push_back(id);
  const auto dec = run(args);
  ASSERT_EQ(dec.code, 0) << dec.err;
  EXPECT_EQ(dec.out, "hello\n");
}

TEST(Cli, MissingVocabIsRuntimeError) {
  const auto r = run({"tok", "encode", "--vocab", "/nonexistent/v.jvoc", "hi"});
  EXPECT_EQ(r.code, cli::kRuntime);
  EXPECT_FALSE(r.err.empty());
}

TEST(Plot, OnePolylinePerSeries) {
  const auto dir = fresh_dir("plot");
  std::ofstream(dir / "m.csv") << kMetricsHeader << "\n"
                               << format_metrics_row({1, 100, 32, 3.5, 1e-3, std::nullopt, std::nullopt}) << "\n"
                               << format_metrics_row({2, 200, 32, 3.0, 1e-3, 20.0, std::nullopt}) << "\n";
  const auto r = run({"plot", "--metrics", (dir / "m.csv").string(), "--out", (dir / "m.svg").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto svg = slurp(dir / "m.svg");
  EXPECT_EQ(count(svg, "<polyline"), 2u);
  EXPECT_EQ(count(svg, "data-series=\"loss\""), 1u);
  EXPECT_EQ(count(svg, "data-series=\"eval_ppl\""), 1u);

  ASSERT_EQ(run({"plot", "--metrics", (dir / "m.csv").string(), "--out", (dir / "again.svg").string()}).code, 0);
  EXPECT_EQ(slurp(dir / "again.svg"), svg);
}

TEST(Plot, HeaderOnlyWritesNothing) {
  const auto dir = fresh_dir("plot_empty");
  std::ofstream(dir / "m.csv") << kMetricsHeader << "\n";
  const auto r = run({"plot", "--metrics", (dir / "m.csv").string(), "--out", (dir / "m.svg").string()});
  EXPECT_EQ(r.code, cli::kRuntime);
  EXPECT_FALSE(fs::exists(dir / "m.svg"));
}

TEST(Plot, MalformedRowNamesLine) {
  const auto dir = fresh_dir("plot_bad");
  std::ofstream(dir / "m.csv") << kMetricsHeader << "\n"
                               << format_metrics_row({1, 100, 32, 3.5, 1e-3, std::nullopt, std::nullopt}) << "\n"
                               << "2,200,32,oops,0.001,,\n";
  const auto r = run({"plot", "--metrics", (dir / "m.csv").string(), "--out", (dir / "m.svg").string()});
  EXPECT_EQ(r.code, cli::kRuntime);
  EXPECT_NE(r.err.find("m.csv:3"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "m.svg"));
}

TEST(Train, SameSeedSameBytes) {
  const auto dir = fresh_dir("train");
  const auto cfg = write_train_setup(dir).string();
  const auto a = run({"train", "--config", cfg, "--out", (dir / "a").string(), "--seed", "7"});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = run({"train", "--config", cfg, "--out", (dir / "b").string(), "--seed", "7"});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(slurp(dir / "a" / "metrics.csv"), slurp(dir / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(dir / "a" / "manifest.json"), slurp(dir / "b" / "manifest.json"));
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  EXPECT_EQ(manifest["seed"], 7);
  EXPECT_EQ(manifest["steps"], 20);

  const auto c = run({"train", "--config", cfg, "--out", (dir / "c").string(), "--seed", "8"});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_NE(slurp(dir / "a" / "metrics.csv"), slurp(dir / "c" / "metrics.csv"));
}

TEST(Train, SeedFallsBackToEnvironment) {
  const auto dir = fresh_dir("train_env");
  const auto cfg = write_train_setup(dir).string();
  ::setenv("JIANG_SEED", "7", 1);
  const auto a = run({"train", "--config", cfg, "--out", (dir / "env").string()});
  ::unsetenv("JIANG_SEED");
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(run({"train", "--config", cfg, "--out", (dir / "flag").string(), "--seed", "7"}).code, 0);
  EXPECT_EQ(slurp(dir / "env" / "manifest.json"), slurp(dir / "flag" / "manifest.json"));
}

TEST(Seed, Resolution) {
  ::unsetenv("JIANG_SEED");
  EXPECT_EQ(cli::resolve_seed(std::nullopt), 0u);
  ::setenv("JIANG_SEED", "42", 1);
  EXPECT_EQ(cli::resolve_seed(std::nullopt), 42u);
  EXPECT_EQ(cli::resolve_seed(3), 3u);
  ::setenv("JIANG_SEED", "4x", 1);
  EXPECT_THROW(cli::resolve_seed(std::nullopt), ContractError);
  ::unsetenv("JIANG_SEED");
}

TEST(Pipeline, RerunIsByteIdentical) {
  const auto dir = fresh_dir("pipe");
  const auto input = (kData / "fixtures" / "filter_corpus").string();
  const auto rules = (kData / "fixture_rules.cfg").string();
  const auto a = run({"pipeline", "run", "--input", input, "--rules", rules, "--out", (dir / "a").string(), "--seed",
                      "3", "--target", "4"});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(run({"pipeline", "run", "--input", input, "--rules", rules, "--out", (dir / "b").string(), "--seed", "3",
                 "--target", "4"})
                .code,
            0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(e.path(), dir / "a");
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / rel)) << rel;
  }
  EXPECT_GT(files, 0u);
}
