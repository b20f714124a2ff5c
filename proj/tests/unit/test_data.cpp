#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "jiang/diversity.hpp"
#include "jiang/document.hpp"
#include "jiang/error.hpp"
#include "jiang/mixture.hpp"
#include "jiang/pipeline.hpp"
#include "json.hpp"

using namespace jiang;
namespace fs = std::filesystem;

namespace {

const fs::path kData = JIANG_DATA_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

FilterRules fixture_rules() {
  KeyValues kv;
  kv.set("filter.nsfw_list", (kData / "nsfw_terms.txt").string());
  return FilterRules::from(kv);
}

// 20 language tokens, punctuation every few characters, well over 50 chars.
std::string clean_text(std::size_t words = 20) {
  std::string s;
  for (std::size_t i = 0; i < words; ++i) s += (i ? ", " : "") + std::string("garden");
  return s + ".";
}

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("jiang_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Embedding unit(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  for (double& x : v) x /= std::sqrt(n);
  return v;
}

}  // namespace

TEST(Stats, Examples) {
  const auto s = compute_stats("hello 世界!");
  EXPECT_EQ(s.english_word_count, 1u);
  EXPECT_EQ(s.chinese_char_count, 2u);
  EXPECT_EQ(s.char_length, 9u);
  EXPECT_EQ(compute_stats(""), DocumentStats{});
  EXPECT_EQ(compute_stats(std::string(5000, 'q')).max_punctuationless_run, 5000u);
}

TEST(Stats, RunsBreakOnCjkPunctuation) {
  const auto s = compute_stats("一二三。四五");
  EXPECT_EQ(s.max_punctuationless_run, 3u);
  const auto custom = compute_stats("ab|cd", [](char32_t c) { return c == U'x'; });
  EXPECT_EQ(custom.max_punctuationless_run, 5u);
}

TEST(Stats, InvalidUtf8Throws) { EXPECT_THROW(compute_stats("ok \xff"), ContractError); }

TEST(Filter, RuleExamples) {
  const auto rules = fixture_rules();
  EXPECT_EQ(filter_document(Document::make("a", "s", "0123456789"), rules), std::string(kRejectTooShort));
  EXPECT_EQ(filter_document(Document::make("b", "s", clean_text(19) + " 1234567890"), rules),
            std::string(kRejectLangCount));
  EXPECT_EQ(filter_document(Document::make("c", "s", clean_text(20)), rules), std::nullopt);
  const auto four = clean_text() + " lewdword smutterm xrated obscenephrase.";
  EXPECT_EQ(filter_document(Document::make("d", "s", four), rules), std::string(kRejectNsfw));
  const auto three = clean_text() + " lewdword smutterm xrated.";
  EXPECT_EQ(filter_document(Document::make("e", "s", three), rules), std::nullopt);
}

TEST(Filter, EvaluationOrder) {
  const auto rules = fixture_rules();
  // Short and also low on language tokens: length wins.
  EXPECT_EQ(filter_document(Document::make("a", "s", "lewdword"), rules), std::string(kRejectTooShort));
  // Long run and also NSFW: the run rule fires first.
  const auto text = clean_text() + " lewdword xrated smutterm obscenephrase " + std::string(3000, 'z');
  EXPECT_EQ(filter_document(Document::make("b", "s", text), rules), std::string(kRejectPunctuationRun));
}

TEST(Filter, NsfwCounting) {
  const std::vector<std::string> terms{"lewdword", "色情词"};
  EXPECT_EQ(count_nsfw("LewdWord lewdword, LEWDWORD", terms), 3u);
  EXPECT_EQ(count_nsfw("lewdwords notlewdword xlewdword", terms), 0u);
  EXPECT_EQ(count_nsfw("这是色情词色情词", terms), 2u);
  EXPECT_EQ(count_nsfw("", terms), 0u);
}

TEST(Filter, MissingTermFileThrows) {
  KeyValues kv;
  kv.set("filter.nsfw_list", (kData / "does_not_exist.txt").string());
  EXPECT_THROW(FilterRules::from(kv), IoError);
}

TEST(Filter, ThresholdsMustBePositive) {
  FilterRules r;
  r.min_chars = 0;
  EXPECT_THROW(r.validate(), ContractError);
}

TEST(Filter, FixtureVerdictsAreExact) {
  const auto rules = fixture_rules();
  const auto read = read_documents(kData / "fixtures" / "filter_corpus" / "docs.jsonl");
  ASSERT_EQ(read.documents.size(), 500u);
  EXPECT_EQ(read.invalid_utf8, 1u);
  EXPECT_EQ(read.skips.size(), 1u);
  std::map<std::string, std::optional<std::string>> expected;
  std::ifstream in(kData / "fixtures" / "filter_corpus.expected.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    expected[j["id"]] = j["verdict"].is_null() ? std::nullopt : std::optional<std::string>(j["verdict"]);
  }
  for (const auto& d : read.documents) EXPECT_EQ(filter_document(d, rules), expected.at(d.id)) << d.id;

  // Boundary documents by construction order.
  const auto verdict = [&](std::size_t i) { return filter_document(read.documents[i], rules); };
  EXPECT_EQ(verdict(0), std::string(kRejectLangCount));  // 19 tokens
  EXPECT_EQ(verdict(1), std::nullopt);                    // 20 tokens
  EXPECT_EQ(verdict(2), std::nullopt);                    // 3 terms
  EXPECT_EQ(verdict(3), std::string(kRejectNsfw));        // 4 terms
  EXPECT_EQ(verdict(9), std::nullopt);                    // 2048-char run
  EXPECT_EQ(verdict(10), std::string(kRejectPunctuationRun));
}

TEST(Filter, PermutationKeepsVerdicts) {
  const auto rules = fixture_rules();
  auto docs = read_documents(kData / "fixtures" / "filter_corpus" / "docs.jsonl").documents;
  std::map<std::string, std::optional<std::string>> first;
  for (const auto& d : docs) first[d.id] = filter_document(d, rules);
  std::shuffle(docs.begin(), docs.end(), std::mt19937_64(5));
  for (const auto& d : docs) EXPECT_EQ(filter_document(d, rules), first[d.id]);
}

TEST(Embed, UnitNormAndIdentity) {
  const TrigramEmbedder e;
  const auto a = e.embed("the cat sat on the mat");
  const auto b = e.embed("the cat sat on the mat");
  double n = 0.0;
  for (double x : a) n += x * x;
  EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
  EXPECT_EQ(a, b);
  EXPECT_NEAR(cosine(a, b), 1.0, 1e-12);
  EXPECT_EQ(a.size(), 256u);
  EXPECT_THROW(e.embed(""), ContractError);
}

TEST(Embed, DisjointTrigramsAreOrthogonal) {
  const TrigramEmbedder e;
  EXPECT_EQ(cosine(e.embed("aaa"), e.embed("zzz")), 0.0);
}

TEST(Select, AllDocsWhenTargetIsEverything) {
  const std::vector<std::string> ids{"a", "b", "c", "d"};
  const std::vector<Embedding> emb{unit({1, 0}), unit({0, 1}), unit({1, 1}), unit({1, 2})};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DiversityConfig cfg;
    cfg.target_count = 4;
    cfg.seed = seed;
    auto out = diversity_select(ids, emb, cfg);
    std::sort(out.begin(), out.end());
    EXPECT_EQ(out, ids);
  }
}

TEST(Select, HandTraceTwinsThenOrthogonal) {
  const std::vector<std::string> ids{"t1", "t2", "o"};
  const std::vector<Embedding> emb{unit({1, 0}), unit({1, 0}), unit({0, 1})};
  int twin_first = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    DiversityConfig cfg;
    cfg.target_count = 2;
    cfg.seed = seed;
    const auto out = diversity_select(ids, emb, cfg);
    ASSERT_EQ(out.size(), 2u);
    if (out[0] != "o") {
      ++twin_first;
      EXPECT_EQ(out[1], "o");
    }
  }
  EXPECT_GT(twin_first, 0);
}

TEST(Select, DeterministicSubsetWithoutDuplicates) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  std::vector<std::string> ids;
  std::vector<Embedding> emb;
  for (int i = 0; i < 60; ++i) {
    ids.push_back("d" + std::to_string(i));
    emb.push_back(unit({n(rng), n(rng), n(rng), n(rng)}));
  }
  DiversityConfig cfg;
  cfg.target_count = 12;
  cfg.seed = 77;
  const auto a = diversity_select(ids, emb, cfg);
  EXPECT_EQ(a, diversity_select(ids, emb, cfg));
  EXPECT_EQ(a.size(), 12u);
  EXPECT_EQ(std::set<std::string>(a.begin(), a.end()).size(), 12u);
  for (const auto& id : a) EXPECT_NE(std::find(ids.begin(), ids.end(), id), ids.end());
  cfg.seed = 78;
  bool differs = false;
  for (std::uint64_t s = 78; s < 90 && !differs; ++s) {
    cfg.seed = s;
    differs = diversity_select(ids, emb, cfg) != a;
  }
  EXPECT_TRUE(differs);
}

TEST(Select, TargetAboveCountThrows) {
  DiversityConfig cfg;
  cfg.target_count = 3;
  EXPECT_THROW(diversity_select({"a", "b"}, {unit({1, 0}), unit({0, 1})}, cfg), ContractError);
  cfg.target_count = 1;
  cfg.candidate_quantile = 0.0;
  EXPECT_THROW(cfg.validate(), ContractError);
}

TEST(Select, MoreDiverseThanRandomOnClusters) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 0.05);
  const std::vector<std::vector<double>> centers{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  std::vector<std::string> ids;
  std::vector<Embedding> emb;
  for (int i = 0; i < 90; ++i) {
    const auto& c = centers[static_cast<std::size_t>(i % 3 == 0 ? 0 : (i % 5 == 0 ? 1 : (i < 80 ? 0 : 2)))];
    ids.push_back("d" + std::to_string(i));
    emb.push_back(unit({c[0] + n(rng), c[1] + n(rng), c[2] + n(rng)}));
  }
  double selected = 0.0, random = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    DiversityConfig cfg;
    cfg.target_count = 6;
    cfg.seed = seed;
    std::vector<const Embedding*> chosen;
    for (const auto& id : diversity_select(ids, emb, cfg)) chosen.push_back(&emb[std::stoul(id.substr(1))]);
    selected += mean_pairwise_cosine(chosen);
    std::vector<std::size_t> idx(ids.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), std::mt19937_64(seed + 1000));
    std::vector<const Embedding*> uniform;
    for (std::size_t k = 0; k < 6; ++k) uniform.push_back(&emb[idx[k]]);
    random += mean_pairwise_cosine(uniform);
  }
  EXPECT_LT(selected, random);
}

TEST(Mixture, TableSumsAndNormalizes) {
  double raw = 0.0;
  for (const auto& [name, p] : MixtureSpec::table1_raw()) raw += p;
  EXPECT_NEAR(raw, 0.9998, 1e-12);
  const auto spec = MixtureSpec::table1();
  double total = 0.0;
  for (const auto& [name, p] : spec.proportions()) total += p;
  EXPECT_EQ(total, 1.0);
  EXPECT_NEAR(spec.proportion("chinese_internet"), 0.4368 / 0.9998, 1e-12);
  EXPECT_THROW(spec.proportion("nope"), ContractError);
}

TEST(Mixture, RejectsBadProportions) {
  EXPECT_THROW(MixtureSpec({{"a", 0.0}}), ContractError);
  EXPECT_THROW(MixtureSpec({{"a", -1.0}, {"b", 2.0}}), ContractError);
  EXPECT_THROW(MixtureSpec({}), ContractError);
}

TEST(Mixture, EmpiricalSharesWithinThreeSigma) {
  const auto spec = MixtureSpec::table1();
  const std::uint64_t draws = 100000;
  const auto counts = mixture_counts(spec, draws, 2024);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double p = spec.proportions()[i].second;
    const double share = static_cast<double>(counts[i]) / static_cast<double>(draws);
    EXPECT_LE(std::abs(share - p), 3.0 * std::sqrt(p * (1 - p) / static_cast<double>(draws)))
        << spec.proportions()[i].first;
  }
  const double ci = static_cast<double>(counts[0]) / static_cast<double>(draws);
  EXPECT_NEAR(ci, 0.4368, 0.01);
}

TEST(Mixture, SingleSourceStream) {
  const MixtureSpec spec({{"A", 1.0}});
  const std::map<std::string, std::vector<std::vector<TokenId>>> sources{{"A", {{1, 2, 3}, {4, 5}}}};
  const auto s = mixture_sample(sources, spec, 40, 8, 0, 3);
  EXPECT_EQ(s.tokens.size(), 40u);
  for (const auto& src : s.sequence_sources) EXPECT_EQ(src, "A");
  // Recycled documents joined by the separator.
  EXPECT_EQ((std::vector<TokenId>(s.tokens.begin(), s.tokens.begin() + 8)), (std::vector<TokenId>{1, 2, 3, 0, 4, 5, 0, 1}));
}

TEST(Mixture, DeterministicAndChecksSources) {
  const MixtureSpec spec({{"A", 0.3}, {"B", 0.7}});
  const std::map<std::string, std::vector<std::vector<TokenId>>> sources{{"A", {{1, 1}}}, {"B", {{2, 2, 2}}}};
  const auto a = mixture_sample(sources, spec, 400, 4, 0, 11);
  const auto b = mixture_sample(sources, spec, 400, 4, 0, 11);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.sequence_sources, b.sequence_sources);
  const std::map<std::string, std::vector<std::vector<TokenId>>> missing{{"A", {{1}}}};
  EXPECT_THROW(mixture_sample(missing, spec, 40, 4, 0, 1), ContractError);
}

TEST(Mixture, KeyValueRoundTrip) {
  KeyValues kv;
  MixtureSpec::table1().write_to(kv);
  const auto back = MixtureSpec::from(KeyValues::parse(kv.serialize()));
  ASSERT_EQ(back.proportions().size(), 8u);
  const auto table = MixtureSpec::table1();
  for (const auto& [name, p] : table.proportions()) EXPECT_NEAR(back.proportion(name), p, 1e-15);
}

TEST(Pipeline, EmptyInput) {
  const auto in = fresh_dir("pipe_empty_in");
  const auto out = fresh_dir("pipe_empty_out");
  const auto summary = pipeline_run(in, PipelineConfig{}, out);
  EXPECT_EQ(summary.total, 0u);
  EXPECT_EQ(summary.kept, 0u);
  EXPECT_TRUE(summary.selected_ids.empty());
  EXPECT_EQ(slurp(out / "kept.jsonl"), "");
  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(manifest["counts"]["total"], 0);
  EXPECT_EQ(manifest["counts"]["kept"], 0);
}

TEST(Pipeline, FixtureCountsAndRerunIdentity) {
  PipelineConfig cfg;
  cfg.rules = fixture_rules();
  cfg.selection.target_count = 1000;
  cfg.seed = 5;
  const auto in = kData / "fixtures" / "filter_corpus";
  const auto out1 = fresh_dir("pipe_fx1");
  const auto out2 = fresh_dir("pipe_fx2");
  const auto s = pipeline_run(in, cfg, out1);
  pipeline_run(in, cfg, out2);
  EXPECT_EQ(s.total, 501u);
  EXPECT_EQ(s.kept, 215u);
  EXPECT_EQ(s.rejected.at("too_short"), 72u);
  EXPECT_EQ(s.rejected.at("punctuation_run"), 76u);
  EXPECT_EQ(s.rejected.at("lang_count"), 73u);
  EXPECT_EQ(s.rejected.at("nsfw"), 64u);
  EXPECT_EQ(s.rejected.at("invalid_utf8"), 1u);
  EXPECT_EQ(s.skips.size(), 1u);
  for (const char* f : {"kept.jsonl", "rejected.jsonl", "manifest.json"}) EXPECT_EQ(slurp(out1 / f), slurp(out2 / f)) << f;
  const auto manifest = nlohmann::json::parse(slurp(out1 / "manifest.json"));
  EXPECT_EQ(manifest["seed"], 5);
  EXPECT_EQ(manifest["config_hash"], cfg.hash());
}

TEST(Pipeline, SelectionPerSource) {
  PipelineConfig cfg;
  cfg.rules = fixture_rules();
  cfg.selection.target_count = 3;
  const auto s = pipeline_run(kData / "fixtures" / "filter_corpus", cfg, fresh_dir("pipe_sel"));
  const auto docs = read_documents(kData / "fixtures" / "filter_corpus" / "docs.jsonl").documents;
  std::map<std::string, std::string> source_of;
  for (const auto& d : docs) source_of[d.id] = d.source;
  std::map<std::string, int> per_source;
  for (const auto& id : s.selected_ids) ++per_source[source_of.at(id)];
  for (const auto& [src, n] : per_source) EXPECT_LE(n, 3) << src;
  EXPECT_GE(per_source.size(), 7u);
}

TEST(Pipeline, UnreadableFileIsRecorded) {
  const auto in = fresh_dir("pipe_bad_in");
  {
    std::ofstream(in / "a.jsonl") << R"({"id":"x","source":"wikipedia","text":"hi"})" << "\n";
  }
  fs::create_symlink(in / "missing_target", in / "b.jsonl");
  const auto s = pipeline_run(in, PipelineConfig{}, fresh_dir("pipe_bad_out"));
  EXPECT_EQ(s.total, 1u);
  EXPECT_EQ(s.skips.size(), 1u);
}
