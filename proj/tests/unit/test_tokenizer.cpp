#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "jiang/error.hpp"
#include "jiang/tokenizer.hpp"
#include "jiang/utf8.hpp"

using namespace jiang;

namespace {

const std::filesystem::path kData = JIANG_DATA_DIR;

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Random mix of ASCII, Latin, CJK, emoji and whitespace.
std::string random_utf8(std::mt19937_64& rng, std::size_t max_chars) {
  static const std::vector<std::pair<char32_t, char32_t>> ranges{
      {0x20, 0x7e}, {0x0a, 0x0a}, {0xa0, 0x24f}, {0x4e00, 0x9fff}, {0x3000, 0x303f}, {0x1f600, 0x1f64f}};
  std::uniform_int_distribution<std::size_t> n(0, max_chars), pick(0, ranges.size() - 1);
  std::string s;
  const auto count = n(rng);
  for (std::size_t i = 0; i < count; ++i) {
    const auto [lo, hi] = ranges[pick(rng)];
    std::uniform_int_distribution<std::uint32_t> cp(lo, hi);
    s += utf8::encode(static_cast<char32_t>(cp(rng)));
  }
  return s;
}

std::size_t count_cjk(std::string_view s) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.size();) {
    const auto d = utf8::decode_at(s, i);
    n += utf8::is_cjk_ideograph(d.code_point) ? 1 : 0;
    i += d.length;
  }
  return n;
}

const std::string kMixed =
    "The quick brown fox jumps over the lazy dog. 快速的棕色狐狸跳过了懒狗。 "
    "the fox, the dog, the end. 狐狸和狗都是动物。\n\nNumbers 12345 and tabs\tend.";

}  // namespace

TEST(Train, SingleMergeOnRepeatedLetter) {
  const auto v = train_bpe("aaaa", 1);
  ASSERT_EQ(v.merge_count(), 1u);
  EXPECT_EQ(v.merges()[0], (std::pair<std::string, std::string>{"a", "a"}));
  const auto ids = v.encode("aaaa");
  EXPECT_EQ(ids, (std::vector<TokenId>{256, 256}));
  EXPECT_EQ(v.token_bytes(256), "aa");
}

TEST(Train, MostFrequentPairFirst) {
  const std::string corpus = "abab abab";
  // Brute-force pair counts over whitespace pieces.
  std::map<std::pair<std::string, std::string>, int> counts;
  for (auto piece : pretokenize(corpus))
    for (std::size_t i = 0; i + 1 < piece.size(); ++i) ++counts[{std::string(1, piece[i]), std::string(1, piece[i + 1])}];
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it)
    if (it->second > best->second) best = it;
  const auto v = train_bpe(corpus, 2);
  ASSERT_GE(v.merge_count(), 1u);
  EXPECT_EQ(v.merges()[0], best->first);
  EXPECT_EQ(v.merges()[0], (std::pair<std::string, std::string>{"a", "b"}));
}

TEST(Train, TiesBreakOnSmallerPair) {
  const auto v = train_bpe("ab cd", 1);
  ASSERT_EQ(v.merge_count(), 1u);
  EXPECT_EQ(v.merges()[0], (std::pair<std::string, std::string>{" ", "c"}));
}

TEST(Train, ZeroMergesIsByteLevel) {
  const auto v = train_bpe("anything", 0);
  EXPECT_EQ(v.merge_count(), 0u);
  EXPECT_EQ(v.size(), 257u);
  for (const std::string s : {"hello", "中文", "", "a b\n"}) EXPECT_EQ(v.encode(s).size(), s.size());
}

TEST(Train, NegativeMergesThrow) { EXPECT_THROW(train_bpe("abc", -1), ContractError); }

TEST(Train, Deterministic) {
  const auto text = read_file(kData / "train_repeated.txt");
  const auto a = train_bpe(text, 80);
  const auto b = train_bpe(text, 80);
  EXPECT_EQ(a.merges(), b.merges());
  EXPECT_EQ(a.serialize(), b.serialize());
}

TEST(Train, MergesStayCharAligned) {
  const auto v = train_bpe(kMixed + kMixed, 60);
  for (const auto& [l, r] : v.merges()) EXPECT_TRUE(is_char_aligned(l + r)) << l << "|" << r;
}

TEST(Pretokenize, SplitsBeforeWhitespaceRuns) {
  const auto pieces = pretokenize("hello world  x\ny");
  const std::vector<std::string_view> expected{"hello", " world", "  x", "\ny"};
  EXPECT_EQ(pieces, expected);
}

TEST(Encode, EmptyRoundTrip) {
  const Vocabulary v;
  EXPECT_TRUE(v.encode("").empty());
  EXPECT_EQ(v.decode({}), "");
}

TEST(Encode, DecodeRejectsUnknownId) {
  const Vocabulary v;
  const std::vector<TokenId> bad{static_cast<TokenId>(v.size())};
  EXPECT_THROW(v.decode(bad), ContractError);
  const std::vector<TokenId> neg{-1};
  EXPECT_THROW(v.decode(neg), ContractError);
}

TEST(Encode, SpecialNamesAreOrdinaryText) {
  const Vocabulary v;
  const auto ids = v.encode(std::string(kEndOfText));
  EXPECT_EQ(ids.size(), kEndOfText.size());
  EXPECT_EQ(v.decode(std::vector<TokenId>{v.eot_id()}), std::string(kEndOfText));
}

TEST(Encode, FuzzRoundTrip) {
  const auto base = train_bpe(kMixed, 40);
  std::vector<std::string> chars;
  for (auto c : utf8::characters("快速的棕色狐狸跳过了懒狗动物")) chars.emplace_back(c);
  const auto ext = extend_vocab(base, chars);
  std::mt19937_64 rng(42);
  for (int i = 0; i < 2000; ++i) {
    const auto s = random_utf8(rng, 24);
    ASSERT_EQ(base.decode(base.encode(s)), s);
    ASSERT_EQ(ext.decode(ext.encode(s)), s);
  }
}

TEST(Encode, ArbitraryBytesRoundTrip) {
  const auto v = train_bpe(kMixed, 40);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> byte(0, 255), len(0, 40);
  for (int i = 0; i < 2000; ++i) {
    std::string s(static_cast<std::size_t>(len(rng)), '\0');
    for (auto& c : s) c = static_cast<char>(byte(rng));
    ASSERT_EQ(v.decode(v.encode(s)), s);
  }
}

TEST(Encode, OffsetsCoverText) {
  const auto v = extend_vocab(train_bpe(kMixed, 30), std::vector<std::string>{"狐", "狸"});
  const auto spans = v.encode_with_offsets(kMixed);
  std::size_t pos = 0;
  for (const auto& s : spans) {
    EXPECT_EQ(s.begin, pos);
    EXPECT_EQ(kMixed.substr(s.begin, s.end - s.begin), v.token_bytes(s.id));
    pos = s.end;
  }
  EXPECT_EQ(pos, kMixed.size());
}

TEST(Extend, AtomicChineseCharacter) {
  const Vocabulary bytes;
  EXPECT_EQ(bytes.encode("中").size(), std::string("中").size());
  const std::vector<std::string> chars{"中"};
  const auto v = extend_vocab(bytes, chars);
  EXPECT_EQ(v.size(), bytes.size() + 1);
  EXPECT_EQ(v.encode("中").size(), 1u);
  EXPECT_TRUE(bytes.is_prefix_of(v));
}

TEST(Extend, Idempotent) {
  const std::vector<std::string> chars{"中", "文"};
  const auto once = extend_vocab(Vocabulary{}, chars);
  const auto twice = extend_vocab(once, chars);
  EXPECT_EQ(once, twice);
  const std::vector<std::string> ascii{"a"};
  EXPECT_EQ(extend_vocab(once, ascii), once);
}

TEST(Extend, RejectsNonCharacters) {
  const Vocabulary v;
  for (const std::string bad : {"", "ab", "中文", "\n", "\xff"}) {
    const std::vector<std::string> chars{bad};
    EXPECT_THROW(extend_vocab(v, chars), ContractError) << bad;
  }
}

TEST(Extend, NeverIncreasesTokenCount) {
  const auto base = train_bpe(kMixed + " 快速快速 狐狸狐狸", 50);
  std::vector<std::string> chars;
  for (auto c : utf8::characters("快速的狐狸跳过懒狗和都是动物中文")) chars.emplace_back(c);
  const auto ext = extend_vocab(base, chars);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto s = random_utf8(rng, 30) + "快速的狐狸";
    EXPECT_LE(ext.encode(s).size(), base.encode(s).size()) << s;
  }
  EXPECT_EQ(ext.decode(ext.encode(kMixed)), kMixed);
}

TEST(Coverage, Bounds) {
  const std::string text = "中文覆盖率测试，中文。";
  const Vocabulary bytes;
  EXPECT_DOUBLE_EQ(coverage(bytes, text), 0.0);
  std::vector<std::string> chars;
  for (auto c : utf8::characters(text))
    if (utf8::is_cjk_ideograph(utf8::decode_at(c, 0).code_point)) chars.emplace_back(c);
  const auto full = extend_vocab(bytes, chars);
  EXPECT_DOUBLE_EQ(coverage(full, text), 1.0);
  EXPECT_THROW(coverage(bytes, "no chinese here"), ContractError);
}

TEST(Coverage, MonotoneUnderExtension) {
  const auto corpus = read_file(kData / "zh_desk_corpus.txt");
  const auto list = load_char_list(kData / "common_chars.txt");
  auto v = train_bpe(corpus, 50);
  double last = coverage(v, corpus);
  for (std::size_t chunk = 0; chunk < list.size(); chunk += 600) {
    const std::vector<std::string> part(list.begin() + static_cast<std::ptrdiff_t>(chunk),
                                        list.begin() + static_cast<std::ptrdiff_t>(std::min(chunk + 600, list.size())));
    v = extend_vocab(v, part);
    const double now = coverage(v, corpus);
    EXPECT_GE(now, last);
    last = now;
  }
}

TEST(Coverage, DeskCorpusWithBundledList) {
  const auto corpus = read_file(kData / "zh_desk_corpus.txt");
  const auto list = load_char_list(kData / "common_chars.txt");
  EXPECT_GE(list.size(), 3500u);
  ASSERT_GT(count_cjk(corpus), 3000u);
  const auto v = extend_vocab(train_bpe(corpus, 200), list);
  EXPECT_GT(coverage(v, corpus), 0.999);
}

TEST(Serialize, RoundTrip) {
  const auto v = extend_vocab(train_bpe(kMixed, 40, {std::string(kEndOfText), "<|pad|>"}),
                              std::vector<std::string>{"中", "文", "é"});
  const auto text = v.serialize();
  EXPECT_EQ(text.rfind("JVOC 1\n", 0), 0u);
  const auto back = Vocabulary::parse(text);
  EXPECT_EQ(back, v);
  EXPECT_EQ(back.size(), v.size());
  for (TokenId id = 0; id < static_cast<TokenId>(v.size()); ++id) EXPECT_EQ(back.token_bytes(id), v.token_bytes(id));
  EXPECT_EQ(back.special_id("<|pad|>"), v.special_id("<|pad|>"));
}

TEST(Serialize, RejectsGarbage) {
  EXPECT_THROW(Vocabulary::parse("NOPE\n"), IoError);
  EXPECT_THROW(Vocabulary::parse("JVOC 1\nzz 61\n"), IoError);
}

TEST(Resize, SameVocabIsBitwiseUnchanged) {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.vocab_size = 257;
  const Vocabulary v;
  const auto w = init_weights<float>(c, 1);
  const auto r = resize_embeddings(w, v, v, 9);
  ASSERT_EQ(r.tok_emb.numel(), w.tok_emb.numel());
  for (std::size_t i = 0; i < w.tok_emb.numel(); ++i) EXPECT_EQ(r.tok_emb.at(i), w.tok_emb.at(i));
}

TEST(Resize, OldLogitsUnchangedUntied) {
  const Vocabulary old_v;
  const auto new_v = extend_vocab(old_v, std::vector<std::string>{"中", "文", "字"});
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.vocab_size = old_v.size();
  c.tie_embeddings = false;
  const auto w = init_weights<float>(c, 2);
  const auto r = resize_embeddings(w, old_v, new_v, 3);
  auto c2 = c;
  c2.vocab_size = new_v.size();
  const auto ids = old_v.encode("hello");
  const auto a = decoder_forward<float>(ids, c, w);
  const auto b = decoder_forward<float>(ids, c2, r);
  for (std::size_t t = 0; t < ids.size(); ++t)
    for (std::size_t k = 0; k < old_v.size(); ++k) EXPECT_EQ(a.at(t * old_v.size() + k), b.at(t * new_v.size() + k));
}

TEST(Resize, NewRowStatisticsMatch) {
  const Vocabulary old_v;
  auto list = load_char_list(kData / "common_chars.txt");
  list.resize(1000);
  const auto new_v = extend_vocab(old_v, list);
  ASSERT_EQ(new_v.size() - old_v.size(), 1000u);
  ModelConfig c;
  c.d_model = 32;
  c.n_heads = 4;
  c.vocab_size = old_v.size();
  const auto w = init_weights<double>(c, 4);
  const auto r = resize_embeddings(w, old_v, new_v, 5);
  const auto stats = [](std::span<const double> xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    return std::pair{m, std::sqrt(v / static_cast<double>(xs.size()))};
  };
  const auto old_rows = r.tok_emb.data().first(old_v.size() * c.d_model);
  const auto new_rows = r.tok_emb.data().subspan(old_v.size() * c.d_model);
  const auto [m_old, s_old] = stats(old_rows);
  const auto [m_new, s_new] = stats(new_rows);
  EXPECT_NEAR(s_new / s_old, 1.0, 0.10);
  EXPECT_NEAR(m_new, m_old, 0.10 * s_old);
}

TEST(Resize, RejectsNonPrefixVocab) {
  const auto a = extend_vocab(Vocabulary{}, std::vector<std::string>{"中"});
  const auto b = extend_vocab(Vocabulary{}, std::vector<std::string>{"文"});
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.vocab_size = a.size();
  EXPECT_THROW(resize_embeddings(init_weights<float>(c, 1), a, b, 1), ContractError);
}

TEST(CharList, SkipsCommentsAndBlanks) {
  const auto p = std::filesystem::temp_directory_path() / "jiang_chars_test.txt";
  {
    std::ofstream out(p);
    out << "# header\n中\n\n文\n";
  }
  EXPECT_EQ(load_char_list(p), (std::vector<std::string>{"中", "文"}));
  std::filesystem::remove(p);
}

TEST(Pretokenize, IdeographsStandAlone) {
  const auto pieces = pretokenize("ab中文 cd");
  const std::vector<std::string_view> expected{"ab", "中", "文", " cd"};
  EXPECT_EQ(pieces, expected);
}
