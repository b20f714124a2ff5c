#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "jiang/checkpoint.hpp"
#include "jiang/error.hpp"
#include "jiang/eval.hpp"
#include "jiang/flash_attention.hpp"
#include "jiang/pipeline.hpp"
#include "jiang/tokenizer.hpp"
#include "json.hpp"

namespace jiang::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(static_cast<std::size_t>(std::stoull(item)));
  }
  return out;
}

struct Model {
  ModelConfig config;
  DecoderWeights<float> weights;
};

Model load_model(const fs::path& checkpoint) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  return {ckpt.config, ckpt.weights<float>()};
}

void check_vocab(const Model& m, const Vocabulary& vocab) {
  if (vocab.size() != m.config.vocab_size) {
    throw ContractError("vocabulary has " + std::to_string(vocab.size()) + " tokens, checkpoint expects " +
                        std::to_string(m.config.vocab_size));
  }
}

// Options shared by several subcommands.
struct Args {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config;
  std::string vocab, out, corpus, chars, input, checkpoint, checkpoint_out, texts, task, prompt, rules, spec;
  std::optional<std::string> resume;
  std::vector<std::string> positional;
  std::int64_t merges = 0;
  std::size_t target = 0;
  std::uint64_t draws = 100000;
  std::size_t max_new = 32, top_k = 0;
  double temperature = 1.0;
  std::string strategy = "greedy", norm = "none";
  bool no_select = false;
  std::string seq_lens = "64,128,256";
  std::size_t d_head = 32, heads = 4, block_q = 64, block_kv = 64, reps = 3;
  std::size_t max_steps = 0;
};

int cmd_tok_train(const Args& a, std::ostream& out) {
  const auto corpus = read_file(a.corpus);
  const auto vocab = train_bpe(corpus, a.merges);
  vocab.save(a.out);
  out << "vocab_size=" << vocab.size() << " merges=" << vocab.merge_count() << "\n";
  return kOk;
}

int cmd_tok_extend(const Args& a, std::ostream& out) {
  const auto vocab = Vocabulary::load(a.vocab);
  const auto chars = load_char_list(a.chars);
  const auto extended = extend_vocab(vocab, chars);
  extended.save(a.out);
  out << "vocab_size=" << extended.size() << " added=" << extended.size() - vocab.size() << "\n";
  if (!a.checkpoint.empty()) {
    if (a.checkpoint_out.empty()) throw ContractError("--checkpoint needs --checkpoint-out");
    Checkpoint ckpt = load_checkpoint(a.checkpoint);
    auto weights = resize_embeddings(ckpt.weights<float>(), vocab, extended, resolve_seed(a.seed));
    ModelConfig cfg = ckpt.config;
    cfg.vocab_size = extended.size();
    Checkpoint next = Checkpoint::from_weights(cfg, weights, ckpt.tokens_seen);
    save_checkpoint(a.checkpoint_out, next);
  }
  return kOk;
}

int cmd_tok_encode(const Args& a, std::ostream& out) {
  const auto vocab = Vocabulary::load(a.vocab);
  for (const auto& text : a.positional) {
    const auto ids = vocab.encode(text);
    for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? " " : "") << ids[i];
    out << "\n";
  }
  return kOk;
}

int cmd_tok_decode(const Args& a, std::ostream& out) {
  const auto vocab = Vocabulary::load(a.vocab);
  std::vector<TokenId> ids;
  for (const auto& p : a.positional) {
    std::stringstream ss(p);
    std::string tok;
    while (ss >> tok) {
      std::size_t used = 0;
      const long long v = std::stoll(tok, &used);
      if (used != tok.size()) throw ContractError("not a token id: " + tok);
      ids.push_back(static_cast<TokenId>(v));
    }
  }
  out << vocab.decode(ids) << "\n";
  return kOk;
}

int cmd_tok_coverage(const Args& a, std::ostream& out) {
  const auto vocab = Vocabulary::load(a.vocab);
  out << "coverage=" << format_double(coverage(vocab, read_file(a.corpus))) << "\n";
  return kOk;
}

PipelineConfig pipeline_config(const Args& a) {
  KeyValues overrides;
  if (!a.rules.empty()) {
    overrides = KeyValues::load(a.rules);
    // A term list named in the rules file is relative to that file.
    if (const auto list = overrides.get("filter.nsfw_list"); list && !list->empty()) {
      const fs::path p(*list);
      overrides.set("filter.nsfw_list", fs::absolute(p.is_absolute() ? p : fs::path(a.rules).parent_path() / p).string());
    }
  }
  const RunConfig rc = RunConfig::load(a.config ? std::optional<fs::path>(*a.config) : std::nullopt, overrides);
  PipelineConfig pc;
  pc.rules = rc.rules;
  pc.selection = rc.selection;
  if (a.target > 0) pc.selection.target_count = a.target;
  pc.select = !a.no_select;
  pc.seed = resolve_seed(a.seed ? a.seed : (rc.values.contains("seed") ? std::optional(rc.seed) : std::nullopt));
  return pc;
}

int cmd_pipeline_run(const Args& a, std::ostream& out) {
  const auto pc = pipeline_config(a);
  const auto summary = pipeline_run(a.input, pc, a.out);
  std::size_t rejected = 0;
  for (const auto& [reason, n] : summary.rejected) rejected += n;
  out << "total=" << summary.total << " kept=" << summary.kept << " rejected=" << rejected
      << " selected=" << summary.selected_ids.size() << " skipped=" << summary.skips.size() << "\n";
  return kOk;
}

int cmd_pipeline_stats(const Args& a, std::ostream& out) {
  const auto r = read_documents(a.input);
  for (const auto& s : r.skips) {
    if (s.line == 0) throw IoError(s.file + ": " + s.error);
  }
  write_stats(a.out, r.documents);
  out << "documents=" << r.documents.size() << " invalid_utf8=" << r.invalid_utf8 << " skipped=" << r.skips.size()
      << "\n";
  return kOk;
}

int cmd_pipeline_select(const Args& a, std::ostream& out) {
  const auto pc = pipeline_config(a);
  const auto r = read_documents(a.input);
  if (r.documents.empty()) throw ContractError("no documents in " + a.input);
  TrigramEmbedder embedder;
  std::vector<std::string> ids;
  std::vector<Embedding> emb;
  for (const auto& d : r.documents) {
    ids.push_back(d.id);
    emb.push_back(embedder.embed(d.text));
  }
  DiversityConfig cfg = pc.selection;
  cfg.seed = pc.seed;
  const auto picked = diversity_select(ids, emb, cfg);
  std::string text;
  for (const auto& id : picked) text += id + "\n";
  if (a.out.empty()) {
    out << text;
  } else {
    write_file(a.out, text);
  }
  return kOk;
}

int cmd_pipeline_mix(const Args& a, std::ostream& out) {
  const MixtureSpec spec = a.spec.empty() ? MixtureSpec::table1() : MixtureSpec::from(KeyValues::load(a.spec));
  const auto counts = mixture_counts(spec, a.draws, resolve_seed(a.seed));
  std::string csv = "source,proportion,count,share\n";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    csv += spec.proportions()[i].first + "," + format_double(spec.proportions()[i].second) + "," +
           std::to_string(counts[i]) + "," +
           format_double(static_cast<double>(counts[i]) / static_cast<double>(a.draws)) + "\n";
  }
  if (a.out.empty()) {
    out << csv;
  } else {
    write_file(a.out, csv);
  }
  return kOk;
}

int cmd_train(const Args& a, std::ostream& out) {
  if (!a.config) throw ContractError("train needs --config");
  KeyValues file = KeyValues::load(*a.config);
  const fs::path base = fs::path(*a.config).parent_path();
  const auto resolve = [&](const std::string& key) -> fs::path {
    const auto v = file.get(key);
    if (!v || v->empty()) return {};
    const fs::path p(*v);
    return p.is_absolute() ? p : base / p;
  };
  const fs::path vocab_path = resolve("data.vocab");
  const fs::path corpus_path = resolve("data.corpus");
  if (vocab_path.empty() || corpus_path.empty()) throw ContractError("config needs data.vocab and data.corpus");
  const auto vocab = Vocabulary::load(vocab_path);

  KeyValues overrides;
  if (!file.contains("model.vocab_size")) overrides.set("model.vocab_size", std::to_string(vocab.size()));
  overrides.set("seed", std::to_string(resolve_seed(a.seed ? a.seed
                                                          : (file.contains("seed")
                                                                 ? std::optional(file.get_uint("seed", 0))
                                                                 : std::nullopt))));
  const RunConfig rc = RunConfig::load(fs::path(*a.config), overrides);

  const auto docs = load_texts(corpus_path);
  const auto stream = pack_documents(vocab, docs);

  TrainOptions opts;
  opts.seed = rc.seed;
  opts.max_steps = a.max_steps > 0 ? a.max_steps : rc.values.get_uint("train.max_steps", 0);
  const fs::path out_dir(a.out);
  ensure_dir(out_dir);
  opts.checkpoint_dir = out_dir / "checkpoints";
  opts.metrics_csv = out_dir / "metrics.csv";
  if (a.resume) opts.resume = fs::path(*a.resume);
  if (const auto p = resolve("data.eval_texts"); !p.empty()) opts.eval_texts = load_texts(p);
  if (const auto p = resolve("data.eval_task"); !p.empty()) opts.eval_mc = load_mc_task(p);

  const auto result = train(rc.model, vocab, stream, rc.schedule, opts);

  json rows_json = json::array();
  json manifest{
      {"config_hash", rc.hash()},
      {"seed", rc.seed},
      {"steps", result.rows.empty() ? 0 : result.rows.back().step},
      {"tokens_seen", result.tokens_seen},
      {"param_count", param_count(rc.model)},
      {"vocab_size", vocab.size()},
      {"stream_tokens", stream.size()},
      {"metrics", "metrics.csv"},
      {"first_loss", result.rows.empty() ? 0.0 : result.rows.front().loss},
      {"final_loss", result.rows.empty() ? 0.0 : result.rows.back().loss},
  };
  write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  out << "steps=" << manifest["steps"] << " tokens_seen=" << result.tokens_seen
      << " final_loss=" << format_double(manifest["final_loss"].get<double>()) << "\n";
  return kOk;
}

int cmd_eval_ppl(const Args& a, std::ostream& out) {
  const auto model = load_model(a.checkpoint);
  const auto vocab = Vocabulary::load(a.vocab);
  check_vocab(model, vocab);
  const double ppl = evaluate_ppl(model.config, model.weights, vocab, load_texts(a.texts));
  out << "perplexity=" << format_double(ppl) << "\n";
  return kOk;
}

int cmd_eval_mc(const Args& a, std::ostream& out) {
  const auto model = load_model(a.checkpoint);
  const auto vocab = Vocabulary::load(a.vocab);
  check_vocab(model, vocab);
  McNormalization norm;
  if (a.norm == "none") {
    norm = McNormalization::none;
  } else if (a.norm == "per_char") {
    norm = McNormalization::per_char;
  } else {
    throw ContractError("unknown normalization '" + a.norm + "'");
  }
  const auto items = load_mc_task(a.task);
  const auto r = evaluate_multichoice(model.config, model.weights, vocab, items, norm);
  out << "accuracy=" << format_double(r.accuracy) << " items=" << items.size() << " ties=" << r.ties << "\n";
  if (!a.out.empty()) {
    json per_item = json::array();
    for (const auto& s : r.items) {
      per_item.push_back(json{{"scores", s.scores}, {"predicted", s.predicted}, {"tied", s.tied}, {"correct", s.correct}});
    }
    const json manifest{{"accuracy", r.accuracy},
                        {"items", items.size()},
                        {"ties", r.ties},
                        {"tie_rule", "lowest choice index wins"},
                        {"normalization", a.norm},
                        {"per_item", per_item}};
    write_file(a.out, manifest.dump(2) + "\n");
  }
  return kOk;
}

int cmd_generate(const Args& a, std::ostream& out) {
  const auto model = load_model(a.checkpoint);
  const auto vocab = Vocabulary::load(a.vocab);
  check_vocab(model, vocab);
  GenerateOptions opts;
  opts.max_new = a.max_new;
  opts.temperature = a.temperature;
  opts.top_k = a.top_k;
  opts.seed = resolve_seed(a.seed);
  if (a.strategy == "greedy") {
    opts.strategy = SamplingStrategy::greedy;
  } else if (a.strategy == "temperature") {
    opts.strategy = SamplingStrategy::temperature;
  } else if (a.strategy == "top-k" || a.strategy == "top_k") {
    opts.strategy = SamplingStrategy::top_k;
  } else {
    throw ContractError("unknown strategy '" + a.strategy + "'");
  }
  out << generate(model.config, model.weights, vocab, a.prompt, opts).text << "\n";
  return kOk;
}

// Naive attention with the full score matrix, for timing only.
void naive_attention(const std::vector<float>& q, const std::vector<float>& k, const std::vector<float>& v,
                     std::size_t heads, std::size_t t, std::size_t dh, std::vector<float>& out) {
  std::vector<float> s(t * t);
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * t * dh;
    for (std::size_t i = 0; i < t; ++i) {
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t j = 0; j <= i; ++j) {
        float dot = 0.0f;
        for (std::size_t d = 0; d < dh; ++d) dot += q[off + i * dh + d] * k[off + j * dh + d];
        s[i * t + j] = dot * scale;
        mx = std::max(mx, s[i * t + j]);
      }
      float z = 0.0f;
      for (std::size_t j = 0; j <= i; ++j) z += (s[i * t + j] = std::exp(s[i * t + j] - mx));
      for (std::size_t d = 0; d < dh; ++d) {
        float acc = 0.0f;
        for (std::size_t j = 0; j <= i; ++j) acc += s[i * t + j] * v[off + j * dh + d];
        out[off + i * dh + d] = acc / z;
      }
    }
  }
}

int cmd_bench_attention(const Args& a, std::ostream& out) {
  std::mt19937_64 rng(resolve_seed(a.seed));
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::string csv = "seq_len,heads,d_head,block_q,block_kv,naive_ms,tiled_ms,naive_bytes,tiled_bytes,max_abs_diff\n";
  for (const std::size_t t : parse_size_list(a.seq_lens)) {
    const std::size_t n = a.heads * t * a.d_head;
    std::vector<float> q(n), k(n), v(n), o1(n), o2(n);
    for (auto* buf : {&q, &k, &v}) {
      for (auto& x : *buf) x = dist(rng);
    }
    const flash::TileConfig tiles{a.block_q, a.block_kv};
    const auto time = [&](auto&& fn) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < std::max<std::size_t>(1, a.reps); ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
      }
      return best;
    };
    const double naive_ms = time([&] { naive_attention(q, k, v, a.heads, t, a.d_head, o1); });
    const double tiled_ms =
        time([&] { flash::tiled_attention_into<float>(q, k, v, a.heads, t, a.d_head, true, tiles, o2); });
    float diff = 0.0f;
    for (std::size_t i = 0; i < n; ++i) diff = std::max(diff, std::abs(o1[i] - o2[i]));
    const auto mem = flash::memory_estimate(t, a.d_head, a.heads, tiles, sizeof(float));
    csv += std::to_string(t) + "," + std::to_string(a.heads) + "," + std::to_string(a.d_head) + "," +
           std::to_string(a.block_q) + "," + std::to_string(a.block_kv) + "," + format_double(naive_ms) + "," +
           format_double(tiled_ms) + "," + std::to_string(mem.naive_bytes) + "," + std::to_string(mem.tiled_bytes) +
           "," + format_double(diff) + "\n";
  }
  if (a.out.empty()) {
    out << csv;
  } else {
    write_file(a.out, csv);
  }
  return kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"jiang: tokenizer, corpus pipeline, training and evaluation for a small decoder LM", "jiang"};
  app.require_subcommand(1);
  Args a;

  const auto seed_opt = [&](CLI::App* sub) { sub->add_option("--seed", a.seed, "Random seed (falls back to JIANG_SEED)"); };

  auto* tok = app.add_subcommand("tok", "Tokenizer tools");
  tok->require_subcommand(1);
  auto* tok_train = tok->add_subcommand("train", "Train a byte-level BPE vocabulary");
  tok_train->add_option("--corpus", a.corpus, "UTF-8 text file")->required();
  tok_train->add_option("--merges", a.merges, "Number of merges")->required();
  tok_train->add_option("--out", a.out, "Output .jvoc")->required();
  auto* tok_extend = tok->add_subcommand("extend", "Append single-character tokens");
  tok_extend->add_option("--vocab", a.vocab)->required();
  tok_extend->add_option("--chars", a.chars, "Character list, one per line")->required();
  tok_extend->add_option("--out", a.out)->required();
  tok_extend->add_option("--checkpoint", a.checkpoint, "Checkpoint whose embeddings to resize");
  tok_extend->add_option("--checkpoint-out", a.checkpoint_out);
  seed_opt(tok_extend);
  auto* tok_encode = tok->add_subcommand("encode", "Print token ids");
  tok_encode->add_option("--vocab", a.vocab)->required();
  tok_encode->add_option("text", a.positional)->required();
  auto* tok_decode = tok->add_subcommand("decode", "Print text for token ids");
  tok_decode->add_option("--vocab", a.vocab)->required();
  tok_decode->add_option("ids", a.positional)->required();
  auto* tok_cov = tok->add_subcommand("coverage", "Single-token rate of CJK characters");
  tok_cov->add_option("--vocab", a.vocab)->required();
  tok_cov->add_option("--corpus", a.corpus)->required();

  auto* pipe = app.add_subcommand("pipeline", "Corpus filtering, selection and mixing");
  pipe->require_subcommand(1);
  const auto pipe_common = [&](CLI::App* sub) {
    sub->add_option("--config", a.config, "key=value config");
    sub->add_option("--rules", a.rules, "key=value filter rules");
    seed_opt(sub);
  };
  auto* pipe_run = pipe->add_subcommand("run", "Filter and select a directory of JSONL files");
  pipe_run->add_option("--input", a.input, "Input directory")->required();
  pipe_run->add_option("--out", a.out, "Output directory")->required();
  pipe_run->add_option("--target", a.target, "Documents to select per source");
  pipe_run->add_flag("--no-select", a.no_select, "Keep every document that passes the filters");
  pipe_common(pipe_run);
  auto* pipe_stats = pipe->add_subcommand("stats", "Per-document statistics");
  pipe_stats->add_option("--input", a.input, "Input JSONL")->required();
  pipe_stats->add_option("--out", a.out, "Output JSONL")->required();
  auto* pipe_select = pipe->add_subcommand("select", "Diversity selection over one JSONL file");
  pipe_select->add_option("--input", a.input)->required();
  pipe_select->add_option("--target", a.target)->required();
  pipe_select->add_option("--out", a.out);
  pipe_common(pipe_select);
  auto* pipe_mix = pipe->add_subcommand("mix", "Draw sources by mixture proportion");
  pipe_mix->add_option("--spec", a.spec, "key=value file with mix.<source> weights");
  pipe_mix->add_option("--draws", a.draws);
  pipe_mix->add_option("--out", a.out);
  seed_opt(pipe_mix);

  auto* train_cmd = app.add_subcommand("train", "Train a model from a config");
  train_cmd->add_option("--config", a.config)->required();
  train_cmd->add_option("--out", a.out, "Output directory")->required();
  train_cmd->add_option("--resume", a.resume, "Checkpoint to resume from");
  train_cmd->add_option("--max-steps", a.max_steps);
  seed_opt(train_cmd);

  auto* ppl = app.add_subcommand("eval-ppl", "Perplexity over a text set");
  ppl->add_option("--checkpoint", a.checkpoint)->required();
  ppl->add_option("--vocab", a.vocab)->required();
  ppl->add_option("--texts", a.texts)->required();

  auto* mc = app.add_subcommand("eval-mc", "Multiple-choice log-likelihood accuracy");
  mc->add_option("--checkpoint", a.checkpoint)->required();
  mc->add_option("--vocab", a.vocab)->required();
  mc->add_option("--task", a.task)->required();
  mc->add_option("--norm", a.norm, "none or per_char");
  mc->add_option("--out", a.out, "Per-item JSON");

  auto* gen = app.add_subcommand("generate", "Continue a prompt");
  gen->add_option("--checkpoint", a.checkpoint)->required();
  gen->add_option("--vocab", a.vocab)->required();
  gen->add_option("--prompt", a.prompt)->required();
  gen->add_option("--max-new", a.max_new);
  gen->add_option("--strategy", a.strategy, "greedy, temperature or top-k");
  gen->add_option("--temperature", a.temperature);
  gen->add_option("--top-k", a.top_k);
  seed_opt(gen);

  auto* bench = app.add_subcommand("bench-attention", "Naive vs tiled attention timings as CSV");
  bench->add_option("--seq-lens", a.seq_lens, "Comma-separated sequence lengths");
  bench->add_option("--d-head", a.d_head);
  bench->add_option("--heads", a.heads);
  bench->add_option("--block-q", a.block_q);
  bench->add_option("--block-kv", a.block_kv);
  bench->add_option("--reps", a.reps);
  bench->add_option("--out", a.out);
  seed_opt(bench);

  auto* plot = app.add_subcommand("plot", "SVG plot of a metrics CSV");
  plot->add_option("--metrics", a.input)->required();
  plot->add_option("--out", a.out)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (tok_train->parsed()) return cmd_tok_train(a, out);
    if (tok_extend->parsed()) return cmd_tok_extend(a, out);
    if (tok_encode->parsed()) return cmd_tok_encode(a, out);
    if (tok_decode->parsed()) return cmd_tok_decode(a, out);
    if (tok_cov->parsed()) return cmd_tok_coverage(a, out);
    if (pipe_run->parsed()) return cmd_pipeline_run(a, out);
    if (pipe_stats->parsed()) return cmd_pipeline_stats(a, out);
    if (pipe_select->parsed()) return cmd_pipeline_select(a, out);
    if (pipe_mix->parsed()) return cmd_pipeline_mix(a, out);
    if (train_cmd->parsed()) return cmd_train(a, out);
    if (ppl->parsed()) return cmd_eval_ppl(a, out);
    if (mc->parsed()) return cmd_eval_mc(a, out);
    if (gen->parsed()) return cmd_generate(a, out);
    if (bench->parsed()) return cmd_bench_attention(a, out);
    if (plot->parsed()) {
      plot_metrics(a.input, a.out);
      return kOk;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  err << app.help();
  return kUsage;
}

}  // namespace jiang::cli
