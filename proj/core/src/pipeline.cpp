#include "jiang/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "jiang/error.hpp"
#include "jiang/utf8.hpp"
#include "json.hpp"

namespace jiang {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

json stats_json(const DocumentStats& s) {
  return json{{"english_word_count", s.english_word_count},
              {"chinese_char_count", s.chinese_char_count},
              {"char_length", s.char_length},
              {"max_punctuationless_run", s.max_punctuationless_run}};
}

}  // namespace

ReadResult read_documents(const fs::path& path) {
  ReadResult result;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    result.skips.push_back({path.filename().string(), 0, "cannot open file"});
    return result;
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!utf8::is_valid(line)) {
      ++result.invalid_utf8;
      continue;
    }
    try {
      const json j = json::parse(line);
      if (!j.is_object() || !j.contains("id") || !j.contains("text")) {
        throw std::runtime_error("expected an object with \"id\" and \"text\"");
      }
      const std::string source = j.contains("source") ? j.at("source").get<std::string>() : std::string("unknown");
      result.documents.push_back(
          Document::make(j.at("id").get<std::string>(), source, j.at("text").get<std::string>()));
    } catch (const json::exception& e) {
      result.skips.push_back({path.filename().string(), line_no, e.what()});
    } catch (const std::runtime_error& e) {
      result.skips.push_back({path.filename().string(), line_no, e.what()});
    }
  }
  if (in.bad()) result.skips.push_back({path.filename().string(), 0, "read error"});
  return result;
}

void write_documents(const fs::path& path, const std::vector<Document>& docs) {
  auto out = open_out(path);
  for (const auto& d : docs) out << json{{"id", d.id}, {"source", d.source}, {"text", d.text}}.dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

void write_stats(const fs::path& path, const std::vector<Document>& docs) {
  auto out = open_out(path);
  for (const auto& d : docs) {
    json j = stats_json(d.stats);
    j["id"] = d.id;
    j["source"] = d.source;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

KeyValues PipelineConfig::to_key_values() const {
  KeyValues kv;
  rules.write_to(kv);
  selection.write_to(kv);
  kv.set("select.enabled", select ? "true" : "false");
  kv.set("seed", std::to_string(seed));
  return kv;
}

std::string PipelineConfig::hash() const { return to_hex64(fnv1a64(to_key_values().serialize())); }

PipelineSummary pipeline_run(const fs::path& input_dir, const PipelineConfig& config, const fs::path& output_dir,
                             const Embedder& embedder) {
  config.rules.validate();
  if (config.select) config.selection.validate();
  std::error_code ec;
  if (!fs::is_directory(input_dir, ec)) throw IoError("input directory not found: " + input_dir.string());

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(input_dir, ec)) {
    if (!entry.is_directory() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  if (ec) throw IoError("cannot list " + input_dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());

  PipelineSummary summary;
  std::vector<Document> docs;
  for (const auto& f : files) {
    auto r = read_documents(f);
    summary.total += r.documents.size() + r.invalid_utf8;
    if (r.invalid_utf8 > 0) summary.rejected[std::string(kRejectInvalidUtf8)] += r.invalid_utf8;
    summary.skips.insert(summary.skips.end(), r.skips.begin(), r.skips.end());
    for (auto& d : r.documents) docs.push_back(std::move(d));
  }

  std::vector<Document> rejected;
  std::map<std::string, std::vector<std::size_t>> kept_by_source;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    docs[i].verdict = filter_document(docs[i], config.rules);
    if (docs[i].verdict) {
      ++summary.rejected[*docs[i].verdict];
      rejected.push_back(docs[i]);
    } else {
      ++summary.kept;
      kept_by_source[docs[i].source].push_back(i);
    }
  }

  json sources = json::object();
  std::set<std::string> chosen;
  for (const auto& [source, idx] : kept_by_source) {
    std::vector<std::string> picked;
    if (config.select) {
      std::vector<std::string> ids;
      std::vector<Embedding> emb;
      for (const std::size_t i : idx) {
        ids.push_back(docs[i].id);
        emb.push_back(embedder.embed(docs[i].text));
      }
      DiversityConfig cfg = config.selection;
      cfg.target_count = std::min(cfg.target_count, ids.size());
      cfg.seed = config.seed ^ fnv1a64(source);
      picked = diversity_select(ids, emb, cfg);
    } else {
      for (const std::size_t i : idx) picked.push_back(docs[i].id);
    }
    sources[source] = json{{"kept", idx.size()}, {"selected", picked.size()}};
    chosen.insert(picked.begin(), picked.end());
  }

  std::vector<Document> out_docs;
  for (const auto& d : docs) {
    if (!d.verdict && chosen.count(d.id)) out_docs.push_back(d);
  }
  for (const auto& d : out_docs) summary.selected_ids.push_back(d.id);

  fs::create_directories(output_dir, ec);
  if (ec) throw IoError("cannot create " + output_dir.string() + ": " + ec.message());
  write_documents(output_dir / "kept.jsonl", out_docs);
  {
    auto out = open_out(output_dir / "rejected.jsonl");
    for (const auto& d : rejected) {
      out << json{{"id", d.id}, {"source", d.source}, {"reason", *d.verdict}}.dump() << '\n';
    }
  }

  json skips = json::array();
  for (const auto& s : summary.skips) skips.push_back(json{{"file", s.file}, {"line", s.line}, {"error", s.error}});
  json inputs = json::array();
  for (const auto& f : files) inputs.push_back(f.filename().string());
  json rej = json::object();
  for (const auto& [reason, n] : summary.rejected) rej[reason] = n;
  json config_kv = json::object();
  const KeyValues kv = config.to_key_values();
  for (const auto& [k, v] : kv.entries()) config_kv[k] = v;

  const json manifest{
      {"seed", config.seed},
      {"config_hash", config.hash()},
      {"config", config_kv},
      {"inputs", inputs},
      {"counts", json{{"total", summary.total},
                      {"kept", summary.kept},
                      {"selected", summary.selected_ids.size()},
                      {"rejected", rej}}},
      {"sources", sources},
      {"selected_ids", summary.selected_ids},
      {"skips", skips},
  };
  summary.manifest_json = manifest.dump(2) + "\n";
  auto out = open_out(output_dir / "manifest.json");
  out << summary.manifest_json;
  if (!out) throw IoError("write failed for manifest.json");
  return summary;
}

PipelineSummary pipeline_run(const fs::path& input_dir, const PipelineConfig& config, const fs::path& output_dir) {
  return pipeline_run(input_dir, config, output_dir, TrigramEmbedder());
}

}  // namespace jiang
