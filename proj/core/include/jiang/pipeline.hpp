#pragma once

// JSONL corpus plumbing: read documents, filter, select per source, write
// outputs and a manifest.
//
// Input/output lines are {"id","source","text"} objects. pipeline_run reads
// every *.jsonl file of the input directory in name order and writes
//   kept.jsonl      selected documents, in input order
//   rejected.jsonl  {"id","source","reason"} per rejected document
//   manifest.json   counts, selected ids, skips, seed and config hash

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "jiang/config.hpp"
#include "jiang/diversity.hpp"
#include "jiang/document.hpp"

namespace jiang {

struct Skip {
  std::string file;
  std::size_t line = 0;  // 0 for whole-file failures
  std::string error;
};

struct ReadResult {
  std::vector<Document> documents;
  std::vector<Skip> skips;
  std::size_t invalid_utf8 = 0;
};

// Malformed lines are recorded as skips; lines whose bytes are not valid
// UTF-8 are counted separately.
ReadResult read_documents(const std::filesystem::path& path);
void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs);

// One JSON object per line with "id", "source" and every stats field.
void write_stats(const std::filesystem::path& path, const std::vector<Document>& docs);

struct PipelineConfig {
  FilterRules rules;
  DiversityConfig selection;  // target_count applies per source
  // When false every kept document is emitted without selection.
  bool select = true;
  std::uint64_t seed = 0;

  KeyValues to_key_values() const;
  std::string hash() const;  // fnv1a64 of the serialized key values
};

struct PipelineSummary {
  std::size_t total = 0;
  std::size_t kept = 0;
  std::map<std::string, std::size_t> rejected;  // reason -> count
  std::vector<std::string> selected_ids;
  std::vector<Skip> skips;
  std::string manifest_json;
};

// IO failures on individual input files are recorded and the run continues.
// Throws IoError when the output directory cannot be written.
PipelineSummary pipeline_run(const std::filesystem::path& input_dir, const PipelineConfig& config,
                             const std::filesystem::path& output_dir, const Embedder& embedder);
PipelineSummary pipeline_run(const std::filesystem::path& input_dir, const PipelineConfig& config,
                             const std::filesystem::path& output_dir);

}  // namespace jiang
