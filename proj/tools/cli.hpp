#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "jiang/config.hpp"
#include "jiang/diversity.hpp"
#include "jiang/document.hpp"
#include "jiang/mixture.hpp"
#include "jiang/model.hpp"
#include "jiang/train.hpp"

namespace jiang::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kRuntime = 2;

// Runs one command line (without the program name).
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Everything a run is parameterised by, validated up front.
struct RunConfig {
  KeyValues values;  // merged view; serialized form is what gets hashed
  ModelConfig model;
  TrainSchedule schedule;
  FilterRules rules;
  MixtureSpec mixture = MixtureSpec::table1();
  DiversityConfig selection;
  std::uint64_t seed = 0;
  std::filesystem::path base_dir;  // relative paths in the file resolve here

  // Empty path: defaults only. Keys in `overrides` win over the file.
  static RunConfig load(const std::optional<std::filesystem::path>& path, const KeyValues& overrides = {});

  std::filesystem::path resolve(const std::string& key) const;  // empty when unset
  std::string hash() const;
};

// --seed when given, else JIANG_SEED, else 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag);

// Texts from a .jsonl file ("text" field per line) or a plain text file
// split on blank lines.
std::vector<std::string> load_texts(const std::filesystem::path& path);

// Line plot of every metrics series against step: loss always, eval_ppl and
// eval_acc when any row has them. Throws IoError naming the offending line
// for a malformed row, and for a file without data rows; nothing is written
// in that case.
void plot_metrics(const std::filesystem::path& csv_path, const std::filesystem::path& svg_path);
std::string render_metrics_svg(const std::vector<MetricsRow>& rows);

}  // namespace jiang::cli
