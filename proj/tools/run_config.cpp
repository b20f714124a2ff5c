#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "jiang/error.hpp"
#include "json.hpp"

namespace jiang::cli {

namespace fs = std::filesystem;

RunConfig RunConfig::load(const std::optional<fs::path>& path, const KeyValues& overrides) {
  RunConfig rc;
  if (path) {
    rc.values = KeyValues::load(*path);
    rc.base_dir = path->parent_path();
  }
  rc.values.merge(overrides);

  // Relative term-list paths resolve against the config file.
  KeyValues filter_kv = rc.values;
  if (const auto list = rc.values.get("filter.nsfw_list"); list && !list->empty()) {
    filter_kv.set("filter.nsfw_list", rc.resolve("filter.nsfw_list").string());
  }
  rc.model = ModelConfig::from(rc.values);
  rc.model.validate();
  rc.schedule = TrainSchedule::from(rc.values);
  rc.rules = FilterRules::from(filter_kv);
  rc.mixture = MixtureSpec::from(rc.values);
  rc.selection = DiversityConfig::from(rc.values);
  rc.seed = rc.values.get_uint("seed", 0);
  return rc;
}

fs::path RunConfig::resolve(const std::string& key) const {
  const auto v = values.get(key);
  if (!v || v->empty()) return {};
  const fs::path p(*v);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

std::string RunConfig::hash() const {
  KeyValues kv = values;
  model.write_to(kv);
  schedule.write_to(kv);
  rules.write_to(kv);
  mixture.write_to(kv);
  selection.write_to(kv);
  kv.set("seed", std::to_string(seed));
  return to_hex64(fnv1a64(kv.serialize()));
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("JIANG_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ContractError(std::string("JIANG_SEED is not an unsigned integer: ") + env);
  }
  return 0;
}

std::vector<std::string> load_texts(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> texts;
  std::string line;
  if (path.extension() == ".jsonl") {
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        texts.push_back(nlohmann::json::parse(line).at("text").get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    return texts;
  }
  std::string current;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (!current.empty()) texts.push_back(std::move(current));
      current.clear();
      continue;
    }
    if (!current.empty()) current += '\n';
    current += line;
  }
  if (!current.empty()) texts.push_back(std::move(current));
  return texts;
}

}  // namespace jiang::cli
