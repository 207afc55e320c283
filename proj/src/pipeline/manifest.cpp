#include "voicectl/pipeline/manifest.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "voicectl/core/errors.hpp"
#include "voicectl/core/fs.hpp"

namespace voicectl {

using nlohmann::json;

SymbolTable::SymbolTable(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {}

SymbolTable SymbolTable::load(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> symbols;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) symbols.push_back(line);
  }
  return SymbolTable(std::move(symbols));
}

void SymbolTable::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& s : symbols_) out += s + "\n";
  write_file_atomic(path, out);
}

int SymbolTable::id(const std::string& name) const {
  for (size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i] == name) return static_cast<int>(i);
  }
  return -1;
}

bool is_pause_symbol(const std::string& name) { return name == "pau" || name == "sil"; }

std::filesystem::path Manifest::audio_file(const UtteranceRecord& r) const {
  const std::filesystem::path p(r.audio_path);
  return p.is_absolute() ? p : dir() / p;
}

std::vector<const UtteranceRecord*> Manifest::by_language(const std::string& lang) const {
  std::vector<const UtteranceRecord*> out;
  for (const auto& r : rows) {
    if (r.language == lang) out.push_back(&r);
  }
  return out;
}

namespace {

json to_json(const UtteranceRecord& r) {
  json j = {{"id", r.id},           {"audio_path", r.audio_path}, {"language", r.language},
            {"speaker_id", r.speaker_id}, {"symbols", r.symbols}};
  if (r.durations) j["durations"] = *r.durations;
  if (r.description) j["description"] = *r.description;
  if (r.pitch_level != 0) j["pitch_level"] = r.pitch_level;
  if (r.speed_level != 0) j["speed_level"] = r.speed_level;
  return j;
}

}  // namespace

UtteranceRecord record_from_json(const json& j) {
  UtteranceRecord r;
  r.id = j.value("id", std::string());
  r.audio_path = j.at("audio_path").get<std::string>();
  r.language = j.at("language").get<std::string>();
  r.speaker_id = j.value("speaker_id", std::string());
  r.symbols = j.at("symbols").get<std::vector<int>>();
  if (j.contains("durations") && !j["durations"].is_null()) r.durations = j["durations"].get<std::vector<int>>();
  if (j.contains("description") && !j["description"].is_null()) r.description = j["description"].get<std::string>();
  r.pitch_level = j.value("pitch_level", 0);
  r.speed_level = j.value("speed_level", 0);
  return r;
}

Manifest read_manifest(const std::filesystem::path& path) {
  Manifest m;
  m.path = path;
  std::istringstream in(read_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.rows.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (m.rows.back().id.empty()) m.rows.back().id = "row" + std::to_string(lineno);
  }
  const auto sym_dir = m.dir() / "symbols";
  if (std::filesystem::is_directory(sym_dir)) {
    for (const auto& e : std::filesystem::directory_iterator(sym_dir)) {
      if (e.path().extension() == ".txt") m.symbol_tables[e.path().stem().string()] = SymbolTable::load(e.path());
    }
  }
  return m;
}

void write_manifest(const Manifest& m) {
  std::string out;
  for (const auto& r : m.rows) out += to_json(r).dump() + "\n";
  write_file_atomic(m.path, out);
  for (const auto& [lang, table] : m.symbol_tables) table.save(m.dir() / "symbols" / (lang + ".txt"));
}

}  // namespace voicectl
