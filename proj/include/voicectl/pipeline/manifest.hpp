#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace voicectl {

/// One utterance. `audio_path` is stored as written; resolve it with
/// Manifest::audio_file.
struct UtteranceRecord {
  std::string id;
  std::string audio_path;
  std::string language;
  std::string speaker_id;
  std::vector<int> symbols;
  std::optional<std::vector<int>> durations;  // frames per symbol
  std::optional<std::string> description;
  // Toy-corpus labels (0 when unknown).
  int pitch_level = 0;
  int speed_level = 0;
};

/// Plain-text symbol table: one symbol per line, id = line index.
class SymbolTable {
 public:
  SymbolTable() = default;
  explicit SymbolTable(std::vector<std::string> symbols);
  static SymbolTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(symbols_.size()); }
  bool contains(int id) const { return id >= 0 && id < size(); }
  const std::string& name(int id) const { return symbols_.at(static_cast<size_t>(id)); }
  /// -1 when absent.
  int id(const std::string& name) const;

 private:
  std::vector<std::string> symbols_;
};

/// JSON-lines manifest plus the symbol tables in <dir>/symbols/<lang>.txt.
struct Manifest {
  std::filesystem::path path;
  std::vector<UtteranceRecord> rows;
  std::map<std::string, SymbolTable> symbol_tables;

  std::filesystem::path dir() const { return path.parent_path(); }
  std::filesystem::path audio_file(const UtteranceRecord& r) const;
  std::vector<const UtteranceRecord*> by_language(const std::string& lang) const;
};

/// Reads rows and symbol tables. Malformed JSON lines raise IoError naming the
/// line; semantic checks are left to validate_manifest.
Manifest read_manifest(const std::filesystem::path& path);
/// One manifest line; throws nlohmann::json::exception on missing fields.
UtteranceRecord record_from_json(const nlohmann::json& j);
void write_manifest(const Manifest& m);

/// Symbol ids that stand for silence and are not counted as speech units.
bool is_pause_symbol(const std::string& name);

}  // namespace voicectl
