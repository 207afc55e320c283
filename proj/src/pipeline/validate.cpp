#include "voicectl/pipeline/validate.hpp"

#include <algorithm>
#include <sstream>

#include "voicectl/core/fs.hpp"
#include "voicectl/pipeline/manifest.hpp"

namespace voicectl {

std::vector<ManifestIssue> validate_manifest(const std::filesystem::path& path,
                                             const std::vector<std::string>& languages) {
  Manifest m;
  m.path = path;
  std::istringstream in(read_file(path));
  std::map<std::string, SymbolTable> tables;
  std::vector<ManifestIssue> issues;
  auto table_for = [&](const std::string& lang) -> const SymbolTable* {
    auto it = tables.find(lang);
    if (it == tables.end()) {
      const auto file = m.dir() / "symbols" / (lang + ".txt");
      if (!std::filesystem::exists(file)) return nullptr;
      it = tables.emplace(lang, SymbolTable::load(file)).first;
    }
    return &it->second;
  };

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    UtteranceRecord r;
    try {
      r = record_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      issues.push_back({lineno, "", std::string("malformed row: ") + e.what()});
      continue;
    }
    const std::string id = r.id.empty() ? "row" + std::to_string(lineno) : r.id;
    auto add = [&](std::string msg) { issues.push_back({lineno, id, std::move(msg)}); };

    const auto audio = m.audio_file(r);
    if (!std::filesystem::exists(audio)) add("audio file not found: " + audio.string());

    const SymbolTable* table = table_for(r.language);
    const bool allowed = languages.empty() || std::find(languages.begin(), languages.end(), r.language) != languages.end();
    if (!allowed || table == nullptr) {
      add("unknown language tag '" + r.language + "'");
    } else {
      for (size_t i = 0; i < r.symbols.size(); ++i) {
        if (!table->contains(r.symbols[i])) {
          add("symbol " + std::to_string(r.symbols[i]) + " at position " + std::to_string(i) + " is not in the " +
              r.language + " symbol table");
          break;
        }
      }
    }
    if (r.symbols.empty()) add("no symbols");
    if (r.durations) {
      if (r.durations->size() != r.symbols.size()) {
        add("durations has " + std::to_string(r.durations->size()) + " entries for " +
            std::to_string(r.symbols.size()) + " symbols");
      } else if (std::any_of(r.durations->begin(), r.durations->end(), [](int d) { return d < 0; })) {
        add("negative duration");
      }
    }
  }
  return issues;
}

std::string format_issue(const ManifestIssue& issue) {
  std::string s = "line " + std::to_string(issue.line);
  if (!issue.row_id.empty()) s += " (" + issue.row_id + ")";
  return s + ": " + issue.message;
}

}  // namespace voicectl
