#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace voicectl {

struct ManifestIssue {
  int line = 0;
  std::string row_id;
  std::string message;
};

/// Per-row problems: malformed JSON, missing audio, unknown language tag
/// (no symbols/<lang>.txt, or not in `languages` when that is non-empty),
/// symbol ids outside the table, duration count or sign errors. Throws
/// IoError only when the manifest itself cannot be read.
std::vector<ManifestIssue> validate_manifest(const std::filesystem::path& path,
                                             const std::vector<std::string>& languages = {});

std::string format_issue(const ManifestIssue& issue);

}  // namespace voicectl
