#pragma once

#include <array>
#include <filesystem>
#include <string>

namespace voicectl {

/// Description phrases for the five control levels (index 0 = level 1) and
/// the sentence template; "{adj}", "{pitch}" and "{speed}" are substituted.
struct LevelPhrases {
  std::array<std::string, 5> pitch;
  std::array<std::string, 5> speed;
  std::string sentence_template;

  std::string describe(const std::string& adjective, int pitch_level, int speed_level) const;
};

const LevelPhrases& default_level_phrases();

/// Reads the JSON phrase table ({"pitch": [...5], "speed": [...5], "template": "..."}).
LevelPhrases load_level_phrases(const std::filesystem::path& path);

}  // namespace voicectl
