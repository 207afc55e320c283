#include "voicectl/eval/level_phrases.hpp"

#include <nlohmann/json.hpp>

#include "voicectl/core/errors.hpp"
#include "voicectl/core/fs.hpp"

namespace voicectl {

namespace {

void replace_all(std::string& s, const std::string& key, const std::string& value) {
  for (size_t pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size())) {
    s.replace(pos, key.size(), value);
  }
}

}  // namespace

std::string LevelPhrases::describe(const std::string& adjective, int pitch_level, int speed_level) const {
  if (pitch_level < 1 || pitch_level > 5 || speed_level < 1 || speed_level > 5) {
    throw InvalidInput("description levels must be in 1..5");
  }
  std::string s = sentence_template;
  replace_all(s, "{adj}", adjective);
  replace_all(s, "{pitch}", pitch[static_cast<size_t>(pitch_level - 1)]);
  replace_all(s, "{speed}", speed[static_cast<size_t>(speed_level - 1)]);
  return s;
}

const LevelPhrases& default_level_phrases() {
  static const LevelPhrases p{
      {"very low pitch", "low pitch", "normal pitch", "high pitch", "very high pitch"},
      {"very slow speed", "slow speed", "normal speed", "fast speed", "very fast speed"},
      "A {adj} voice with {pitch} and {speed}."};
  return p;
}

LevelPhrases load_level_phrases(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  LevelPhrases p;
  const auto pitch = j.at("pitch").get<std::vector<std::string>>();
  const auto speed = j.at("speed").get<std::vector<std::string>>();
  if (pitch.size() != 5 || speed.size() != 5) throw ConfigError(path.string() + ": need five phrases per attribute");
  std::copy(pitch.begin(), pitch.end(), p.pitch.begin());
  std::copy(speed.begin(), speed.end(), p.speed.begin());
  p.sentence_template = j.at("template").get<std::string>();
  return p;
}

}  // namespace voicectl
