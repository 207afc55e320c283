#pragma once

#include <stdexcept>
#include <string>

namespace voicectl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what) : Error("invalid input: " + what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("i/o error: " + what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("configuration error: " + what) {}
};

/// A training stage was requested before the stage it depends on.
class DependencyError : public Error {
 public:
  DependencyError(std::string missing_stage, const std::string& what)
      : Error("dependency error: missing stage '" + missing_stage + "': " + what),
        missing_stage_(std::move(missing_stage)) {}
  const std::string& missing_stage() const { return missing_stage_; }

 private:
  std::string missing_stage_;
};

class EncoderUnavailable : public Error {
 public:
  explicit EncoderUnavailable(const std::string& what) : Error("encoder unavailable: " + what) {}
};

class EmbedderUnavailable : public Error {
 public:
  explicit EmbedderUnavailable(const std::string& what) : Error("speaker embedder unavailable: " + what) {}
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(long step, const std::string& what)
      : Error("training diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

class NoVoicedFrames : public Error {
 public:
  NoVoicedFrames() : Error("no voiced frames") {}
};

class UndefinedCorrelation : public Error {
 public:
  explicit UndefinedCorrelation(const std::string& what) : Error("undefined correlation: " + what) {}
};

}  // namespace voicectl
