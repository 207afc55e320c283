#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "voicectl/acoustic/model.hpp"
#include "voicectl/backbone/backbone.hpp"
#include "voicectl/desc/model.hpp"
#include "voicectl/pipeline/manifest.hpp"

namespace voicectl {

/// Checkpoint directory layout: params.bin, config.json, lineage.json (stage,
/// id, parent checkpoints, final losses) and, for acoustic checkpoints, the
/// symbol table in symbols.txt.
struct CheckpointParent {
  std::string stage;
  std::string id;
  std::string path;
};

struct CheckpointInfo {
  std::filesystem::path dir;
  std::string stage;
  std::string id;
  nlohmann::json config;
  std::vector<CheckpointParent> parents;
  nlohmann::json final_losses;
};

/// Writes the directory atomically (build in a sibling, then rename) and
/// returns the content-derived id.
std::string write_checkpoint(const std::filesystem::path& dir, const std::string& stage,
                             const ag::ParamStore<float>& params, const nlohmann::json& config,
                             const std::vector<CheckpointParent>& parents, const nlohmann::json& final_losses,
                             const SymbolTable* symbols = nullptr);

/// Throws DependencyError naming `stage` when the directory is missing or
/// holds another stage's checkpoint.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir, const std::string& stage);

/// Walks parent links; throws DependencyError if any parent is missing or its
/// id changed since the child was trained.
void verify_lineage(const std::filesystem::path& dir);

struct LoadedBackbone {
  CheckpointInfo info;
  std::unique_ptr<Backbone> model;
};

struct LoadedAcoustic {
  CheckpointInfo info;
  std::unique_ptr<AcousticModel> model;
  SymbolTable symbols;
};

struct LoadedDesc {
  CheckpointInfo info;
  std::unique_ptr<DescModel> model;
};

LoadedBackbone load_backbone(const std::filesystem::path& dir);
LoadedAcoustic load_acoustic(const std::filesystem::path& dir);
LoadedDesc load_desc(const std::filesystem::path& dir);

}  // namespace voicectl
