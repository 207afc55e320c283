#include "voicectl/pipeline/checkpoint.hpp"

#include "voicectl/core/fs.hpp"
#include "voicectl/core/rng.hpp"
#include "voicectl/core/tensor_io.hpp"
#include "voicectl/pipeline/config.hpp"

namespace voicectl {

namespace fs = std::filesystem;

namespace {

// Upstream checkpoints enter the id through their own ids, and the target
// cache only memoizes, so where these live does not change the checkpoint.
nlohmann::json without_locations(nlohmann::json config) {
  if (config.is_object()) {
    for (const char* key : {"backbone", "acoustic", "style_encoder_from", "target_cache_dir"}) config.erase(key);
  }
  return config;
}

}  // namespace

std::string write_checkpoint(const fs::path& dir, const std::string& stage, const ag::ParamStore<float>& params,
                             const nlohmann::json& config, const std::vector<CheckpointParent>& parents,
                             const nlohmann::json& final_losses, const SymbolTable* symbols) {
  fs::path staging = dir;
  staging += ".partial";
  std::error_code ec;
  fs::remove_all(staging, ec);
  fs::create_directories(staging, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + staging.string() + ": " + ec.message());

  save_params(params, staging / "params.bin");
  const std::string config_text = config.dump(2) + "\n";
  write_file_atomic(staging / "config.json", config_text);
  if (symbols) symbols->save(staging / "symbols.txt");

  std::uint64_t h = fnv1a(stage);
  h = fnv1a(read_file(staging / "params.bin"), h);
  h = fnv1a(without_locations(config).dump(), h);
  nlohmann::json jp = nlohmann::json::array();
  for (const auto& p : parents) {
    h = fnv1a(p.id, h);
    jp.push_back({{"stage", p.stage}, {"id", p.id}, {"path", p.path}});
  }
  const std::string id = stage + "-" + hex64(h);
  const nlohmann::json lineage = {{"stage", stage}, {"id", id}, {"parents", jp}, {"final_losses", final_losses}};
  write_file_atomic(staging / "lineage.json", lineage.dump(2) + "\n");

  fs::remove_all(dir, ec);
  if (!dir.parent_path().empty()) fs::create_directories(dir.parent_path(), ec);
  fs::rename(staging, dir, ec);
  if (ec) throw IoError("cannot move checkpoint into " + dir.string() + ": " + ec.message());
  return id;
}

CheckpointInfo read_checkpoint_info(const fs::path& dir, const std::string& stage) {
  if (dir.empty() || !fs::exists(dir / "lineage.json") || !fs::exists(dir / "params.bin") ||
      !fs::exists(dir / "config.json")) {
    throw DependencyError(stage, "no checkpoint" + (dir.empty() ? std::string() : " at " + dir.string()) +
                                     "; train the " + stage + " stage first");
  }
  CheckpointInfo info;
  info.dir = dir;
  try {
    const auto lineage = nlohmann::json::parse(read_file(dir / "lineage.json"));
    info.stage = lineage.at("stage").get<std::string>();
    info.id = lineage.at("id").get<std::string>();
    for (const auto& p : lineage.at("parents")) {
      info.parents.push_back({p.at("stage").get<std::string>(), p.at("id").get<std::string>(),
                              p.at("path").get<std::string>()});
    }
    info.final_losses = lineage.value("final_losses", nlohmann::json::object());
    info.config = nlohmann::json::parse(read_file(dir / "config.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("corrupt checkpoint metadata in " + dir.string() + ": " + e.what());
  }
  if (info.stage != stage) {
    throw DependencyError(stage, dir.string() + " holds a " + info.stage + " checkpoint");
  }
  return info;
}

void verify_lineage(const fs::path& dir) {
  nlohmann::json lineage;
  try {
    lineage = nlohmann::json::parse(read_file(dir / "lineage.json"));
  } catch (const std::exception& e) {
    throw DependencyError("lineage", "unreadable lineage in " + dir.string() + ": " + e.what());
  }
  for (const auto& p : lineage.at("parents")) {
    const std::string stage = p.at("stage").get<std::string>();
    const auto parent = read_checkpoint_info(p.at("path").get<std::string>(), stage);
    if (parent.id != p.at("id").get<std::string>()) {
      throw DependencyError(stage, "checkpoint at " + parent.dir.string() + " changed since " + dir.string() +
                                       " was trained");
    }
    verify_lineage(parent.dir);
  }
}

LoadedBackbone load_backbone(const fs::path& dir) {
  LoadedBackbone out;
  out.info = read_checkpoint_info(dir, "backbone");
  out.model = std::make_unique<Backbone>(parse_config<BackboneConfig>(out.info.config.at("model")));
  load_params(out.model->params(), dir / "params.bin");
  return out;
}

LoadedAcoustic load_acoustic(const fs::path& dir) {
  LoadedAcoustic out;
  out.info = read_checkpoint_info(dir, "acoustic");
  out.model = std::make_unique<AcousticModel>(parse_config<AcousticConfig>(out.info.config.at("model")));
  load_params(out.model->params(), dir / "params.bin");
  out.symbols = SymbolTable::load(dir / "symbols.txt");
  return out;
}

LoadedDesc load_desc(const fs::path& dir) {
  LoadedDesc out;
  out.info = read_checkpoint_info(dir, "desc");
  out.model = std::make_unique<DescModel>(parse_config<DescConfig>(out.info.config.at("model")));
  load_params(out.model->params(), dir / "params.bin");
  return out;
}

}  // namespace voicectl
