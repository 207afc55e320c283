#include "voicectl/pipeline/config.hpp"

#include "voicectl/core/fs.hpp"

namespace voicectl {

namespace {

// Rejects keys that no field consumes, which catches typos in config files.
void check_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " config must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(std::string("unknown ") + what + " config key '" + key + "'");
  }
}

template <typename V>
void get(const nlohmann::json& j, const char* key, V& v) {
  if (j.contains(key)) j.at(key).get_to(v);
}

}  // namespace

void to_json(nlohmann::json& j, const HnConfig& c) {
  j = {{"n_env", c.n_env}, {"n_noise", c.n_noise}, {"harmonic_limit", c.harmonic_limit}};
}
void from_json(const nlohmann::json& j, HnConfig& c) {
  check_keys(j, {"n_env", "n_noise", "harmonic_limit"}, "hn");
  get(j, "n_env", c.n_env);
  get(j, "n_noise", c.n_noise);
  get(j, "harmonic_limit", c.harmonic_limit);
}

void to_json(nlohmann::json& j, const PerturbRanges& c) {
  j = {{"formant_min", c.formant_min}, {"formant_max", c.formant_max}, {"pitch_min", c.pitch_min},
       {"pitch_max", c.pitch_max},     {"peq_gain_db", c.peq_gain_db}};
}
void from_json(const nlohmann::json& j, PerturbRanges& c) {
  check_keys(j, {"formant_min", "formant_max", "pitch_min", "pitch_max", "peq_gain_db"}, "perturb");
  get(j, "formant_min", c.formant_min);
  get(j, "formant_max", c.formant_max);
  get(j, "pitch_min", c.pitch_min);
  get(j, "pitch_max", c.pitch_max);
  get(j, "peq_gain_db", c.peq_gain_db);
}

void to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = {{"content_encoder", c.content_encoder},
       {"content_dim", c.content_dim},
       {"content_cache_dir", c.content_cache_dir},
       {"sample_rate", c.sample_rate},
       {"hop_seconds", c.hop_seconds},
       {"timbre_channels", c.timbre_channels},
       {"timbre_kernel", c.timbre_kernel},
       {"decoder_hidden", c.decoder_hidden},
       {"hn", c.hn},
       {"f0_min_hz", c.f0_min_hz},
       {"f0_max_hz", c.f0_max_hz},
       {"f0_floor_hz", c.f0_floor_hz},
       {"discriminator", c.discriminator},
       {"init_seed", c.init_seed}};
}
void from_json(const nlohmann::json& j, BackboneConfig& c) {
  check_keys(j,
             {"content_encoder", "content_dim", "content_cache_dir", "sample_rate", "hop_seconds", "timbre_channels",
              "timbre_kernel", "decoder_hidden", "hn", "f0_min_hz", "f0_max_hz", "f0_floor_hz", "discriminator",
              "init_seed"},
             "backbone model");
  get(j, "content_encoder", c.content_encoder);
  get(j, "content_dim", c.content_dim);
  get(j, "content_cache_dir", c.content_cache_dir);
  get(j, "sample_rate", c.sample_rate);
  get(j, "hop_seconds", c.hop_seconds);
  get(j, "timbre_channels", c.timbre_channels);
  get(j, "timbre_kernel", c.timbre_kernel);
  get(j, "decoder_hidden", c.decoder_hidden);
  get(j, "hn", c.hn);
  get(j, "f0_min_hz", c.f0_min_hz);
  get(j, "f0_max_hz", c.f0_max_hz);
  get(j, "f0_floor_hz", c.f0_floor_hz);
  get(j, "discriminator", c.discriminator);
  get(j, "init_seed", c.init_seed);
}

void to_json(nlohmann::json& j, const BackboneTrainConfig& c) {
  j = {{"steps", c.steps},
       {"batch_size", c.batch_size},
       {"crop_min_seconds", c.crop_min_seconds},
       {"crop_max_seconds", c.crop_max_seconds},
       {"learning_rate", c.learning_rate},
       {"lr_decay_per_epoch", c.lr_decay_per_epoch},
       {"steps_per_epoch", c.steps_per_epoch},
       {"weight_decay", c.weight_decay},
       {"grad_clip_norm", c.grad_clip_norm},
       {"contrastive_weight", c.contrastive_weight},
       {"temperature", c.temperature},
       {"negatives", c.negatives},
       {"adversarial_weight", c.adversarial_weight},
       {"perturb", c.perturb},
       {"timbre_pitch_min", c.timbre_pitch_min},
       {"timbre_pitch_max", c.timbre_pitch_max}};
}
void from_json(const nlohmann::json& j, BackboneTrainConfig& c) {
  check_keys(j,
             {"steps", "batch_size", "crop_min_seconds", "crop_max_seconds", "learning_rate", "lr_decay_per_epoch",
              "steps_per_epoch", "weight_decay", "grad_clip_norm", "contrastive_weight", "temperature", "negatives",
              "adversarial_weight", "perturb", "timbre_pitch_min", "timbre_pitch_max"},
             "backbone train");
  get(j, "steps", c.steps);
  get(j, "batch_size", c.batch_size);
  get(j, "crop_min_seconds", c.crop_min_seconds);
  get(j, "crop_max_seconds", c.crop_max_seconds);
  get(j, "learning_rate", c.learning_rate);
  get(j, "lr_decay_per_epoch", c.lr_decay_per_epoch);
  get(j, "steps_per_epoch", c.steps_per_epoch);
  get(j, "weight_decay", c.weight_decay);
  get(j, "grad_clip_norm", c.grad_clip_norm);
  get(j, "contrastive_weight", c.contrastive_weight);
  get(j, "temperature", c.temperature);
  get(j, "negatives", c.negatives);
  get(j, "adversarial_weight", c.adversarial_weight);
  get(j, "perturb", c.perturb);
  get(j, "timbre_pitch_min", c.timbre_pitch_min);
  get(j, "timbre_pitch_max", c.timbre_pitch_max);
}

void to_json(nlohmann::json& j, const AcousticConfig& c) {
  j = {{"language", c.language},
       {"n_symbols", c.n_symbols},
       {"style_backend", c.style_backend},
       {"style_cache_dir", c.style_cache_dir},
       {"style_layers", c.style_layers},
       {"style_dim", c.style_dim},
       {"model_dim", c.model_dim},
       {"encoder_layers", c.encoder_layers},
       {"attention_heads", c.attention_heads},
       {"ff_dim", c.ff_dim},
       {"conv_kernel", c.conv_kernel},
       {"decoder_hidden", c.decoder_hidden},
       {"decoder_kernel", c.decoder_kernel},
       {"decoder_dilations", c.decoder_dilations},
       {"max_duration_frames", c.max_duration_frames},
       {"timbre_from_style", c.timbre_from_style},
       {"hop_seconds", c.hop_seconds},
       {"init_seed", c.init_seed}};
}
void from_json(const nlohmann::json& j, AcousticConfig& c) {
  check_keys(j,
             {"language", "n_symbols", "style_backend", "style_cache_dir", "style_layers", "style_dim", "model_dim",
              "encoder_layers", "attention_heads", "ff_dim", "conv_kernel", "decoder_hidden", "decoder_kernel",
              "decoder_dilations", "max_duration_frames", "timbre_from_style", "hop_seconds", "init_seed"},
             "acoustic model");
  get(j, "language", c.language);
  get(j, "n_symbols", c.n_symbols);
  get(j, "style_backend", c.style_backend);
  get(j, "style_cache_dir", c.style_cache_dir);
  get(j, "style_layers", c.style_layers);
  get(j, "style_dim", c.style_dim);
  get(j, "model_dim", c.model_dim);
  get(j, "encoder_layers", c.encoder_layers);
  get(j, "attention_heads", c.attention_heads);
  get(j, "ff_dim", c.ff_dim);
  get(j, "conv_kernel", c.conv_kernel);
  get(j, "decoder_hidden", c.decoder_hidden);
  get(j, "decoder_kernel", c.decoder_kernel);
  get(j, "decoder_dilations", c.decoder_dilations);
  get(j, "max_duration_frames", c.max_duration_frames);
  get(j, "timbre_from_style", c.timbre_from_style);
  get(j, "hop_seconds", c.hop_seconds);
  get(j, "init_seed", c.init_seed);
}

void to_json(nlohmann::json& j, const AcousticTrainConfig& c) {
  j = {{"steps", c.steps},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"lr_decay_per_epoch", c.lr_decay_per_epoch},
       {"steps_per_epoch", c.steps_per_epoch},
       {"weight_decay", c.weight_decay},
       {"grad_clip_norm", c.grad_clip_norm},
       {"vuv_weight", c.vuv_weight},
       {"timbre_weight", c.timbre_weight}};
}
void from_json(const nlohmann::json& j, AcousticTrainConfig& c) {
  check_keys(j,
             {"steps", "batch_size", "learning_rate", "lr_decay_per_epoch", "steps_per_epoch", "weight_decay",
              "grad_clip_norm", "vuv_weight", "timbre_weight"},
             "acoustic train");
  get(j, "steps", c.steps);
  get(j, "batch_size", c.batch_size);
  get(j, "learning_rate", c.learning_rate);
  get(j, "lr_decay_per_epoch", c.lr_decay_per_epoch);
  get(j, "steps_per_epoch", c.steps_per_epoch);
  get(j, "weight_decay", c.weight_decay);
  get(j, "grad_clip_norm", c.grad_clip_norm);
  get(j, "vuv_weight", c.vuv_weight);
  get(j, "timbre_weight", c.timbre_weight);
}

void to_json(nlohmann::json& j, const DescConfig& c) {
  j = {{"text_backend", c.text_backend}, {"adjectives", c.adjectives},       {"mlm_cache_dir", c.mlm_cache_dir},
       {"mlm_dim", c.mlm_dim},           {"mlm_heads", c.mlm_heads},         {"mdn_hidden", c.mdn_hidden},
       {"components", c.components},     {"timbre_dim", c.timbre_dim},       {"style_dim", c.style_dim},
       {"init_seed", c.init_seed}};
}
void from_json(const nlohmann::json& j, DescConfig& c) {
  check_keys(j,
             {"text_backend", "adjectives", "mlm_cache_dir", "mlm_dim", "mlm_heads", "mdn_hidden", "components",
              "timbre_dim", "style_dim", "init_seed"},
             "desc model");
  get(j, "text_backend", c.text_backend);
  get(j, "adjectives", c.adjectives);
  get(j, "mlm_cache_dir", c.mlm_cache_dir);
  get(j, "mlm_dim", c.mlm_dim);
  get(j, "mlm_heads", c.mlm_heads);
  get(j, "mdn_hidden", c.mdn_hidden);
  get(j, "components", c.components);
  get(j, "timbre_dim", c.timbre_dim);
  get(j, "style_dim", c.style_dim);
  get(j, "init_seed", c.init_seed);
}

void to_json(nlohmann::json& j, const DescTrainConfig& c) {
  j = {{"steps", c.steps},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"lr_decay_per_epoch", c.lr_decay_per_epoch},
       {"steps_per_epoch", c.steps_per_epoch},
       {"weight_decay", c.weight_decay},
       {"grad_clip_norm", c.grad_clip_norm}};
}
void from_json(const nlohmann::json& j, DescTrainConfig& c) {
  check_keys(j,
             {"steps", "batch_size", "learning_rate", "lr_decay_per_epoch", "steps_per_epoch", "weight_decay",
              "grad_clip_norm"},
             "desc train");
  get(j, "steps", c.steps);
  get(j, "batch_size", c.batch_size);
  get(j, "learning_rate", c.learning_rate);
  get(j, "lr_decay_per_epoch", c.lr_decay_per_epoch);
  get(j, "steps_per_epoch", c.steps_per_epoch);
  get(j, "weight_decay", c.weight_decay);
  get(j, "grad_clip_norm", c.grad_clip_norm);
}

void to_json(nlohmann::json& j, const BackboneStageConfig& c) { j = {{"model", c.model}, {"train", c.train}}; }
void from_json(const nlohmann::json& j, BackboneStageConfig& c) {
  check_keys(j, {"model", "train"}, "backbone stage");
  get(j, "model", c.model);
  get(j, "train", c.train);
}

void to_json(nlohmann::json& j, const AcousticStageConfig& c) {
  j = {{"backbone", c.backbone},
       {"style_encoder_from", c.style_encoder_from},
       {"model", c.model},
       {"train", c.train}};
}
void from_json(const nlohmann::json& j, AcousticStageConfig& c) {
  check_keys(j, {"backbone", "style_encoder_from", "model", "train"}, "acoustic stage");
  get(j, "backbone", c.backbone);
  get(j, "style_encoder_from", c.style_encoder_from);
  get(j, "model", c.model);
  get(j, "train", c.train);
}

void to_json(nlohmann::json& j, const DescStageConfig& c) {
  j = {{"backbone", c.backbone},
       {"acoustic", c.acoustic},
       {"target_cache_dir", c.target_cache_dir},
       {"model", c.model},
       {"train", c.train}};
}
void from_json(const nlohmann::json& j, DescStageConfig& c) {
  check_keys(j, {"backbone", "acoustic", "target_cache_dir", "model", "train"}, "desc stage");
  get(j, "backbone", c.backbone);
  get(j, "acoustic", c.acoustic);
  get(j, "target_cache_dir", c.target_cache_dir);
  get(j, "model", c.model);
  get(j, "train", c.train);
}

nlohmann::json read_config_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

}  // namespace voicectl
