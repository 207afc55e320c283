#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>

#include "voicectl/core/errors.hpp"
#include "voicectl/core/fs.hpp"
#include "voicectl/eval/sweep.hpp"
#include "voicectl/pipeline/stages.hpp"
#include "voicectl/pipeline/toy_corpus.hpp"
#include "voicectl/pipeline/validate.hpp"
#include "voicectl/signal/wav.hpp"

using namespace voicectl;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string device = "cpu";
  std::string log_level = "info";
};

std::unique_ptr<SpeakerEmbedder> open_embedder(const std::string& spec) {
  if (spec.empty()) return nullptr;
  if (spec.starts_with("cached:")) return std::make_unique<CachedSpeakerEmbedder>(spec.substr(7));
  return MelStatsEmbedder::load(spec);
}

std::vector<SweepText> load_texts(const fs::path& file, const std::string& language, int max_texts) {
  const EvalTexts all = read_eval_texts(file);
  std::vector<SweepText> out;
  const auto& seqs = all.at(language);
  for (size_t i = 0; i < seqs.size(); ++i) {
    if (max_texts > 0 && static_cast<int>(i) >= max_texts) break;
    out.push_back({language + "_t" + std::to_string(i), {language, seqs[i]}});
  }
  if (out.empty()) throw InvalidInput("no evaluation texts for language " + language);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Description-controlled speech synthesis toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Global seed")->capture_default_str();
  app.add_option("--device", g.device, "Compute device (cpu only)")->capture_default_str();
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off")->capture_default_str();

  // generate-toy
  auto* gen = app.add_subcommand("generate-toy", "Write the synthetic bilingual toy corpus");
  std::string gen_spec, gen_out, gen_phrases;
  gen->add_option("--spec", gen_spec, "ToyCorpusSpec JSON (defaults when omitted)");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--phrases", gen_phrases, "Level phrase table JSON");

  // train
  auto* train = app.add_subcommand("train", "Train one stage");
  std::string stage, manifest, config, out;
  train->add_option("--stage", stage, "backbone | acoustic | desc")
      ->required()
      ->check(CLI::IsMember({"backbone", "acoustic", "desc"}));
  train->add_option("--manifest", manifest, "Manifest JSONL")->required();
  train->add_option("--config", config, "Stage config JSON")->required();
  train->add_option("--out", out, "Checkpoint directory")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Synthesize from a description or a reference");
  std::string mode, bundle_file, language = "A", text, description, reference, synth_out, strategy;
  double temperature = 1.0;
  synth->add_option("--mode", mode, "desc | zeroshot")->required()->check(CLI::IsMember({"desc", "zeroshot"}));
  synth->add_option("--bundle", bundle_file, "System bundle JSON")->required();
  synth->add_option("--language", language, "Text language")->capture_default_str();
  synth->add_option("--text", text, "Space-separated symbol names")->required();
  synth->add_option("--description", description, "Voice description (desc mode)");
  synth->add_option("--reference", reference, "Reference WAV (zeroshot mode)");
  synth->add_option("--strategy", strategy, "Override the bundle: mode | sample")
      ->check(CLI::IsMember({"mode", "sample"}));
  synth->add_option("--temperature", temperature, "Sampling temperature")->capture_default_str();
  synth->add_option("--out", synth_out, "Output WAV")->required();

  // validate
  auto* val = app.add_subcommand("validate", "Check a manifest; exit 1 on problems");
  std::string val_manifest;
  std::vector<std::string> val_langs;
  val->add_option("--manifest", val_manifest, "Manifest JSONL")->required();
  val->add_option("--languages", val_langs, "Allowed language tags")->delimiter(',');

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Five-level controllability sweep");
  std::string ev_bundle, ev_texts, ev_attr, ev_out, ev_lang = "A", ev_embedder, ev_wav_dir, ev_from_dir, ev_phrases;
  std::vector<std::string> ev_adjectives;
  int ev_max_texts = 0;
  ev->add_option("--bundle", ev_bundle, "System bundle JSON");
  ev->add_option("--texts", ev_texts, "Evaluation texts JSON");
  ev->add_option("--attribute", ev_attr, "pitch | speed")->required()->check(CLI::IsMember({"pitch", "speed"}));
  ev->add_option("--out", ev_out, "Report JSON")->required();
  ev->add_option("--language", ev_lang, "Text language")->capture_default_str();
  ev->add_option("--embedder", ev_embedder, "Speaker embedder directory, or cached:DIR");
  ev->add_option("--adjectives", ev_adjectives, "Speaker adjectives to sweep")->delimiter(',');
  ev->add_option("--max-texts", ev_max_texts, "Use only the first N texts (0 = all)");
  ev->add_option("--phrases", ev_phrases, "Level phrase table JSON");
  ev->add_option("--wav-dir", ev_wav_dir, "Also write the sweep WAVs and level map here");
  ev->add_option("--from-wav-dir", ev_from_dir, "Measure an existing WAV directory instead of synthesizing");

  // train-embedder
  auto* te = app.add_subcommand("train-embedder", "Train the built-in mel-statistics speaker embedder");
  std::string te_manifest, te_out;
  MelStatsEmbedderConfig te_cfg;
  te->add_option("--manifest", te_manifest, "Manifest JSONL")->required();
  te->add_option("--out", te_out, "Output directory")->required();
  te->add_option("--steps", te_cfg.steps, "Training steps")->capture_default_str();

  // table
  auto* tab = app.add_subcommand("table", "Render reports as a P-Corr/P-SIM/S-Corr/S-SIM table");
  std::vector<std::string> tab_rows;
  tab->add_option("--row", tab_rows, "NAME=PITCH_REPORT,SPEED_REPORT (either may be empty)")->required();

  // print-config
  auto* pc = app.add_subcommand("print-config", "Print a stage config with every default filled in");
  std::string pc_stage;
  pc->add_option("--stage", pc_stage, "backbone | acoustic | desc | toy")
      ->required()
      ->check(CLI::IsMember({"backbone", "acoustic", "desc", "toy"}));

  CLI11_PARSE(app, argc, argv);

  // stdout carries command output (validate issues, tables, ids).
  spdlog::set_default_logger(spdlog::stderr_color_mt("voicectl"));
  spdlog::set_level(spdlog::level::from_str(g.log_level));
  const ProgressFn log = [](const std::string& s) { spdlog::info("{}", s); };
  try {
    if (g.device != "cpu") throw ConfigError("only the cpu device is available in this build");

    if (*gen) {
      ToyCorpusSpec spec;
      if (!gen_spec.empty()) spec = parse_config<ToyCorpusSpec>(read_config_file(gen_spec));
      if (app.get_option("--seed")->count() > 0) spec.seed = g.seed;
      const LevelPhrases phrases = gen_phrases.empty() ? default_level_phrases() : load_level_phrases(gen_phrases);
      const Manifest m = generate_toy_corpus(spec, gen_out, phrases);
      spdlog::info("wrote {} rows to {}", m.rows.size(), m.path.string());
      return 0;
    }
    if (*train) {
      const auto res = train_stage(stage, manifest, read_config_file(config), out, g.seed, log);
      spdlog::info("{} checkpoint {} written to {}", stage, res.id, res.dir.string());
      std::cout << res.id << "\n";
      return 0;
    }
    if (*synth) {
      SystemBundle b = SystemBundle::load(bundle_file);
      if (strategy == "mode") b.strategy = SampleStrategy::mode();
      if (strategy == "sample") b.strategy = SampleStrategy::sample(temperature);
      VoiceSystem sys(b);
      const PhonemeSequence seq = sys.parse_text(language, text);
      SynthResult r;
      if (mode == "desc") {
        if (description.empty()) throw InvalidInput("desc mode needs --description");
        r = synth_description(sys, seq, description, g.seed);
      } else {
        if (reference.empty()) throw InvalidInput("zeroshot mode needs --reference");
        Waveform ref = read_wav_at(reference, sys.backbone().config().sample_rate);
        ref.origin = reference;
        r = synth_zero_shot(sys, seq, ref);
      }
      write_wav(synth_out, r.audio);
      spdlog::info("wrote {:.2f} s to {}", r.audio.duration_seconds(), synth_out);
      return 0;
    }
    if (*val) {
      const auto issues = validate_manifest(val_manifest, val_langs);
      for (const auto& i : issues) std::cout << format_issue(i) << "\n";
      spdlog::info("{} problem(s)", issues.size());
      return issues.empty() ? 0 : 1;
    }
    if (*ev) {
      const Attribute attr = parse_attribute(ev_attr);
      const auto embedder = open_embedder(ev_embedder);
      SweepOptions opts;
      opts.adjectives = ev_adjectives;
      if (!ev_phrases.empty()) opts.phrases = load_level_phrases(ev_phrases);
      SweepReport rep;
      if (!ev_from_dir.empty()) {
        rep = measure_sweep(read_sweep_dir(ev_from_dir), attr, opts.fixed_level, embedder.get());
      } else {
        if (ev_bundle.empty() || ev_texts.empty()) throw InvalidInput("evaluate needs --bundle and --texts");
        VoiceSystem sys(SystemBundle::load(ev_bundle));
        const auto samples = synthesize_sweep(sys, load_texts(ev_texts, ev_lang, ev_max_texts), attr, g.seed, opts);
        if (!ev_wav_dir.empty()) write_sweep_dir(ev_wav_dir, samples);
        rep = measure_sweep(samples, attr, opts.fixed_level, embedder.get());
      }
      write_file_atomic(ev_out, rep.to_json().dump(2) + "\n");
      const TableRow row{ev_lang, attr == Attribute::kPitch ? &rep : nullptr, attr == Attribute::kSpeed ? &rep : nullptr};
      std::cout << render_table({row});
      for (const auto& f : rep.failures) spdlog::warn("{}", f);
      return 0;
    }
    if (*te) {
      const Manifest m = read_manifest(te_manifest);
      std::vector<Waveform> audio;
      std::vector<std::string> ids;
      for (const auto& r : m.rows) {
        audio.push_back(read_wav(m.audio_file(r)));
        ids.push_back(r.speaker_id);
      }
      te_cfg.init_seed = SeedTree(g.seed).child("embedder").seed();
      EmbedderTrainReport rep;
      const auto e = train_mel_stats_embedder(audio, ids, te_cfg, &rep);
      e->save(te_out);
      spdlog::info("embedder loss {:.4f} -> {:.4f}, train accuracy {:.3f}", rep.initial_loss, rep.final_loss,
                   rep.train_accuracy);
      return 0;
    }
    if (*pc) {
      nlohmann::json j;
      if (pc_stage == "backbone") j = BackboneStageConfig{};
      if (pc_stage == "acoustic") j = AcousticStageConfig{};
      if (pc_stage == "desc") j = DescStageConfig{};
      if (pc_stage == "toy") j = ToyCorpusSpec{};
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    if (*tab) {
      std::vector<SweepReport> reports;
      reports.reserve(2 * tab_rows.size());
      std::vector<TableRow> rows;
      for (const auto& spec : tab_rows) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw InvalidInput("--row wants NAME=PITCH,SPEED");
        const std::string files = spec.substr(eq + 1);
        const auto comma = files.find(',');
        const std::string pitch = files.substr(0, comma), speed = comma == std::string::npos ? "" : files.substr(comma + 1);
        TableRow row{spec.substr(0, eq), nullptr, nullptr};
        if (!pitch.empty()) {
          reports.push_back(SweepReport::from_json(nlohmann::json::parse(read_file(pitch))));
          row.pitch = &reports.back();
        }
        if (!speed.empty()) {
          reports.push_back(SweepReport::from_json(nlohmann::json::parse(read_file(speed))));
          row.speed = &reports.back();
        }
        rows.push_back(row);
      }
      std::cout << render_table(rows);
      return 0;
    }
  } catch (const DependencyError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
