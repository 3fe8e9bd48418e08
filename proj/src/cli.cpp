#include "bijou/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <ostream>

#include "bijou/audio.hpp"
#include "bijou/data_prep.hpp"
#include "bijou/errors.hpp"
#include "bijou/probe.hpp"
#include "bijou/synthetic.hpp"
#include "bijou/tokenizer.hpp"
#include "bijou/trainer.hpp"

namespace bijou::cli {

namespace fs = std::filesystem;

namespace {

struct TokTrainArgs {
  std::string corpus, out;
  std::size_t vocab = tok::kDefaultVocabSize;
};

struct PrepTextArgs {
  std::string text, tokenizer, out;
  std::size_t max_len = kMaxTextLength;
};

struct PrepAudioArgs {
  std::string corpus, exclude, out;
  double hours = 0.0;
  double chunk_seconds = 30.0;
  unsigned hamming = kDefaultHammingMax;
  std::size_t min_run = kMinDuplicateRun;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string config, resume;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool deterministic = false;
};

struct ExportArgs {
  std::string ckpt, out;
};

struct ProbeArgs {
  std::string bundle, task, out;
  std::size_t seeds = 5;
  std::size_t epochs = 200;
  double lr = 1e-2;
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

int run_tok_train(const TokTrainArgs& a, std::ostream& out) {
  const auto lines = read_lines(a.corpus);
  tok::TrainReport report;
  const auto t = tok::Tokenizer::train(lines, a.vocab, &report);
  t.save(a.out);
  out << "vocab " << t.vocab_size() << " (" << report.base_symbols << " base symbols, " << report.merges
      << " merges)" << (report.undersized ? ", corpus exhausted before target size" : "") << "\n";
  return kOk;
}

int run_prep_text(const PrepTextArgs& a, std::ostream& out) {
  const auto t = tok::Tokenizer::load(a.tokenizer);
  const auto lines = read_lines(a.text);
  const auto samples = pack_text(lines, t, a.max_len);
  write_samples(a.out, samples);
  std::size_t truncated = 0, tokens = 0;
  for (const auto& s : samples) {
    truncated += s.truncated;
    tokens += s.ids.size();
  }
  out << samples.size() << " samples, " << tokens << " tokens, " << truncated << " truncated\n";
  return kOk;
}

std::vector<ManifestEntry> absolute_entries(const fs::path& manifest) {
  auto entries = read_manifest(manifest);
  for (auto& e : entries) {
    fs::path p(e.path);
    if (p.is_relative()) e.path = fs::absolute(manifest.parent_path() / p).lexically_normal().string();
  }
  return entries;
}

int run_prep_audio(const PrepAudioArgs& a, std::ostream& out, std::ostream& err) {
  const auto corpus = absolute_entries(a.corpus);
  std::vector<ManifestEntry> exclusions;
  if (!a.exclude.empty()) exclusions = absolute_entries(a.exclude);
  DedupOptions opt;
  opt.target_hours = a.hours;
  opt.chunk_seconds = a.chunk_seconds;
  opt.hamming_max = a.hamming;
  opt.min_run = a.min_run;
  Rng rng(a.seed);
  const auto result = dedup_and_sample(corpus, exclusions, opt, rng);
  write_manifest(a.out, result.chunks);
  for (const auto& f : result.faults) err << "skipped: " << f << "\n";
  double excluded = 0.0;
  for (const auto& s : result.sources) {
    for (const auto& r : s.excluded) excluded += static_cast<double>(r.end - r.begin) / kSampleRate;
  }
  out << result.chunks.size() << " chunks, " << fmt(result.hours, 4) << " h, " << fmt(excluded, 2)
      << " s excluded as duplicate, " << result.faults.size() << " unreadable"
      << (result.pool_exhausted ? ", pool exhausted" : "") << "\n";
  return kOk;
}

int run_train(const TrainArgs& a, bool seed_given, std::ostream& out) {
  std::optional<TrainConfig> cfg;
  if (!a.config.empty()) cfg = TrainConfig::load(a.config);
  std::optional<Container> ckpt;
  if (!a.resume.empty()) {
    ckpt = Container::load(a.resume);
    check_stamp(*ckpt, "checkpoint");
    cfg = config_from_container(*ckpt);
  }
  if (!cfg) throw ConfigError("train needs --config or --resume");
  if (!ckpt) {
    for (const auto& kv : a.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      cfg->set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed_given) cfg->seed = a.seed;
    // Paths in a config file are relative to that file; checkpoints keep them absolute.
    const fs::path base = fs::absolute(fs::path(a.config)).parent_path();
    for (auto* p : {&cfg->data_text, &cfg->data_tokenizer, &cfg->data_samples, &cfg->data_manifest, &cfg->out_dir}) {
      if (!p->empty() && fs::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
    }
  }
  cfg->validate();
  auto data = load_dataset(*cfg);
  if (data.skipped) out << "skipped " << data.skipped << " unusable inputs\n";

  RunOptions opt;
  opt.out_dir = cfg->out_dir;
  opt.append_log = ckpt.has_value();
  std::optional<Trainer> trainer;
  if (ckpt) {
    trainer.emplace(*ckpt, std::move(data));
  } else {
    trainer.emplace(*cfg, std::move(data));
  }
  const auto result = train(*trainer, opt);
  out << "steps " << trainer->steps_done();
  if (!result.records.empty()) out << ", final loss " << fmt(result.records.back().loss, 6);
  out << "\ncheckpoint " << result.final_checkpoint.string() << "\nmetrics " << result.log_path.string() << "\n";
  return kOk;
}

int run_export(const ExportArgs& a, std::ostream& out) {
  const auto bundle = export_encoder(Container::load(a.ckpt));
  bundle.save(a.out);
  out << "encoder bundle " << a.out << ": " << bundle.parameter_count() << " parameters\n";
  return kOk;
}

int run_probe(const ProbeArgs& a, std::ostream& out) {
  const auto bundle = EncoderBundle::load(a.bundle);
  ProbeOptions opt;
  opt.epochs = a.epochs;
  opt.lr = a.lr;
  nlohmann::ordered_json results;
  results["task"] = a.task;
  results["bundle"] = a.bundle;
  results["epochs"] = a.epochs;
  results["runs"] = nlohmann::ordered_json::array();
  double mean = 0.0, mean_random = 0.0;
  out << "seed  train_acc  eval_acc  random_init_eval_acc\n";
  for (std::size_t s = 0; s < a.seeds; ++s) {
    Rng task_rng(1000 + s);
    const auto task = synth::make_task(a.task, task_rng);
    if ((task.train_inputs.front().modality) != bundle.model().modality()) {
      throw ConfigError("task '" + a.task + "' needs a " + std::string(to_string(task.train_inputs.front().modality)) +
                        " encoder");
    }
    Rng head_rng(s);
    const auto r = fit_probe(bundle, task, opt, head_rng);
    Rng base_rng(s);
    const auto baseline = fit_probe(EncoderBundle::random(bundle.config(), 7000 + s), task, opt, base_rng);
    out << s << "     " << fmt(r.train_accuracy) << "     " << fmt(r.accuracy) << "    " << fmt(baseline.accuracy)
        << "\n";
    results["runs"].push_back({{"seed", s},
                               {"train_accuracy", r.train_accuracy},
                               {"accuracy", r.accuracy},
                               {"random_init_accuracy", baseline.accuracy}});
    mean += r.accuracy / static_cast<double>(a.seeds);
    mean_random += baseline.accuracy / static_cast<double>(a.seeds);
  }
  out << "mean  " << fmt(mean) << "  (random init " << fmt(mean_random) << ")\n";
  results["mean_accuracy"] = mean;
  results["mean_random_init_accuracy"] = mean_random;
  const std::string path = a.out.empty() ? a.bundle + "." + a.task + ".probe.json" : a.out;
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  f << results.dump(2) << "\n";
  out << "results " << path << "\n";
  return kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"bijou: teacher-student masked prediction pretraining for text and speech", "bijou"};
  app.require_subcommand(1, 1);

  TokTrainArgs tok_args;
  auto* tok_cmd = app.add_subcommand("tok-train", "Train a BPE tokenizer on UTF-8 text (one sentence per line)");
  tok_cmd->add_option("--corpus", tok_args.corpus, "Training text")->required();
  tok_cmd->add_option("--vocab", tok_args.vocab, "Target vocabulary size including specials")
      ->capture_default_str();
  tok_cmd->add_option("--out", tok_args.out, "Output directory for vocab.txt and merges.txt")->required();

  PrepTextArgs text_args;
  auto* text_cmd = app.add_subcommand("prep-text", "Tokenize and pack sentences into training samples");
  text_cmd->add_option("--text", text_args.text, "UTF-8 text, one sentence per line")->required();
  text_cmd->add_option("--tokenizer", text_args.tokenizer, "Tokenizer directory")->required();
  text_cmd->add_option("--out", text_args.out, "Output samples file")->required();
  text_cmd->add_option("--max-len", text_args.max_len, "Tokens per sample")->capture_default_str();

  PrepAudioArgs audio_args;
  auto* audio_cmd = app.add_subcommand("prep-audio", "Remove duplicated audio and sample fixed-length chunks");
  audio_cmd->add_option("--corpus", audio_args.corpus, "Input manifest")->required();
  audio_cmd->add_option("--exclude", audio_args.exclude, "Manifest of audio that must not leak into the output");
  audio_cmd->add_option("--out", audio_args.out, "Output chunk manifest")->required();
  audio_cmd->add_option("--hours", audio_args.hours, "Target hours of audio")->required();
  audio_cmd->add_option("--chunk-seconds", audio_args.chunk_seconds, "Chunk length")->capture_default_str();
  audio_cmd->add_option("--hamming", audio_args.hamming, "Max differing bits for similar fingerprints")
      ->capture_default_str();
  audio_cmd->add_option("--min-run", audio_args.min_run, "Consecutive similar fingerprints to call a duplicate")
      ->capture_default_str();
  audio_cmd->add_option("--seed", audio_args.seed, "Sampling seed")->capture_default_str();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Pretrain a model from a key = value config file");
  train_cmd->add_option("--config", train_args.config, "Config file");
  train_cmd->add_option("--resume", train_args.resume, "Continue from a checkpoint (its config wins)");
  auto* seed_opt = train_cmd->add_option("--seed", train_args.seed, "Override the config seed");
  train_cmd->add_option("--set", train_args.overrides, "Override a config key (key=value), repeatable");
  train_cmd->add_flag("--deterministic", train_args.deterministic,
                      "Synchronous single-worker data loading (always the case in this build)");

  ExportArgs export_args;
  auto* export_cmd = app.add_subcommand("export", "Write the pre-net and student encoder as a standalone bundle");
  export_cmd->add_option("--ckpt", export_args.ckpt, "Training checkpoint")->required();
  export_cmd->add_option("--out", export_args.out, "Bundle path")->required();

  ProbeArgs probe_args;
  auto* probe_cmd = app.add_subcommand("probe", "Fit linear probes on a frozen encoder bundle");
  probe_cmd->add_option("--bundle", probe_args.bundle, "Encoder bundle")->required();
  probe_cmd->add_option("--task", probe_args.task, "Synthetic task")
      ->required()
      ->check(CLI::IsMember(synth::task_names()));
  probe_cmd->add_option("--seeds", probe_args.seeds, "Number of seeds")->capture_default_str();
  probe_cmd->add_option("--epochs", probe_args.epochs, "Full-batch Adam steps")->capture_default_str();
  probe_cmd->add_option("--lr", probe_args.lr, "Probe learning rate")->capture_default_str();
  probe_cmd->add_option("--out", probe_args.out, "Results JSON (default: <bundle>.<task>.probe.json)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kUsage;
  }

  try {
    if (tok_cmd->parsed()) return run_tok_train(tok_args, out);
    if (text_cmd->parsed()) return run_prep_text(text_args, out);
    if (audio_cmd->parsed()) return run_prep_audio(audio_args, out, err);
    if (train_cmd->parsed()) return run_train(train_args, seed_opt->count() > 0, out);
    if (export_cmd->parsed()) return run_export(export_args, out);
    if (probe_cmd->parsed()) return run_probe(probe_args, out);
  } catch (const NumericError& e) {
    err << "numeric fault: " << e.what() << "\n";
    return kNumericFault;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataFault;
  }
  err << app.help();
  return kUsage;
}

}  // namespace bijou::cli
