#include <doctest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bijou/audio.hpp"
#include "bijou/checkpoint.hpp"
#include "bijou/cli.hpp"
#include "bijou/data_prep.hpp"
#include "bijou/tokenizer.hpp"
#include "support.hpp"

using namespace bijou;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

void write_corpus(const fs::path& path, std::size_t lines, std::uint64_t seed) {
  static const char* words[] = {"le",     "chat",  "dort",   "sur",    "la",     "table",  "une",  "maison",
                                "bleue",  "qu'il", "l'eau",  "coule",  "vite",   "demain", "nous", "partons",
                                "très",   "été",   "garçon", "voilà",  "rivière", "pont",  "soir", "matin"};
  Rng rng(seed);
  std::ofstream f(path);
  for (std::size_t i = 0; i < lines; ++i) {
    const std::size_t n = 3 + rng.below(9);
    for (std::size_t w = 0; w < n; ++w) f << (w ? " " : "") << words[rng.below(std::size(words))];
    f << ".\n";
  }
}

void write_config(const fs::path& path, const std::string& extra = "") {
  std::ofstream f(path);
  f << "preset = text-base-mlm\n"
       "encoder.layers = 2\nencoder.heads = 2\nencoder.d_model = 16\nencoder.d_ff = 32\n"
       "prenet.vocab_size = 300\nprenet.max_positions = 64\n"
       "mask.clones = 2\ndistill.top_k = 2\n"
       "decoder.layers = 1\ndecoder.dim = 16\ndecoder.groups = 1\ndecoder.kernel = 3\n"
       "optim.max_steps = 4\noptim.warmup_steps = 1\nlambda.steps = 4\nema.anneal_steps = 4\n"
       "batch.size = 2\ndata.max_length = 48\n"
       "data.samples = samples.txt\nout.dir = run\n"
    << extra;
}

}  // namespace

TEST_CASE("usage and help") {
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"frobnicate"}).code == cli::kUsage);
  CHECK(run({"--help"}).code == cli::kOk);
  for (const char* verb : {"tok-train", "prep-text", "prep-audio", "train", "export", "probe"}) {
    CAPTURE(verb);
    const auto r = run({verb, "--help"});
    CHECK(r.code == cli::kOk);
    CHECK(r.out.find(verb) != std::string::npos);
  }
  CHECK(run({"tok-train", "--corpus", "x"}).code == cli::kUsage);
  CHECK(run({"probe", "--bundle", "b", "--task", "nonsense"}).code == cli::kUsage);
  CHECK(run({"train"}).code == cli::kUsage);
  CHECK(run({"train", "--config", "/nonexistent/cfg"}).code == cli::kDataFault);
  CHECK(run({"export", "--ckpt", "/nonexistent/x.ckpt", "--out", "/tmp/none"}).code == cli::kDataFault);
}

TEST_CASE("text pipeline end to end") {
  testing::TempDir dir("cli-text");
  write_corpus(dir / "corpus.txt", 400, 1);

  auto r = run({"tok-train", "--corpus", (dir / "corpus.txt").string(), "--vocab", "300", "--out",
                (dir / "tok").string()});
  REQUIRE(r.code == cli::kOk);
  CHECK(r.out.rfind("vocab ", 0) == 0);
  const auto tok = tok::Tokenizer::load(dir / "tok");
  CHECK(tok.vocab_size() <= 300);

  r = run({"prep-text", "--text", (dir / "corpus.txt").string(), "--tokenizer", (dir / "tok").string(), "--out",
           (dir / "samples.txt").string(), "--max-len", "48"});
  REQUIRE(r.code == cli::kOk);
  const auto samples = read_samples(dir / "samples.txt");
  CHECK(!samples.empty());
  for (const auto& s : samples) CHECK(s.ids.size() <= 48);

  write_config(dir / "toy.cfg");
  r = run({"train", "--config", (dir / "toy.cfg").string(), "--deterministic", "--seed", "3"});
  REQUIRE(r.code == cli::kOk);
  CHECK(r.out.find("steps 4") != std::string::npos);
  const auto ckpt_bytes = testing::slurp(dir / "run" / "last.ckpt");
  const auto log_bytes = testing::slurp(dir / "run" / "metrics.jsonl");
  CHECK(std::count(log_bytes.begin(), log_bytes.end(), '\n') == 4);
  CHECK(Container::load(dir / "run" / "last.ckpt").value("config.seed") == "3");

  // Same flags, same bytes.
  r = run({"train", "--config", (dir / "toy.cfg").string(), "--deterministic", "--seed", "3"});
  REQUIRE(r.code == cli::kOk);
  CHECK(testing::slurp(dir / "run" / "last.ckpt") == ckpt_bytes);
  CHECK(testing::slurp(dir / "run" / "metrics.jsonl") == log_bytes);

  // Resuming a finished run adds nothing.
  r = run({"train", "--resume", (dir / "run" / "last.ckpt").string()});
  REQUIRE(r.code == cli::kOk);
  CHECK(testing::slurp(dir / "run" / "metrics.jsonl") == log_bytes);
  CHECK(testing::slurp(dir / "run" / "last.ckpt") == ckpt_bytes);

  r = run({"export", "--ckpt", (dir / "run" / "last.ckpt").string(), "--out", (dir / "enc.bundle").string()});
  REQUIRE(r.code == cli::kOk);
  const auto b1 = testing::slurp(dir / "enc.bundle");
  run({"export", "--ckpt", (dir / "run" / "last.ckpt").string(), "--out", (dir / "enc2.bundle").string()});
  CHECK(testing::slurp(dir / "enc2.bundle") == b1);

  r = run({"probe", "--bundle", (dir / "enc.bundle").string(), "--task", "bracket-depth", "--seeds", "2",
           "--epochs", "20"});
  REQUIRE(r.code == cli::kOk);
  const auto json = nlohmann::json::parse(testing::slurp(dir / "enc.bundle.bracket-depth.probe.json"));
  CHECK(json.at("runs").size() == 2);
  CHECK(json.at("mean_accuracy").get<double>() >= 0.0);
  CHECK(json.at("mean_accuracy").get<double>() <= 1.0);
  CHECK(r.out.find("random init") != std::string::npos);

  // Speech task against a text encoder.
  r = run({"probe", "--bundle", (dir / "enc.bundle").string(), "--task", "tone", "--seeds", "1"});
  CHECK(r.code == cli::kUsage);
}

TEST_CASE("train overrides and failures map to exit codes") {
  testing::TempDir dir("cli-train");
  write_samples(dir / "samples.txt", std::vector<TextSample>{{{5, 9, 12, 7, 8, 30}, {6}, false},
                                                              {{11, 3, 40, 41, 42}, {5}, false}});
  write_config(dir / "toy.cfg");
  CHECK(run({"train", "--config", (dir / "toy.cfg").string(), "--set", "bogus.key=1"}).code == cli::kUsage);
  CHECK(run({"train", "--config", (dir / "toy.cfg").string(), "--set", "novalue"}).code == cli::kUsage);

  auto r = run({"train", "--config", (dir / "toy.cfg").string(), "--set", "optim.max_steps=2", "--set",
                "out.dir=other"});
  REQUIRE(r.code == cli::kOk);
  CHECK(fs::exists(dir / "other" / "last.ckpt"));
  CHECK(Container::load(dir / "other" / "last.ckpt").value("state.step") == "2");

  // An absurd learning rate overflows the weights and the loss turns non-finite.
  r = run({"train", "--config", (dir / "toy.cfg").string(), "--set", "optim.lr_max=1e300", "--set",
           "optim.lr_min=1e300", "--set", "optim.clip_norm=none", "--set", "out.dir=boom"});
  CHECK(r.code == cli::kNumericFault);
  bool fault = false;
  for (const auto& e : fs::directory_iterator(dir / "boom")) fault |= e.path().filename().string().starts_with("fault-");
  CHECK(fault);
}

TEST_CASE("resume continues the metrics log") {
  testing::TempDir dir("cli-resume");
  write_samples(dir / "samples.txt", std::vector<TextSample>{{{5, 9, 12, 7, 8, 30}, {6}, false},
                                                              {{11, 3, 40, 41, 42}, {5}, false}});
  write_config(dir / "toy.cfg", "checkpoint.every = 2\n");
  const fs::path cfg = dir / "toy.cfg";
  REQUIRE(run({"train", "--config", cfg.string()}).code == cli::kOk);
  const auto full = testing::slurp(dir / "run" / "last.ckpt");
  const auto log = testing::slurp(dir / "run" / "metrics.jsonl");

  // Truncate the log to the first two records and continue from step 2.
  std::istringstream lines(log);
  std::string l1, l2;
  std::getline(lines, l1);
  std::getline(lines, l2);
  std::ofstream(dir / "run" / "metrics.jsonl") << l1 << '\n' << l2 << '\n';
  const auto r = run({"train", "--resume", (dir / "run" / "step-00000002.ckpt").string()});
  REQUIRE(r.code == cli::kOk);
  CHECK(testing::slurp(dir / "run" / "last.ckpt") == full);
  CHECK(testing::slurp(dir / "run" / "metrics.jsonl") == log);
}

TEST_CASE("audio preparation") {
  testing::TempDir dir("cli-audio");
  Rng rng(9);
  std::vector<double> a(16000 * 12), b(16000 * 12);
  for (auto& s : a) s = 0.2 * rng.normal();
  for (auto& s : b) s = 0.2 * rng.normal();
  write_wav(dir / "a.wav", a);
  write_wav(dir / "b.wav", b);
  write_wav(dir / "a_copy.wav", a);
  write_manifest(dir / "corpus.tsv", std::vector<ManifestEntry>{{"a.wav", 0, 0}, {"b.wav", 0, 0},
                                                                 {"a_copy.wav", 0, 0}, {"lost.wav", 0, 0}});
  write_manifest(dir / "held.tsv", std::vector<ManifestEntry>{{"b.wav", 0, 0}});
  const auto r = run({"prep-audio", "--corpus", (dir / "corpus.tsv").string(), "--exclude",
                      (dir / "held.tsv").string(), "--out", (dir / "chunks.tsv").string(), "--hours", "1",
                      "--chunk-seconds", "4", "--seed", "2"});
  REQUIRE(r.code == cli::kOk);
  CHECK(r.err.find("skipped") != std::string::npos);
  CHECK(r.out.find("1 unreadable") != std::string::npos);
  const auto chunks = read_manifest(dir / "chunks.tsv");
  CHECK(chunks.size() == 3);
  for (const auto& c : chunks) {
    CHECK(fs::path(c.path).filename() == "a.wav");
    CHECK(fs::path(c.path).is_absolute());
    CHECK(c.duration_seconds == 4.0);
  }
  CHECK(run({"prep-audio", "--corpus", (dir / "corpus.tsv").string(), "--out", "x"}).code == cli::kUsage);
}
