#include "bijou/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>

#include "bijou/audio.hpp"
#include "bijou/data_prep.hpp"
#include "bijou/errors.hpp"
#include "bijou/ops.hpp"

namespace bijou {

namespace fs = std::filesystem;

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

enum : std::uint64_t { kInitStream = 0, kStepStream = 1, kEpochStream = 2 };

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

std::size_t parse_size(const Container& c, const std::string& key) {
  const auto& v = c.value(key);
  try {
    return static_cast<std::size_t>(std::stoull(v));
  } catch (const std::exception&) {
    throw DataError("checkpoint value '" + key + "' is not an integer");
  }
}

void copy_into(ParameterSet& dst, const Container& c, const std::string& prefix) {
  for (auto& [name, t] : dst.entries()) {
    const auto& e = c.entry(prefix + name);
    if (e.shape != t.shape()) {
      throw DataError("checkpoint array " + prefix + name + " has shape " + shape_str(e.shape) + ", expected " +
                      shape_str(t.shape()));
    }
    const auto v = c.f64(prefix + name);
    std::copy(v.begin(), v.end(), t.mutable_data().begin());
  }
}

void put_config(Container& c, const TrainConfig& cfg) {
  for (const auto& key : TrainConfig::keys()) c.doc["config." + key] = cfg.get(key);
}

}  // namespace

Dataset load_dataset(const TrainConfig& cfg, const fs::path& base) {
  Dataset ds;
  ds.modality = cfg.modality();
  if (ds.modality == Modality::text) {
    std::vector<TextSample> samples;
    if (!cfg.data_samples.empty()) {
      samples = read_samples(resolve(base, cfg.data_samples));
    } else if (!cfg.data_text.empty() && !cfg.data_tokenizer.empty()) {
      const auto tok = tok::Tokenizer::load(resolve(base, cfg.data_tokenizer));
      const auto lines = read_lines(resolve(base, cfg.data_text));
      samples = pack_text(lines, tok, cfg.max_text_length);
    } else {
      throw DataError("text training needs data.samples, or data.text with data.tokenizer");
    }
    for (auto& s : samples) {
      if (s.ids.empty()) {
        ++ds.skipped;
        continue;
      }
      for (auto id : s.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.model.prenet.vocab_size) {
          throw DataError("token id " + std::to_string(id) + " outside prenet.vocab_size " +
                          std::to_string(cfg.model.prenet.vocab_size));
        }
      }
      if (s.ids.size() > cfg.model.prenet.max_positions) s.ids.resize(cfg.model.prenet.max_positions);
      Example ex;
      ex.modality = Modality::text;
      ex.tokens = std::move(s.ids);
      ds.examples.push_back(std::move(ex));
    }
  } else {
    if (cfg.data_manifest.empty()) throw DataError("speech training needs data.manifest");
    const auto manifest_path = resolve(base, cfg.data_manifest);
    const auto entries = read_manifest(manifest_path);
    for (const auto& e : entries) {
      try {
        auto chunk = read_wav(resolve(manifest_path.parent_path(), e.path), e.offset_seconds, e.duration_seconds);
        if (chunk.samples.size() < min_audio_samples()) {
          ++ds.skipped;
          continue;
        }
        Example ex;
        ex.modality = Modality::speech;
        ex.samples = std::move(chunk.samples);
        ds.examples.push_back(std::move(ex));
      } catch (const DataError&) {
        ++ds.skipped;
      } catch (const InputError&) {
        ++ds.skipped;
      }
    }
  }
  if (ds.examples.empty()) throw DataError("dataset is empty");
  return ds;
}

std::string to_json_line(const StepRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["loss"] = r.loss;
  j["l2"] = r.l2;
  j["mlm"] = r.mlm;
  j["lambda"] = r.lambda;
  j["lr"] = r.lr;
  j["tau"] = r.tau;
  j["target_std"] = r.target_std;
  j["raw_target_std"] = r.raw_target_std;
  j["grad_norm"] = r.grad_norm;
  j["clip_scale"] = r.clip_scale;
  j["examples"] = r.examples;
  j["teacher_forwards"] = r.teacher_forwards;
  j["epoch"] = r.epoch;
  return j.dump();
}

Trainer::Trainer(TrainConfig cfg, Dataset data) : cfg_(std::move(cfg)), data_(std::move(data)) {
  cfg_.validate();
  if (data_.examples.empty()) throw DataError("dataset is empty");
  if (data_.modality != cfg_.modality()) throw ConfigError("dataset modality does not match the configuration");
  Rng init_rng(derive_seed(cfg_.seed, kInitStream));
  init_student(student_, cfg_.model, init_rng);
  teacher_ = TeacherState(student_, cfg_.model.distill.ema);
  adam_ = Adam(student_, cfg_.optim);
  rng_ = Rng(derive_seed(cfg_.seed, kStepStream));
  shuffle_epoch();
}

Trainer::Trainer(const Container& ckpt, Dataset data) : Trainer(config_from_container(ckpt), std::move(data)) {
  check_stamp(ckpt, "checkpoint");
  copy_into(student_, ckpt, "student/");
  copy_into(teacher_.shadow(), ckpt, "teacher/");
  auto& m = adam_.first_moments();
  auto& v = adam_.second_moments();
  const auto& entries = student_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto mi = ckpt.f64("adam.m/" + entries[i].name);
    const auto vi = ckpt.f64("adam.v/" + entries[i].name);
    if (mi.size() != m[i].size() || vi.size() != v[i].size()) {
      throw DataError("optimizer state for " + entries[i].name + " has the wrong size");
    }
    m[i] = mi;
    v[i] = vi;
  }
  rng_.set_state(ckpt.bytes("state.rng"));
  step_ = parse_size(ckpt, "state.step");
  ema_updates_ = parse_size(ckpt, "state.ema_updates");
  epoch_ = parse_size(ckpt, "state.epoch");
  cursor_ = parse_size(ckpt, "state.cursor");
  teacher_.set_decay(std::stod(ckpt.value("state.tau")));
  shuffle_epoch();
  if (cursor_ > order_.size()) throw DataError("checkpoint data cursor is past the end of the dataset");
}

void Trainer::shuffle_epoch() {
  order_.resize(data_.examples.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  Rng r(derive_seed(cfg_.seed, kEpochStream + epoch_));
  r.shuffle(order_);
}

std::size_t Trainer::next_index() {
  if (cursor_ == order_.size()) {
    ++epoch_;
    cursor_ = 0;
    shuffle_epoch();
  }
  return order_[cursor_++];
}

std::vector<std::size_t> Trainer::next_batch() {
  std::vector<std::size_t> batch;
  if (cfg_.modality() == Modality::text) {
    for (std::size_t i = 0; i < cfg_.batch_size; ++i) batch.push_back(next_index());
  } else {
    double seconds = 0.0;
    while (batch.empty() || seconds < cfg_.batch_seconds) {
      const auto idx = next_index();
      batch.push_back(idx);
      seconds += static_cast<double>(data_.examples[idx].samples.size()) / kSampleRate;
    }
  }
  return batch;
}

StepRecord Trainer::step() {
  if (finished()) throw ContractError("training already reached optim.max_steps");
  StepRecord rec;
  rec.step = step_;
  rec.lr = lr_at(step_, cfg_.optim);
  rec.tau = ema_decay(step_, cfg_.model.distill.ema);
  rec.lambda = cfg_.modality() == Modality::text && cfg_.model.distill.mlm ? lambda_at(step_, cfg_.model.distill.lambda)
                                                                          : 0.0;
  const auto batch = next_batch();
  rec.examples = batch.size();
  rec.epoch = epoch_;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  student_.zero_grad();
  for (const auto idx : batch) {
    auto sl = pretrain_step_loss(data_.examples[idx], student_, teacher_, cfg_.model, step_, rng_);
    if (!std::isfinite(sl.diag.total)) {
      throw NumericError("non-finite loss at step " + std::to_string(step_));
    }
    ops::scale(sl.loss, inv_b).backward();
    rec.loss += sl.diag.total * inv_b;
    rec.l2 += sl.diag.l2 * inv_b;
    rec.mlm += sl.diag.mlm * inv_b;
    rec.target_std += sl.diag.target_std * inv_b;
    rec.raw_target_std += sl.diag.raw_target_std * inv_b;
    rec.teacher_forwards += sl.diag.teacher_forwards;
  }
  rec.clip_scale = clip_gradients(student_, cfg_.optim.clip_norm, &rec.grad_norm);
  adam_.step(student_, step_ + 1, rec.lr);
  ema_update(teacher_, student_, step_);
  ++ema_updates_;
  ++step_;
  student_.zero_grad();
  return rec;
}

Container Trainer::checkpoint() const {
  Container c;
  stamp(c, "checkpoint");
  put_config(c, cfg_);
  c.doc["state.step"] = std::to_string(step_);
  c.doc["state.ema_updates"] = std::to_string(ema_updates_);
  c.doc["state.epoch"] = std::to_string(epoch_);
  c.doc["state.cursor"] = std::to_string(cursor_);
  char tau[64];
  std::snprintf(tau, sizeof tau, "%.17g", teacher_.decay());
  c.doc["state.tau"] = tau;
  for (const auto& [name, t] : student_.entries()) c.add("student/" + name, t);
  for (const auto& [name, t] : teacher_.shadow().entries()) c.add("teacher/" + name, t);
  const auto& entries = student_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    c.add("adam.m/" + entries[i].name, entries[i].tensor.shape(), adam_.first_moments()[i]);
    c.add("adam.v/" + entries[i].name, entries[i].tensor.shape(), adam_.second_moments()[i]);
  }
  c.add_bytes("state.rng", rng_.state());
  return c;
}

TrainConfig config_from_container(const Container& c) {
  std::string text;
  for (const auto& [k, v] : c.doc) {
    if (k.rfind("config.", 0) == 0) text += k.substr(7) + " = " + v + "\n";
  }
  if (text.empty()) throw DataError("checkpoint carries no configuration");
  return TrainConfig::parse(text);
}

fs::path checkpoint_path(const fs::path& dir, std::size_t step) {
  char name[64];
  std::snprintf(name, sizeof name, "step-%08zu.ckpt", step);
  return dir / name;
}

TrainResult train(Trainer& trainer, const RunOptions& opt) {
  const auto& cfg = trainer.config();
  const fs::path out_dir = opt.out_dir.empty() ? fs::path(cfg.out_dir) : opt.out_dir;
  fs::create_directories(out_dir);
  TrainResult result;
  if (!opt.log_path.empty()) {
    result.log_path = opt.log_path;
  } else if (const char* env = std::getenv("BIJOU_LOG_DIR"); env && *env) {
    result.log_path = fs::path(env) / "metrics.jsonl";
  } else {
    result.log_path = out_dir / "metrics.jsonl";
  }
  if (result.log_path.has_parent_path()) fs::create_directories(result.log_path.parent_path());
  std::ofstream log(result.log_path, opt.append_log ? std::ios::app : std::ios::trunc);
  if (!log) throw DataError("cannot open metrics log " + result.log_path.string());

  const std::size_t stop = std::min(opt.stop_at.value_or(cfg.optim.max_steps), cfg.optim.max_steps);
  while (trainer.steps_done() < stop) {
    StepRecord rec;
    try {
      rec = trainer.step();
    } catch (const NumericError&) {
      char name[64];
      std::snprintf(name, sizeof name, "fault-step-%08zu.ckpt", trainer.steps_done());
      trainer.checkpoint().save(out_dir / name);
      throw;
    }
    log << to_json_line(rec) << '\n';
    log.flush();
    result.records.push_back(rec);
    if (cfg.checkpoint_every && trainer.steps_done() % cfg.checkpoint_every == 0 && trainer.steps_done() < stop) {
      trainer.checkpoint().save(checkpoint_path(out_dir, trainer.steps_done()));
    }
  }
  const auto ckpt = trainer.checkpoint();
  result.final_checkpoint = checkpoint_path(out_dir, trainer.steps_done());
  ckpt.save(result.final_checkpoint);
  ckpt.save(out_dir / "last.ckpt");
  return result;
}

EncoderBundle::EncoderBundle(TrainConfig cfg, ParameterSet params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  for (auto& [name, t] : params_.entries()) t.set_requires_grad(false);
}

EncoderBundle EncoderBundle::from_checkpoint(const Container& ckpt) {
  check_stamp(ckpt, "checkpoint");
  auto cfg = config_from_container(ckpt);
  ParameterSet full;
  Rng rng(0);
  init_prenet(full, cfg.model.prenet, rng);
  init_encoder(full, cfg.model.encoder, rng);
  copy_into(full, ckpt, "student/");
  return EncoderBundle(std::move(cfg), full.clone({"prenet.", "encoder."}, false));
}

EncoderBundle EncoderBundle::load(const fs::path& path) {
  const auto c = Container::load(path);
  check_stamp(c, "encoder-bundle");
  auto cfg = config_from_container(c);
  ParameterSet params;
  Rng rng(0);
  init_prenet(params, cfg.model.prenet, rng);
  init_encoder(params, cfg.model.encoder, rng);
  copy_into(params, c, "");
  return EncoderBundle(std::move(cfg), std::move(params));
}

EncoderBundle EncoderBundle::random(const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParameterSet params;
  Rng rng(seed);
  init_prenet(params, cfg.model.prenet, rng);
  init_encoder(params, cfg.model.encoder, rng);
  return EncoderBundle(cfg, std::move(params));
}

Container EncoderBundle::to_container() const {
  Container c;
  stamp(c, "encoder-bundle");
  put_config(c, cfg_);
  for (const auto& [name, t] : params_.entries()) c.add(name, t);
  return c;
}

EncoderOutput EncoderBundle::encode(const Example& ex) const {
  NoGradGuard no_grad;
  const auto features = featurize(params_, cfg_.model.prenet, ex);
  return bijou::encode(params_, cfg_.model.encoder, features.frames, {.mode = EncodeMode::teacher});
}

EncoderBundle export_encoder(const Container& ckpt) { return EncoderBundle::from_checkpoint(ckpt); }

}  // namespace bijou
