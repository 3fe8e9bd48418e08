#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bijou/checkpoint.hpp"
#include "bijou/config.hpp"
#include "bijou/distiller.hpp"
#include "bijou/optim.hpp"

namespace bijou {

struct Dataset {
  Modality modality = Modality::text;
  std::vector<Example> examples;
  std::size_t skipped = 0;  // unreadable or unusable inputs
};

/// Reads the data named by `cfg` (packed samples, or raw text plus a
/// tokenizer, or an audio manifest). Relative paths resolve against `base`.
Dataset load_dataset(const TrainConfig& cfg, const std::filesystem::path& base = {});

// One line of the metrics log.
struct StepRecord {
  std::size_t step = 0;  // 0-based index of the update this record describes
  double loss = 0.0;
  double l2 = 0.0;
  double mlm = 0.0;
  double lambda = 0.0;
  double lr = 0.0;
  double tau = 0.0;
  double target_std = 0.0;
  double raw_target_std = 0.0;
  double grad_norm = 0.0;
  double clip_scale = 1.0;
  std::size_t examples = 0;
  std::size_t teacher_forwards = 0;
  std::size_t epoch = 0;
};

std::string to_json_line(const StepRecord& r);

class Trainer {
 public:
  Trainer(TrainConfig cfg, Dataset data);
  // Continues from a checkpoint; the configuration comes from the checkpoint.
  Trainer(const Container& ckpt, Dataset data);

  /// batch → pretrain_step_loss → backward → clip → Adam → EMA.
  StepRecord step();
  bool finished() const { return step_ >= cfg_.optim.max_steps; }
  std::size_t steps_done() const { return step_; }

  Container checkpoint() const;

  const TrainConfig& config() const { return cfg_; }
  const ParameterSet& student() const { return student_; }
  const TeacherState& teacher() const { return teacher_; }
  const Adam& optimizer() const { return adam_; }
  std::size_t ema_updates() const { return ema_updates_; }
  const Dataset& data() const { return data_; }

 private:
  std::vector<std::size_t> next_batch();
  std::size_t next_index();
  void shuffle_epoch();

  TrainConfig cfg_;
  Dataset data_;
  ParameterSet student_;
  TeacherState teacher_;
  Adam adam_;
  Rng rng_;
  std::size_t step_ = 0;
  std::size_t ema_updates_ = 0;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

TrainConfig config_from_container(const Container& c);

struct RunOptions {
  std::filesystem::path out_dir;   // checkpoints; defaults to cfg.out_dir
  std::filesystem::path log_path;  // defaults to out_dir/metrics.jsonl or $BIJOU_LOG_DIR/metrics.jsonl
  bool append_log = false;
  std::optional<std::size_t> stop_at;  // stop early at this step count
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path log_path;
  std::vector<StepRecord> records;
};

/// Runs the trainer to max_steps (or `stop_at`), writing one metrics line
/// per step, checkpoints at the configured cadence and a final checkpoint.
/// A non-finite loss or gradient writes a fault checkpoint and rethrows.
TrainResult train(Trainer& trainer, const RunOptions& opt = {});

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t step);

/// Pre-net and student encoder only, as used by downstream probes.
class EncoderBundle {
 public:
  EncoderBundle(TrainConfig cfg, ParameterSet params);

  static EncoderBundle from_checkpoint(const Container& ckpt);
  static EncoderBundle load(const std::filesystem::path& path);
  // Freshly initialized weights, the baseline for probe comparisons.
  static EncoderBundle random(const TrainConfig& cfg, std::uint64_t seed);

  Container to_container() const;
  std::string serialize() const { return to_container().serialize(); }
  void save(const std::filesystem::path& path) const { to_container().save(path); }

  // Full-input forward pass without gradient tracking.
  EncoderOutput encode(const Example& ex) const;

  const TrainConfig& config() const { return cfg_; }
  const ModelConfig& model() const { return cfg_.model; }
  const ParameterSet& params() const { return params_; }
  std::size_t width() const { return cfg_.model.encoder.d_model; }
  std::size_t parameter_count() const { return params_.numel(); }

 private:
  TrainConfig cfg_;
  ParameterSet params_;
};

EncoderBundle export_encoder(const Container& ckpt);

}  // namespace bijou
