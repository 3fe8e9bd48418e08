#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bijou/encoder.hpp"
#include "bijou/masking.hpp"
#include "bijou/parameters.hpp"
#include "bijou/prenet.hpp"
#include "bijou/types.hpp"

namespace bijou {

struct EmaSchedule {
  double start = 0.999;
  double end = 0.99999;
  std::size_t anneal_steps = 75000;
};

// Linear ramp from start to end over anneal_steps, then held.
double ema_decay(std::size_t step, const EmaSchedule& sched);

struct LambdaSchedule {
  double start = 20.0;
  double end = 1.0;
  std::size_t steps = 250000;
};

double lambda_at(std::size_t step, const LambdaSchedule& sched);

struct DecoderConfig {
  std::size_t layers = 5;
  std::size_t dim = 768;
  std::size_t groups = 1;
  std::size_t kernel = 9;
};

struct DistillConfig {
  std::size_t top_k = 12;
  DecoderConfig decoder;
  EmaSchedule ema;
  LambdaSchedule lambda;
  // Hybrid objective; only meaningful for text.
  bool mlm = true;

  static DistillConfig speech_base() { return {8, {4, 384, 16, 7}, {0.999, 0.99999, 75000}, {}, false}; }
  static DistillConfig speech_large() { return {16, {4, 768, 16, 7}, {0.9997, 1.0, 300000}, {}, false}; }
  static DistillConfig text_base_mlm() { return {12, {5, 768, 1, 9}, {0.9995, 0.99995, 125000}, {20.0, 1.0, 250000}, true}; }
};

// Everything needed to build, run and score the model.
struct ModelConfig {
  PrenetConfig prenet;
  EncoderConfig encoder;
  MaskSpec mask;
  DistillConfig distill;

  Modality modality() const { return prenet.modality; }
  void validate() const;
};

/// EMA shadow of the student's pre-net and encoder.
class TeacherState {
 public:
  TeacherState() = default;
  TeacherState(const ParameterSet& student, const EmaSchedule& schedule);

  const ParameterSet& shadow() const { return shadow_; }
  ParameterSet& shadow() { return shadow_; }
  const EmaSchedule& schedule() const { return schedule_; }
  double decay() const { return decay_; }
  void set_decay(double tau) { decay_ = tau; }

  // Full-sequence teacher pass; counted.
  EncoderOutput forward(const ModelConfig& cfg, const Example& ex) const;
  std::size_t forward_count() const { return forwards_; }

 private:
  ParameterSet shadow_;
  EmaSchedule schedule_;
  double decay_ = 0.0;
  mutable std::size_t forwards_ = 0;
};

// shadow ← τ·shadow + (1−τ)·student with τ = ema_decay(step).
void ema_update(TeacherState& teacher, const ParameterSet& student, std::size_t step);
void ema_update_with(TeacherState& teacher, const ParameterSet& student, double tau);

struct TargetStats {
  double normalized_std = 0.0;  // std over time steps, averaged over features
  double raw_std = 0.0;         // same statistic before per-step normalization
};

/// Per-time-step normalized average of the last K entries of `layer_outputs`.
/// The result carries no graph.
Tensor build_targets(std::span<const Tensor> layer_outputs, std::size_t k, TargetStats* stats = nullptr);

// Standard deviation over rows, averaged over columns.
double time_std(const Tensor& x);

void init_decoder(ParameterSet& params, const ModelConfig& cfg, Rng& rng);
std::size_t decoder_parameter_count(const ModelConfig& cfg);

/// Convolutional decoder: scatter the student's visible outputs back to
/// their positions, fill masked ones with the learned mask embedding, run
/// residual grouped convolutions and project to the target width.
Tensor decode(const ParameterSet& params, const ModelConfig& cfg, const Tensor& student_visible,
              const VisibleSplit& split);

Tensor l2_masked_loss(const Tensor& prediction, const Tensor& target, const Mask& mask);

/// Masked-token cross-entropy through a projection tied to `embedding`
/// ([V × d]); `bias` ([V]) may be undefined.
Tensor mlm_loss(const Tensor& decoder_out, const Tensor& embedding, const Tensor& bias,
                std::span<const std::int32_t> tokens, const Mask& mask);

struct StepDiagnostics {
  double total = 0.0;
  double l2 = 0.0;
  double mlm = 0.0;  // 0 for speech
  double lambda = 0.0;
  std::size_t teacher_forwards = 0;
  std::size_t clones = 0;
  double target_std = 0.0;
  double raw_target_std = 0.0;
};

struct StepLoss {
  Tensor loss;
  StepDiagnostics diag;
};

struct StepOptions {
  // Evaluation order of the clones; identity when empty.
  std::vector<std::size_t> clone_order;
};

/// One teacher pass, M masked student passes, averaged L2 (+ λ·MLM for text).
StepLoss pretrain_step_loss(const Example& ex, const ParameterSet& student, const TeacherState& teacher,
                            const ModelConfig& cfg, std::size_t step, Rng& rng,
                            const StepOptions& opt = {});

void init_student(ParameterSet& params, const ModelConfig& cfg, Rng& rng);

}  // namespace bijou
