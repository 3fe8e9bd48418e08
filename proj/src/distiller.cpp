#include "bijou/distiller.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bijou/errors.hpp"
#include "bijou/ops.hpp"

namespace bijou {

namespace {

double linear_ramp(std::size_t step, double start, double end, std::size_t steps) {
  if (steps == 0 || step >= steps) return end;
  return start + (end - start) * (static_cast<double>(step) / static_cast<double>(steps));
}

}  // namespace

double ema_decay(std::size_t step, const EmaSchedule& s) {
  return linear_ramp(step, s.start, s.end, s.anneal_steps);
}

double lambda_at(std::size_t step, const LambdaSchedule& s) {
  return linear_ramp(step, s.start, s.end, s.steps);
}

void ModelConfig::validate() const {
  prenet.validate();
  encoder.validate();
  mask.validate();
  if (prenet.d_model != encoder.d_model) {
    throw ConfigError("pre-net width " + std::to_string(prenet.d_model) + " differs from encoder width " +
                      std::to_string(encoder.d_model));
  }
  if (distill.top_k == 0) throw ConfigError("top-K target layers must be at least 1");
  if (distill.top_k > encoder.layers) {
    throw ConfigError("top-K " + std::to_string(distill.top_k) + " exceeds " +
                      std::to_string(encoder.layers) + " encoder layers");
  }
  const auto& dec = distill.decoder;
  if (dec.layers == 0 || dec.dim == 0) throw ConfigError("decoder needs at least one layer of positive width");
  if (dec.kernel % 2 == 0) throw ConfigError("decoder kernel must be odd");
  if (dec.groups == 0 || dec.dim % dec.groups != 0 || encoder.d_model % dec.groups != 0) {
    throw ConfigError("decoder groups " + std::to_string(dec.groups) + " must divide widths " +
                      std::to_string(encoder.d_model) + " and " + std::to_string(dec.dim));
  }
  if (modality() == Modality::speech && distill.mlm) {
    throw ConfigError("the MLM objective is defined for text only");
  }
}

TeacherState::TeacherState(const ParameterSet& student, const EmaSchedule& schedule)
    : shadow_(student.clone({"prenet.", "encoder."}, /*trainable=*/false)),
      schedule_(schedule),
      decay_(ema_decay(0, schedule)) {}

EncoderOutput TeacherState::forward(const ModelConfig& cfg, const Example& ex) const {
  NoGradGuard no_grad;
  ++forwards_;
  const auto features = featurize(shadow_, cfg.prenet, ex);
  return encode(shadow_, cfg.encoder, features.frames,
                {.mode = EncodeMode::teacher, .keep_layer_outputs = true});
}

void ema_update_with(TeacherState& teacher, const ParameterSet& student, double tau) {
  for (auto& [name, shadow] : teacher.shadow().entries()) {
    const Tensor& live = student.get(name);
    if (live.shape() != shadow.shape()) {
      throw ContractError("ema_update: shape drift for " + name + ": " + shape_str(live.shape()) +
                          " vs " + shape_str(shadow.shape()));
    }
    auto dst = shadow.mutable_data();
    const auto src = live.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = tau * dst[i] + (1.0 - tau) * src[i];
  }
  teacher.set_decay(tau);
}

void ema_update(TeacherState& teacher, const ParameterSet& student, std::size_t step) {
  ema_update_with(teacher, student, ema_decay(step, teacher.schedule()));
}

double time_std(const Tensor& x) {
  const std::size_t T = x.dim(0), d = x.dim(1);
  const auto X = x.data();
  double acc = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mu = 0.0;
    for (std::size_t t = 0; t < T; ++t) mu += X[t * d + j];
    mu /= static_cast<double>(T);
    double var = 0.0;
    for (std::size_t t = 0; t < T; ++t) var += (X[t * d + j] - mu) * (X[t * d + j] - mu);
    acc += std::sqrt(var / static_cast<double>(T));
  }
  return acc / static_cast<double>(d);
}

Tensor build_targets(std::span<const Tensor> layer_outputs, std::size_t k, TargetStats* stats) {
  if (k == 0) throw ConfigError("build_targets: K must be at least 1");
  if (k > layer_outputs.size()) {
    throw ConfigError("build_targets: K=" + std::to_string(k) + " exceeds " +
                      std::to_string(layer_outputs.size()) + " layer outputs");
  }
  NoGradGuard no_grad;
  const auto top = layer_outputs.subspan(layer_outputs.size() - k);
  const Shape shape = top.front().shape();
  std::vector<double> avg(shape_numel(shape), 0.0), raw(avg.size(), 0.0);
  for (const auto& layer : top) {
    if (layer.shape() != shape) throw DimensionError("build_targets: layer outputs differ in shape");
    const auto normed = ops::layer_norm(layer, Tensor{}, Tensor{});
    for (std::size_t i = 0; i < avg.size(); ++i) {
      avg[i] += normed.data()[i];
      raw[i] += layer.data()[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(k);
  for (std::size_t i = 0; i < avg.size(); ++i) {
    avg[i] *= inv;
    raw[i] *= inv;
  }
  Tensor target = Tensor::from(shape, std::move(avg));
  if (stats) {
    stats->normalized_std = time_std(target);
    stats->raw_std = time_std(Tensor::from(shape, std::move(raw)));
  }
  return target;
}

namespace {
std::string block_prefix(std::size_t i) { return "decoder.blocks." + std::to_string(i) + "."; }
}  // namespace

void init_decoder(ParameterSet& params, const ModelConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.encoder.d_model;
  const auto& dec = cfg.distill.decoder;
  params.add("decoder.mask_embedding", init::normal({1, d}, 0.02, rng));
  std::size_t in = d;
  for (std::size_t i = 0; i < dec.layers; ++i) {
    const auto p = block_prefix(i);
    const std::size_t cpg = in / dec.groups;
    const double std = std::sqrt(1.0 / static_cast<double>(cpg * dec.kernel));
    params.add(p + "conv.weight", init::normal({dec.dim, cpg, dec.kernel}, std, rng));
    params.add(p + "conv.bias", init::zeros({dec.dim}));
    params.add(p + "norm.gain", init::ones({dec.dim}));
    params.add(p + "norm.bias", init::zeros({dec.dim}));
    in = dec.dim;
  }
  params.add("decoder.proj.weight", init::normal({dec.dim, d}, 1.0 / std::sqrt(static_cast<double>(dec.dim)), rng));
  params.add("decoder.proj.bias", init::zeros({d}));
  if (cfg.modality() == Modality::text && cfg.distill.mlm) {
    params.add("decoder.mlm_bias", init::zeros({cfg.prenet.vocab_size}));
  }
}

std::size_t decoder_parameter_count(const ModelConfig& cfg) {
  const std::size_t d = cfg.encoder.d_model;
  const auto& dec = cfg.distill.decoder;
  std::size_t n = d, in = d;
  for (std::size_t i = 0; i < dec.layers; ++i) {
    n += dec.dim * (in / dec.groups) * dec.kernel + 3 * dec.dim;
    in = dec.dim;
  }
  n += dec.dim * d + d;
  if (cfg.modality() == Modality::text && cfg.distill.mlm) n += cfg.prenet.vocab_size;
  return n;
}

Tensor decode(const ParameterSet& params, const ModelConfig& cfg, const Tensor& student_visible,
              const VisibleSplit& split) {
  const auto& dec = cfg.distill.decoder;
  Tensor h = restore_positions(student_visible, params.get("decoder.mask_embedding"), split);
  for (std::size_t i = 0; i < dec.layers; ++i) {
    const auto p = block_prefix(i);
    auto y = ops::conv1d(ops::transpose(h), params.get(p + "conv.weight"), params.get(p + "conv.bias"),
                         {.stride = 1, .padding = dec.kernel / 2, .groups = dec.groups});
    y = ops::gelu(ops::layer_norm(ops::transpose(y), params.get(p + "norm.gain"), params.get(p + "norm.bias")));
    h = h.dim(1) == y.dim(1) ? ops::add(h, y) : y;
  }
  return ops::linear(h, params.get("decoder.proj.weight"), params.get("decoder.proj.bias"));
}

Tensor l2_masked_loss(const Tensor& prediction, const Tensor& target, const Mask& mask) {
  if (prediction.shape() != target.shape()) {
    throw DimensionError("l2_masked_loss: prediction " + shape_str(prediction.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  if (mask.size() != prediction.dim(0)) throw DimensionError("l2_masked_loss: mask length mismatch");
  const auto idx = masked_positions(mask);
  if (idx.empty()) throw ContractError("l2_masked_loss: no masked positions");
  Tensor tgt;
  {
    NoGradGuard no_grad;
    tgt = ops::index_rows(target.detach(), idx);
  }
  auto diff = ops::sub(ops::index_rows(prediction, idx), tgt);
  return ops::mean(ops::mul(diff, diff));
}

Tensor mlm_loss(const Tensor& decoder_out, const Tensor& embedding, const Tensor& bias,
                std::span<const std::int32_t> tokens, const Mask& mask) {
  if (tokens.size() != decoder_out.dim(0) || mask.size() != tokens.size()) {
    throw DimensionError("mlm_loss: token/mask/output lengths disagree");
  }
  const auto idx = masked_positions(mask);
  if (idx.empty()) throw ContractError("mlm_loss: no masked positions");
  std::vector<std::size_t> labels;
  labels.reserve(idx.size());
  for (auto i : idx) labels.push_back(static_cast<std::size_t>(tokens[i]));
  auto logits = ops::matmul_bt(ops::index_rows(decoder_out, idx), embedding);
  if (bias.defined()) logits = ops::add_bias(logits, bias);
  return ops::cross_entropy(logits, labels);
}

void init_student(ParameterSet& params, const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  init_prenet(params, cfg.prenet, rng);
  init_encoder(params, cfg.encoder, rng);
  init_decoder(params, cfg, rng);
}

StepLoss pretrain_step_loss(const Example& ex, const ParameterSet& student, const TeacherState& teacher,
                            const ModelConfig& cfg, std::size_t step, Rng& rng, const StepOptions& opt) {
  const bool hybrid = cfg.modality() == Modality::text && cfg.distill.mlm;
  StepLoss result;
  auto& diag = result.diag;
  diag.lambda = hybrid ? lambda_at(step, cfg.distill.lambda) : 0.0;

  const std::size_t before = teacher.forward_count();
  const auto teacher_out = teacher.forward(cfg, ex);
  diag.teacher_forwards = teacher.forward_count() - before;
  TargetStats stats;
  const auto blocks = std::span<const Tensor>(teacher_out.layer_outputs).subspan(1);
  const Tensor target = build_targets(blocks, cfg.distill.top_k, &stats);
  diag.target_std = stats.normalized_std;
  diag.raw_target_std = stats.raw_std;

  const auto features = featurize(student, cfg.prenet, ex);
  const std::size_t T = features.length();
  const auto masks = sample_masks(T, cfg.mask, rng);
  const std::size_t M = masks.masks.size();
  diag.clones = M;
  std::vector<std::vector<bool>> drops;
  drops.reserve(M);
  for (std::size_t m = 0; m < M; ++m) drops.push_back(sample_layer_drops(cfg.encoder, rng));

  std::vector<std::size_t> order = opt.clone_order;
  if (order.empty()) {
    order.resize(M);
    std::iota(order.begin(), order.end(), 0);
  } else {
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t m = 0; m < sorted.size(); ++m) {
      if (sorted[m] != m || sorted.size() != M) throw ContractError("clone_order is not a permutation");
    }
  }

  std::vector<Tensor> l2(M), mlm(M);
  for (const std::size_t m : order) {
    const auto& mask = masks.masks[m];
    const auto split = split_visible(features.frames, mask);
    const auto enc = encode(student, cfg.encoder, split.visible,
                            {.mode = EncodeMode::student, .dropped = &drops[m]});
    const auto pred = decode(student, cfg, enc.output, split);
    l2[m] = l2_masked_loss(pred, target, mask);
    if (hybrid) {
      mlm[m] = mlm_loss(pred, student.get("prenet.token_embedding"), student.get("decoder.mlm_bias"),
                        ex.tokens, mask);
    }
  }

  // Reduce in clone-index order so the result is independent of `order`.
  const double inv_m = 1.0 / static_cast<double>(M);
  Tensor l2_sum = l2[0];
  for (std::size_t m = 1; m < M; ++m) l2_sum = ops::add(l2_sum, l2[m]);
  Tensor total = ops::scale(l2_sum, inv_m);
  diag.l2 = total.item();
  if (hybrid) {
    Tensor mlm_sum = mlm[0];
    for (std::size_t m = 1; m < M; ++m) mlm_sum = ops::add(mlm_sum, mlm[m]);
    const Tensor mlm_avg = ops::scale(mlm_sum, inv_m);
    diag.mlm = mlm_avg.item();
    total = ops::add(total, ops::scale(mlm_avg, diag.lambda));
  }
  diag.total = total.item();
  result.loss = std::move(total);
  return result;
}

}  // namespace bijou
