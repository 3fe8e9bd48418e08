#include "bijou/prenet.hpp"

#include <cmath>

#include "bijou/errors.hpp"
#include "bijou/ops.hpp"

namespace bijou {

void PrenetConfig::validate() const {
  if (d_model == 0) throw ConfigError("prenet: d_model must be positive");
  if (modality == Modality::text) {
    if (vocab_size == 0 || max_positions == 0) throw ConfigError("prenet: empty embedding table");
    return;
  }
  if (conv_channels == 0) throw ConfigError("prenet: conv_channels must be positive");
  if (pos_conv_kernel % 2 == 0) throw ConfigError("prenet: positional conv kernel must be odd");
  if (pos_conv_groups == 0 || d_model % pos_conv_groups != 0) {
    throw ConfigError("prenet: d_model " + std::to_string(d_model) +
                      " not divisible by positional conv groups " + std::to_string(pos_conv_groups));
  }
}

std::size_t frames_for_samples(std::size_t samples) {
  std::size_t n = samples;
  for (std::size_t i = 0; i < kConvKernels.size(); ++i) {
    n = ops::conv1d_output_length(n, kConvKernels[i], {.stride = kConvStrides[i]});
    if (n == 0) return 0;
  }
  return n;
}

std::size_t min_audio_samples() {
  // Invert the ladder from one output frame.
  std::size_t n = 1;
  for (std::size_t i = kConvKernels.size(); i-- > 0;) n = (n - 1) * kConvStrides[i] + kConvKernels[i];
  return n;
}

void init_prenet(ParameterSet& params, const PrenetConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  if (cfg.modality == Modality::text) {
    params.add("prenet.token_embedding", init::normal({cfg.vocab_size, d}, 0.02, rng));
    params.add("prenet.position_embedding", init::normal({cfg.max_positions, d}, 0.02, rng));
    return;
  }
  const std::size_t C = cfg.conv_channels;
  std::size_t in = 1;
  for (std::size_t i = 0; i < kConvKernels.size(); ++i) {
    const std::string p = "prenet.conv" + std::to_string(i);
    const double std = std::sqrt(2.0 / static_cast<double>(in * kConvKernels[i]));
    params.add(p + ".weight", init::normal({C, in, kConvKernels[i]}, std, rng));
    params.add(p + ".norm.gain", init::ones({C}));
    params.add(p + ".norm.bias", init::zeros({C}));
    in = C;
  }
  params.add("prenet.feature_norm.gain", init::ones({C}));
  params.add("prenet.feature_norm.bias", init::zeros({C}));
  params.add("prenet.proj.weight", init::normal({C, d}, 1.0 / std::sqrt(static_cast<double>(C)), rng));
  params.add("prenet.proj.bias", init::zeros({d}));
  const std::size_t cpg = d / cfg.pos_conv_groups;
  params.add("prenet.pos_conv.weight",
             init::normal({d, cpg, cfg.pos_conv_kernel},
                          std::sqrt(1.0 / static_cast<double>(cpg * cfg.pos_conv_kernel)), rng));
  params.add("prenet.pos_conv.bias", init::zeros({d}));
}

std::size_t prenet_parameter_count(const PrenetConfig& cfg) {
  const std::size_t d = cfg.d_model;
  if (cfg.modality == Modality::text) return (cfg.vocab_size + cfg.max_positions) * d;
  const std::size_t C = cfg.conv_channels;
  std::size_t n = 0, in = 1;
  for (std::size_t k : kConvKernels) {
    n += C * in * k + 2 * C;
    in = C;
  }
  n += 2 * C + C * d + d;
  n += d * (d / cfg.pos_conv_groups) * cfg.pos_conv_kernel + d;
  return n;
}

FeatureSequence embed_text(const ParameterSet& params, const PrenetConfig& cfg,
                           std::span<const std::int32_t> tokens) {
  if (tokens.empty()) throw InputError("embed_text: empty token sequence");
  if (tokens.size() > cfg.max_positions) {
    throw InputError("embed_text: sequence of " + std::to_string(tokens.size()) +
                     " tokens exceeds " + std::to_string(cfg.max_positions) + " positions");
  }
  std::vector<std::size_t> ids(tokens.size()), pos(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= cfg.vocab_size) {
      throw InputError("embed_text: token id " + std::to_string(tokens[i]) +
                       " out of range for vocabulary of " + std::to_string(cfg.vocab_size));
    }
    ids[i] = static_cast<std::size_t>(tokens[i]);
    pos[i] = i;
  }
  auto x = ops::add(ops::index_rows(params.get("prenet.token_embedding"), ids),
                    ops::index_rows(params.get("prenet.position_embedding"), pos));
  return {std::move(x), Modality::text};
}

std::vector<double> standardize(std::span<const double> samples) {
  double mu = 0.0;
  for (double s : samples) mu += s;
  mu /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double s : samples) var += (s - mu) * (s - mu);
  var /= static_cast<double>(samples.size());
  const double inv = 1.0 / std::sqrt(var + 1e-12);
  std::vector<double> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = (samples[i] - mu) * inv;
  return out;
}

FeatureSequence featurize_audio(const ParameterSet& params, const PrenetConfig& cfg,
                                std::span<const double> samples) {
  if (samples.size() < min_audio_samples()) {
    throw InputError("featurize_audio: " + std::to_string(samples.size()) +
                     " samples is below the minimum of " + std::to_string(min_audio_samples()));
  }
  std::vector<double> wave = cfg.standardize_waveform
                                 ? standardize(samples)
                                 : std::vector<double>(samples.begin(), samples.end());
  const std::size_t n = wave.size();
  Tensor x = Tensor::from({1, n}, std::move(wave));  // [channels × time]
  for (std::size_t i = 0; i < kConvKernels.size(); ++i) {
    const std::string p = "prenet.conv" + std::to_string(i);
    x = ops::conv1d(x, params.get(p + ".weight"), Tensor{}, {.stride = kConvStrides[i]});
    auto t = ops::layer_norm(ops::transpose(x), params.get(p + ".norm.gain"), params.get(p + ".norm.bias"));
    x = ops::transpose(ops::gelu(t));
  }
  auto feats = ops::layer_norm(ops::transpose(x), params.get("prenet.feature_norm.gain"),
                               params.get("prenet.feature_norm.bias"));
  auto h = ops::linear(feats, params.get("prenet.proj.weight"), params.get("prenet.proj.bias"));
  auto pos = ops::conv1d(ops::transpose(h), params.get("prenet.pos_conv.weight"),
                         params.get("prenet.pos_conv.bias"),
                         {.stride = 1, .padding = cfg.pos_conv_kernel / 2, .groups = cfg.pos_conv_groups});
  h = ops::add(h, ops::gelu(ops::transpose(pos)));
  return {std::move(h), Modality::speech};
}

FeatureSequence featurize(const ParameterSet& params, const PrenetConfig& cfg, const Example& ex) {
  if (ex.modality != cfg.modality) throw ConfigError("example modality does not match the pre-net");
  return ex.modality == Modality::text ? embed_text(params, cfg, ex.tokens)
                                       : featurize_audio(params, cfg, ex.samples);
}

}  // namespace bijou
