#include "bijou/encoder.hpp"

#include <cmath>
#include <optional>

#include "bijou/errors.hpp"
#include "bijou/ops.hpp"

namespace bijou {

void EncoderConfig::validate() const {
  if (d_model == 0 || heads == 0) throw ConfigError("encoder: d_model and heads must be positive");
  if (d_model % heads != 0) {
    throw ConfigError("encoder: d_model " + std::to_string(d_model) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (!(layerdrop >= 0.0 && layerdrop < 1.0)) throw ConfigError("encoder: layerdrop must lie in [0, 1)");
}

namespace {
std::string layer_prefix(std::size_t i) { return "encoder.layers." + std::to_string(i) + "."; }
}  // namespace

void init_encoder(ParameterSet& params, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.d_model, ff = cfg.ff_width();
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    const auto p = layer_prefix(i);
    params.add(p + "attn_norm.gain", init::ones({d}));
    params.add(p + "attn_norm.bias", init::zeros({d}));
    params.add(p + "attn.qkv.weight", init::normal({d, 3 * d}, 0.02, rng));
    params.add(p + "attn.qkv.bias", init::zeros({3 * d}));
    params.add(p + "attn.out.weight", init::normal({d, d}, 0.02, rng));
    params.add(p + "attn.out.bias", init::zeros({d}));
    params.add(p + "ffn_norm.gain", init::ones({d}));
    params.add(p + "ffn_norm.bias", init::zeros({d}));
    params.add(p + "ffn.in.weight", init::normal({d, ff}, 0.02, rng));
    params.add(p + "ffn.in.bias", init::zeros({ff}));
    params.add(p + "ffn.out.weight", init::normal({ff, d}, 0.02, rng));
    params.add(p + "ffn.out.bias", init::zeros({d}));
  }
  if (cfg.final_norm) {
    params.add("encoder.final_norm.gain", init::ones({d}));
    params.add("encoder.final_norm.bias", init::zeros({d}));
  }
}

std::size_t encoder_parameter_count(const EncoderConfig& cfg) {
  const std::size_t d = cfg.d_model, ff = cfg.ff_width();
  const std::size_t per_layer = 2 * d + (3 * d * d + 3 * d) + (d * d + d) + 2 * d + (d * ff + ff) + (ff * d + d);
  return cfg.layers * per_layer + (cfg.final_norm ? 2 * d : 0);
}

std::vector<bool> sample_layer_drops(const EncoderConfig& cfg, Rng& rng) {
  std::vector<bool> dropped(cfg.layers, false);
  if (cfg.layerdrop <= 0.0) return dropped;
  for (std::size_t i = 0; i < cfg.layers; ++i) dropped[i] = rng.bernoulli(cfg.layerdrop);
  return dropped;
}

Tensor self_attention(const ParameterSet& params, const std::string& prefix, const Tensor& x,
                      std::size_t heads, std::vector<Tensor>* probs) {
  const std::size_t d = x.dim(1), dh = d / heads;
  auto qkv = ops::linear(x, params.get(prefix + "qkv.weight"), params.get(prefix + "qkv.bias"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto q = ops::slice_cols(qkv, h * dh, dh);
    auto k = ops::slice_cols(qkv, d + h * dh, dh);
    auto v = ops::slice_cols(qkv, 2 * d + h * dh, dh);
    auto a = ops::softmax(ops::scale(ops::matmul_bt(q, k), scale), 1);
    if (probs) probs->push_back(a);
    outs.push_back(ops::matmul(a, v));
  }
  auto cat = heads == 1 ? outs.front() : ops::concat_cols(outs);
  return ops::linear(cat, params.get(prefix + "out.weight"), params.get(prefix + "out.bias"));
}

EncoderOutput encode(const ParameterSet& params, const EncoderConfig& cfg, const Tensor& features,
                     const EncodeOptions& opt) {
  cfg.validate();
  if (features.rank() != 2 || features.dim(1) != cfg.d_model) {
    throw DimensionError("encode: features " + shape_str(features.shape()) + " do not match d_model " +
                         std::to_string(cfg.d_model));
  }
  std::optional<NoGradGuard> no_grad;
  if (opt.mode == EncodeMode::teacher) no_grad.emplace();

  std::vector<bool> dropped(cfg.layers, false);
  if (opt.mode == EncodeMode::student) {
    if (opt.dropped) {
      if (opt.dropped->size() != cfg.layers) throw ContractError("encode: layer-drop vector has wrong size");
      dropped = *opt.dropped;
    } else if (cfg.layerdrop > 0.0) {
      if (!opt.rng) throw ContractError("encode: layerdrop needs an rng");
      dropped = sample_layer_drops(cfg, *opt.rng);
    }
  }

  EncoderOutput out;
  Tensor x = features;
  if (opt.keep_layer_outputs) out.layer_outputs.push_back(x);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    if (!dropped[i]) {
      const auto p = layer_prefix(i);
      auto h = ops::layer_norm(x, params.get(p + "attn_norm.gain"), params.get(p + "attn_norm.bias"));
      x = ops::add(x, self_attention(params, p + "attn.", h, cfg.heads));
      h = ops::layer_norm(x, params.get(p + "ffn_norm.gain"), params.get(p + "ffn_norm.bias"));
      h = ops::gelu(ops::linear(h, params.get(p + "ffn.in.weight"), params.get(p + "ffn.in.bias")));
      x = ops::add(x, ops::linear(h, params.get(p + "ffn.out.weight"), params.get(p + "ffn.out.bias")));
      ++out.layers_run;
    }
    if (opt.keep_layer_outputs) out.layer_outputs.push_back(x);
  }
  out.output = cfg.final_norm ? ops::layer_norm(x, params.get("encoder.final_norm.gain"),
                                                params.get("encoder.final_norm.bias"))
                              : x;
  return out;
}

}  // namespace bijou
