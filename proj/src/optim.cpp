#include "bijou/optim.hpp"

#include <cmath>
#include <numbers>

#include "bijou/errors.hpp"

namespace bijou {

void OptimConfig::validate() const {
  if (!(lr_min > 0.0 && lr_min <= lr_max)) throw ConfigError("optim: need 0 < lr_min <= lr_max");
  if (max_steps > 0 && warmup_steps >= max_steps) throw ConfigError("optim: warmup must be shorter than max_steps");
  if (clip_norm && *clip_norm <= 0.0) throw ConfigError("optim: clip norm must be positive");
}

double lr_at(std::size_t step, const OptimConfig& cfg) {
  if (step >= cfg.max_steps) return cfg.lr_min;
  const double span = cfg.lr_max - cfg.lr_min;
  if (step <= cfg.warmup_steps) {
    if (cfg.warmup_steps == 0) return cfg.lr_max;
    return cfg.lr_min + span * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.max_steps - cfg.warmup_steps);
  return cfg.lr_min + 0.5 * span * (1.0 + std::cos(std::numbers::pi * progress));
}

double global_grad_norm(const ParameterSet& params) {
  double sq = 0.0;
  for (const auto& e : params.entries()) {
    if (!e.tensor.has_grad()) continue;
    for (double g : e.tensor.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_gradients(ParameterSet& params, std::optional<double> bound, double* norm_before) {
  const double norm = global_grad_norm(params);
  if (norm_before) *norm_before = norm;
  if (!bound || norm <= *bound) return 1.0;
  const double factor = *bound / norm;
  for (auto& e : params.entries()) {
    if (!e.tensor.has_grad()) continue;
    for (double& g : e.tensor.mutable_grad()) g *= factor;
  }
  return factor;
}

bool uses_weight_decay(const std::string& name) {
  return !(name.ends_with(".bias") || name.ends_with(".gain") || name.ends_with("mask_embedding") ||
           name.ends_with("mlm_bias"));
}

Adam::Adam(const ParameterSet& params, OptimConfig cfg) : cfg_(cfg) {
  for (const auto& e : params.entries()) {
    m_.emplace_back(e.tensor.numel(), 0.0);
    v_.emplace_back(e.tensor.numel(), 0.0);
  }
}

void Adam::step(ParameterSet& params, std::size_t t, double lr) {
  if (t == 0) throw ContractError("Adam::step: update count starts at 1");
  auto& entries = params.entries();
  if (entries.size() != m_.size()) throw ContractError("Adam::step: parameter set changed size");
  for (const auto& e : entries) {
    if (!e.tensor.has_grad()) continue;
    for (double g : e.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + e.name);
    }
  }
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double step_size = lr * std::sqrt(bc2) / bc1;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto& p = entries[k].tensor;
    auto w = p.mutable_data();
    if (m_[k].size() != w.size()) throw ContractError("Adam::step: shape drift in " + entries[k].name);
    if (!p.has_grad()) continue;
    if (cfg_.weight_decay > 0.0 && uses_weight_decay(entries[k].name)) {
      const double keep = 1.0 - lr * cfg_.weight_decay;
      for (double& x : w) x *= keep;
    }
    const auto g = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) + cfg_.eps);
    }
  }
}

}  // namespace bijou
