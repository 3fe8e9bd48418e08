#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bijou/parameters.hpp"

namespace bijou {

struct OptimConfig {
  double lr_min = 1e-6;
  double lr_max = 7.5e-4;
  std::size_t warmup_steps = 8000;
  std::size_t max_steps = 400000;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
  double weight_decay = 0.1;
  std::optional<double> clip_norm;

  static OptimConfig speech_base() { return {1e-6, 7.5e-4, 8000, 400000}; }
  static OptimConfig speech_large() { return {1e-6, 4.0e-4, 5000, 300000, 0.9, 0.98, 1e-6, 0.1, 1.0}; }
  static OptimConfig text_base_mlm() { return {1e-6, 5e-4, 8000, 250000, 0.9, 0.98, 1e-6, 0.1, 1.0}; }

  void validate() const;
};

/// Linear warmup from lr_min to lr_max, cosine decay back to lr_min at
/// max_steps, lr_min beyond.
double lr_at(std::size_t step, const OptimConfig& cfg);

double global_grad_norm(const ParameterSet& params);

/// Scales every gradient by bound/norm when the global L2 norm exceeds
/// `bound`; returns the factor applied (1 when untouched).
double clip_gradients(ParameterSet& params, std::optional<double> bound, double* norm_before = nullptr);

// Bias, norm gains and the mask embedding are exempt from weight decay.
bool uses_weight_decay(const std::string& name);

/// Bias-corrected Adam with decoupled weight decay.
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterSet& params, OptimConfig cfg);

  // `t` is the 1-based update count used for bias correction. Throws
  // NumericError before touching anything if a gradient is non-finite.
  void step(ParameterSet& params, std::size_t t, double lr);

  const OptimConfig& config() const { return cfg_; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  OptimConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace bijou
