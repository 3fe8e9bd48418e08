#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bijou/tensor.hpp"

// Differentiable primitives. Broadcasting is limited to a trailing-axis
// vector (bias/gain); every other shape mismatch raises DimensionError.
namespace bijou::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
// a · bᵀ without materialising the transpose.
Tensor matmul_bt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
// x[..×d] + bias[d]
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);
// Normalises over the trailing axis. `gain`/`bias` may be undefined, in
// which case no affine transform is applied.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor gelu(const Tensor& x);

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel,
                                 const Conv1dOptions& opt);

// x[c_in×T] * weight[c_out×(c_in/g)×k] (+ bias[c_out]) -> [c_out×T'].
// `bias` may be undefined.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              const Conv1dOptions& opt = {});

// Gathers rows of a matrix; repeated indices accumulate gradient.
Tensor index_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Mean negative log-likelihood of `targets` under softmax(logits) rows.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

}  // namespace bijou::ops
