#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <unistd.h>
#include <vector>

#include "bijou/ops.hpp"
#include "bijou/parameters.hpp"

namespace testing {

using bijou::Shape;
using bijou::Tensor;

inline Tensor randn(Shape shape, bijou::Rng& rng, double stddev = 1.0, bool grad = true) {
  std::vector<double> v(bijou::shape_numel(shape));
  for (auto& x : v) x = stddev * rng.normal();
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Weighted sum with fixed random weights, so that outputs whose plain sum is
// constant (softmax rows, normalized slices) still carry gradient.
inline Tensor scalarize(const Tensor& y, std::uint64_t seed = 99) {
  bijou::Rng rng(seed);
  auto w = randn(y.shape(), rng, 1.0, false);
  return bijou::ops::sum(bijou::ops::mul(y, w));
}

/// Largest per-tensor relative error ‖analytic − numeric‖∞ / ‖numeric‖∞
/// between backward() and central differences of `loss` over `inputs`.
inline double gradcheck(const std::function<Tensor()>& loss, std::vector<Tensor> inputs, double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
  }
  double worst = 0.0;
  bijou::NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].mutable_data();
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double x = data[i];
      data[i] = x + h;
      const double fp = loss().item();
      data[i] = x - h;
      const double fm = loss().item();
      data[i] = x;
      const double numeric = (fp - fm) / (2.0 * h);
      diff = std::max(diff, std::abs(numeric - analytic[k][i]));
      scale = std::max(scale, std::abs(numeric));
    }
    worst = std::max(worst, diff / std::max(scale, 1e-8));
  }
  return worst;
}

inline std::vector<Tensor> tensors_of(const bijou::ParameterSet& p) {
  std::vector<Tensor> out;
  for (const auto& e : p.entries()) out.push_back(e.tensor);
  return out;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("bijou-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing
