#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "bijou/rng.hpp"
#include "bijou/tensor.hpp"

namespace bijou {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Ordered, name-addressable collection of trainable tensors.
///
/// Insertion order is the serialization order, so two sets built by the same
/// init calls serialize byte-identically.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Tensor t);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return entries_.size(); }
  std::size_t numel() const;
  // Parameters whose name starts with `prefix`.
  std::size_t numel(const std::string& prefix) const;

  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::vector<NamedTensor>& entries() { return entries_; }

  void zero_grad();
  // Deep copy of every entry whose name starts with one of `prefixes`
  // (all entries if empty), with requires_grad set to `trainable`.
  ParameterSet clone(const std::vector<std::string>& prefixes = {}, bool trainable = true) const;

 private:
  std::vector<NamedTensor> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace init {
Tensor normal(Shape shape, double stddev, Rng& rng);
Tensor zeros(Shape shape);
Tensor ones(Shape shape);
}  // namespace init

}  // namespace bijou
