#include "bijou/parameters.hpp"

#include "bijou/errors.hpp"

namespace bijou {

Tensor& ParameterSet::add(const std::string& name, Tensor t) {
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  t.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.push_back({name, std::move(t)});
  return entries_.back().tensor;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return entries_[it->second].tensor;
}

Tensor& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return entries_[it->second].tensor;
}

std::size_t ParameterSet::numel() const { return numel(""); }

std::size_t ParameterSet::numel(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.name.starts_with(prefix)) n += e.tensor.numel();
  }
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

ParameterSet ParameterSet::clone(const std::vector<std::string>& prefixes, bool trainable) const {
  ParameterSet out;
  for (const auto& e : entries_) {
    bool keep = prefixes.empty();
    for (const auto& p : prefixes) keep = keep || e.name.starts_with(p);
    if (!keep) continue;
    out.add(e.name, e.tensor.detach());
    out.get(e.name).set_requires_grad(trainable);
  }
  return out;
}

namespace init {

Tensor normal(Shape shape, double stddev, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = stddev * rng.normal();
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape)); }
Tensor ones(Shape shape) { return Tensor::full(std::move(shape), 1.0); }

}  // namespace init

}  // namespace bijou
