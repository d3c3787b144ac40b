#include "fqkl/param_tree.hpp"

#include <cmath>
#include <stdexcept>

#include "fqkl/errors.hpp"

namespace fqkl {

void ParamTree::insert(std::string name, Tensor t) {
  auto [it, ok] = entries_.emplace(std::move(name), std::move(t));
  if (!ok) throw ShapeError("duplicate parameter name '" + it->first + "'");
}

Tensor& ParamTree::at(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("no parameter named '" + std::string(name) + "'");
  return it->second;
}

const Tensor& ParamTree::at(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("no parameter named '" + std::string(name) + "'");
  return it->second;
}

void ParamTree::erase(std::string_view name) {
  auto it = entries_.find(name);
  if (it != entries_.end()) entries_.erase(it);
}

std::size_t ParamTree::numel() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

bool ParamTree::congruent_with(const ParamTree& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.shape() != b->second.shape()) return false;
  }
  return true;
}

ParamTree ParamTree::zeros_like(const ParamTree& other) {
  ParamTree t;
  for (const auto& [name, tensor] : other.entries_) {
    t.entries_.emplace(name, Tensor(tensor.shape()));
  }
  return t;
}

void ParamTree::add_scaled(const ParamTree& other, double s) {
  if (!congruent_with(other)) throw ShapeError("add_scaled: trees are not congruent");
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    double* x = a->second.data();
    const double* y = b->second.data();
    for (std::size_t i = 0; i < a->second.size(); ++i) x[i] += s * y[i];
  }
}

void ParamTree::scale(double s) {
  for (auto& [name, t] : entries_) {
    for (double& v : t.values()) v *= s;
  }
}

double ParamTree::max_abs_diff(const ParamTree& other) const {
  if (!congruent_with(other)) throw ShapeError("max_abs_diff: trees are not congruent");
  double m = 0.0;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    const double* x = a->second.data();
    const double* y = b->second.data();
    for (std::size_t i = 0; i < a->second.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  }
  return m;
}

bool ParamTree::all_finite() const {
  for (const auto& [name, t] : entries_) {
    if (!t.all_finite()) return false;
  }
  return true;
}

}  // namespace fqkl
