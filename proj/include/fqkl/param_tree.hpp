#pragma once

#include <map>
#include <string>
#include <string_view>

#include "fqkl/tensor.hpp"

namespace fqkl {

/// Ordered, name-keyed collection of tensors. Iteration is lexicographic by
/// name, so every elementwise walk over a tree is deterministic. Two trees
/// are congruent when they hold the same names with the same shapes; that is
/// the compatibility contract for optimizer state, aggregation and wire
/// transfer.
class ParamTree {
 public:
  using Map = std::map<std::string, Tensor, std::less<>>;
  using const_iterator = Map::const_iterator;
  using iterator = Map::iterator;

  ParamTree() = default;

  /// Throws ShapeError if the name is already present.
  void insert(std::string name, Tensor t);

  bool contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  void erase(std::string_view name);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t numel() const;

  const_iterator begin() const { return entries_.begin(); }
  const_iterator end() const { return entries_.end(); }
  iterator begin() { return entries_.begin(); }
  iterator end() { return entries_.end(); }

  bool congruent_with(const ParamTree& other) const;

  static ParamTree zeros_like(const ParamTree& other);

  /// this += s * other. Trees must be congruent.
  void add_scaled(const ParamTree& other, double s);
  void scale(double s);

  double max_abs_diff(const ParamTree& other) const;
  bool all_finite() const;

  bool operator==(const ParamTree& other) const { return entries_ == other.entries_; }

 private:
  Map entries_;
};

}  // namespace fqkl
