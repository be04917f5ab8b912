// Copyright 2026 The dasformer Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dasformer/tensor.hpp"

namespace dasformer {

/// Named parameter tensors with matching gradient slots. Entries keep
/// insertion order, which fixes both checkpoint layout and the order every
/// whole-store reduction (clipping, Adam) runs in.
///
/// Concurrency: gradient accumulation and in-place updates are single-writer;
/// read-only access to values (frozen inference) is safe to share.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;
  };

  std::size_t add(std::string name, Tensor<T> value, bool trainable = true) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
    Entry e;
    e.grad = zeros_like(value);
    e.value = std::move(value);
    e.name = std::move(name);
    e.trainable = trainable;
    index_.emplace(e.name, entries_.size());
    entries_.push_back(std::move(e));
    return entries_.size() - 1;
  }

  std::size_t count() const { return entries_.size(); }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

  std::size_t index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end())
      throw std::invalid_argument("ParamStore: unknown name " + std::string(name));
    return it->second;
  }

  const std::string& name(std::size_t i) const { return entries_.at(i).name; }
  bool trainable(std::size_t i) const { return entries_.at(i).trainable; }

  Tensor<T>& value(std::size_t i) { return entries_.at(i).value; }
  const Tensor<T>& value(std::size_t i) const { return entries_.at(i).value; }

  Tensor<T>& grad(std::size_t i) { return entries_.at(i).grad; }
  const Tensor<T>& grad(std::size_t i) const { return entries_.at(i).grad; }

  Tensor<T>& value(std::string_view n) { return value(index_of(n)); }
  const Tensor<T>& value(std::string_view n) const { return value(index_of(n)); }
  Tensor<T>& grad(std::string_view n) { return grad(index_of(n)); }

  void zero_grad() {
    for (Entry& e : entries_) e.grad.fill(T(0));
  }

  /// Total element count across trainable entries.
  std::size_t trainable_elements() const {
    std::size_t n = 0;
    for (const Entry& e : entries_)
      if (e.trainable) n += e.value.size();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace dasformer
