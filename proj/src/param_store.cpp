#include "fade/param_store.hpp"

#include <algorithm>

#include "fade/errors.hpp"

namespace fade {

void ParameterStore::add(const std::string& name, Tensor tensor) {
  if (name.empty()) throw ValidationError("parameter name must be non-empty");
  if (contains(name)) throw ValidationError("duplicate parameter name '" + name + "'");
  Entry e;
  e.name = name;
  e.flat_offset = total_scalars_;
  total_scalars_ += tensor.numel();
  e.tensor = std::move(tensor);
  index_.emplace(name, entries_.size());
  entries_.push_back(std::move(e));
  ++version_;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

Tensor& ParameterStore::mutate(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("unknown parameter '" + name + "'");
  ++version_;
  return entries_[it->second].tensor;
}

std::size_t ParameterStore::entry_index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParameterStore::tensor_at(std::size_t i) {
  ++version_;
  return entries_[i].tensor;
}

std::vector<double> ParameterStore::flatten() const {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(total_scalars_));
  for (const auto& e : entries_)
    flat.insert(flat.end(), e.tensor.values().begin(), e.tensor.values().end());
  return flat;
}

void ParameterStore::assign_flat(const std::vector<double>& flat) {
  if (static_cast<std::int64_t>(flat.size()) != total_scalars_)
    throw ShapeError("flat vector size does not match store scalar count");
  std::size_t pos = 0;
  for (auto& e : entries_) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
              flat.begin() + static_cast<std::ptrdiff_t>(pos) + e.tensor.numel(),
              e.tensor.values().begin());
    pos += static_cast<std::size_t>(e.tensor.numel());
  }
  ++version_;
}

}  // namespace fade
