#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fade/tensor.hpp"

namespace fade {

// Ordered collection of named parameter tensors.
//
// Iteration order is insertion order and survives save/load, so the
// flattened index (concatenation of all tensors in entry order) is a
// stable coordinate system for gradients, optimizer moments and masks.
// Every mutation bumps a version counter; gradient records snapshot the
// version and refuse to backpropagate against stale parameters.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    std::int64_t flat_offset = 0;
  };

  void add(const std::string& name, Tensor tensor);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;

  // mutable access; invalidates outstanding gradient records
  Tensor& mutate(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  std::size_t entry_index(const std::string& name) const;

  // mutable entry tensor by index; bumps the version
  Tensor& tensor_at(std::size_t i);

  std::int64_t total_scalars() const { return total_scalars_; }
  std::uint64_t version() const { return version_; }

  std::vector<double> flatten() const;
  void assign_flat(const std::vector<double>& flat);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::int64_t total_scalars_ = 0;
  std::uint64_t version_ = 0;
};

}  // namespace fade
