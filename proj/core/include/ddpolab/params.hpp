#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ddpolab/tensor.hpp"

namespace ddpolab::nn {

// Named ordered parameter set for one model. `arch` names the architecture
// descriptor the shapes must match; `revision` is bumped on every optimizer
// step so rollout batches can assert they were generated by one snapshot.
struct ModelParams {
  struct Entry {
    std::string name;
    Tensor value;
  };

  std::string arch;
  std::vector<Entry> entries;
  std::uint64_t revision = 0;

  bool has(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  std::size_t total_size() const;
};

// One gradient tensor per parameter, same names and shapes.
struct GradSet {
  std::vector<std::pair<std::string, Tensor>> grads;

  const Tensor& at(const std::string& name) const;
  bool all_finite() const;
  std::size_t total_size() const;
};

}  // namespace ddpolab::nn
