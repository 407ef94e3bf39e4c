// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "petsynth/nn.hpp"

namespace petsynth {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Versioned named-tensor archive shared by every model in the project.
// `meta` carries a JSON snapshot (configs, step counter, seeds); tensors are
// raw little-endian doubles. Reads reject any other version loudly.
struct Checkpoint {
  std::string meta;
  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
  };
  std::vector<Entry> tensors;

  void add_tensor(const std::string& name, const std::vector<int>& shape,
                  const double* data, std::size_t count);
  void add_params(const std::vector<nn::TensorRef>& refs);
  // Adam moments stored as <prefix>.m / <prefix>.v per parameter tensor.
  void add_optimizer(const std::string& prefix,
                     const std::vector<nn::TensorRef>& refs, const nn::Adam& opt);

  const Entry& find(const std::string& name) const;
  void restore_params(const std::vector<nn::TensorRef>& refs) const;
  void restore_optimizer(const std::string& prefix,
                         const std::vector<nn::TensorRef>& refs,
                         nn::Adam& opt) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace petsynth
