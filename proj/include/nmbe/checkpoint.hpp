// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#ifndef NMBE_CHECKPOINT_HPP
#define NMBE_CHECKPOINT_HPP

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nmbe/adam.hpp"
#include "nmbe/tensor.hpp"

namespace nmbe::gradcore {

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Trainable parameters plus non-trainable buffers (running statistics),
/// in a fixed deterministic order.
struct ParamSet {
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> buffers;

  Tensor* find_param(const std::string& name);
  const Tensor* find_param(const std::string& name) const;
  std::vector<Tensor*> param_ptrs();
};

/// Checkpoint layout in `dir`: manifest.json (entry names, shapes, byte
/// offsets, optimizer scalars, caller metadata) + params.f64 (all tensors'
/// little-endian float64 data concatenated in manifest order; Adam moments
/// included as adam.m.<param> / adam.v.<param> entries).
void save_checkpoint(const std::string& dir, const ParamSet& set, const AdamState* opt,
                     const nlohmann::json& meta);

struct Checkpoint {
  ParamSet set;
  std::optional<AdamState> opt;
  nlohmann::json meta;
};

/// Throws io_error naming the offending entry on shape/size/version mismatch.
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace nmbe::gradcore

#endif  // NMBE_CHECKPOINT_HPP
