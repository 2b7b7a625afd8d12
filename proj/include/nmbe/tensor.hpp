// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#ifndef NMBE_TENSOR_HPP
#define NMBE_TENSOR_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "nmbe/common.hpp"

namespace nmbe::gradcore {

/// Dense row-major real tensor, double precision.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d);
  explicit Tensor(std::vector<int> s);  // zero-filled

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v);

  std::int64_t numel() const;
  int dim(int axis) const;
  int rank() const { return static_cast<int>(shape.size()); }

  double& at(std::initializer_list<int> idx);
  double at(std::initializer_list<int> idx) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;

  std::string shape_str() const;
};

std::string shape_str(const std::vector<int>& shape);
std::int64_t shape_numel(const std::vector<int>& shape);

}  // namespace nmbe::gradcore

#endif  // NMBE_TENSOR_HPP
