// SPDX-License-Identifier: Apache-2.0
//
// nmbe: near-field mmWave beam estimation toolkit

#include "nmbe/tensor.hpp"

#include <cmath>
#include <sstream>

namespace nmbe::gradcore {

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace {

void check_extents(const std::vector<int>& shape) {
  for (int e : shape) {
    if (e <= 0) {
      throw config_error("tensor extent must be positive, got shape " +
                         gradcore::shape_str(shape));
    }
  }
}

std::int64_t flat_index(const std::vector<int>& shape, std::initializer_list<int> idx) {
  if (static_cast<int>(idx.size()) != static_cast<int>(shape.size())) {
    throw usage_error("index rank mismatch for shape " + gradcore::shape_str(shape));
  }
  std::int64_t flat = 0;
  int axis = 0;
  for (int i : idx) {
    if (i < 0 || i >= shape[static_cast<std::size_t>(axis)]) {
      throw usage_error("index out of range for shape " + gradcore::shape_str(shape));
    }
    flat = flat * shape[static_cast<std::size_t>(axis)] + i;
    ++axis;
  }
  return flat;
}

}  // namespace

Tensor::Tensor(std::vector<int> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  check_extents(shape);
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw config_error("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + gradcore::shape_str(shape));
  }
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  check_extents(shape);
  data.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
}

Tensor Tensor::full(std::vector<int> s, double v) {
  Tensor t(std::move(s));
  std::fill(t.data.begin(), t.data.end(), v);
  return t;
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(data.size()); }

int Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank()) {
    throw usage_error("axis " + std::to_string(axis) + " out of range for shape " +
                      gradcore::shape_str(shape));
  }
  return shape[static_cast<std::size_t>(axis)];
}

double& Tensor::at(std::initializer_list<int> idx) {
  return data[static_cast<std::size_t>(flat_index(shape, idx))];
}

double Tensor::at(std::initializer_list<int> idx) const {
  return data[static_cast<std::size_t>(flat_index(shape, idx))];
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const { return gradcore::shape_str(shape); }

}  // namespace nmbe::gradcore
