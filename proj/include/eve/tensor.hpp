#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace eve {

/// Dense row-major float tensor. The flat layout is load-bearing: the SWM
/// payload and the extraction algorithm both assume row-major scan order.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(count(shape)), 0.0f);
  }
  Tensor(std::vector<int> s, std::vector<float> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<size_t>(count(shape)) != data.size())
      throw std::invalid_argument("Tensor: shape/data size mismatch");
  }

  static long count(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
  }

  int size() const { return static_cast<int>(data.size()); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool empty() const { return data.empty(); }

  float& operator[](size_t i) { return data[i]; }
  float operator[](size_t i) const { return data[i]; }

  static Tensor ones(std::vector<int> s) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = 1.0f;
    return t;
  }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void require_finite(const std::string& what) const {
    if (!all_finite())
      throw std::runtime_error("non-finite values in " + what);
  }
};

}  // namespace eve
