#pragma once

#include <Eigen/Dense>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace hrf {

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

// Dense row-major float32 tensor. Rank is 1 or 2 in practice; everything the
// training loop touches is a [rows, cols] matrix or a flat vector.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::initializer_list<int64_t> s) : shape(s) { data.assign(numel_of(shape), 0.f); }
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) { data.assign(numel_of(shape), 0.f); }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
  }

  static Tensor zeros(int64_t r, int64_t c) { return Tensor{{r, c}}; }
  static Tensor full(int64_t r, int64_t c, float v) {
    Tensor t{{r, c}};
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(float v) {
    Tensor t{{1, 1}};
    t.data[0] = v;
    return t;
  }
  static Tensor from_vector(const std::vector<float>& v, int64_t r, int64_t c) {
    if ((int64_t)v.size() != r * c) throw std::invalid_argument("Tensor::from_vector: size mismatch");
    Tensor t;
    t.shape = {r, c};
    t.data = v;
    return t;
  }

  int64_t numel() const { return (int64_t)data.size(); }
  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  float& operator()(int64_t r, int64_t c) { return data[(size_t)(r * cols() + c)]; }
  float operator()(int64_t r, int64_t c) const { return data[(size_t)(r * cols() + c)]; }
  float& operator[](int64_t i) { return data[(size_t)i]; }
  float operator[](int64_t i) const { return data[(size_t)i]; }

  EMap mat() { return EMap(data.data(), rows(), cols()); }
  ECMap mat() const { return ECMap(data.data(), rows(), cols()); }

  void set_zero() { std::fill(data.begin(), data.end(), 0.f); }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
  }
};

}  // namespace hrf
