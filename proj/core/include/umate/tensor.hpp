#pragma once

#include <cmath>
#include <initializer_list>
#include <string>
#include <vector>

#include "umate/errors.hpp"
#include "umate/rng.hpp"

namespace umate::nd {

// Dense row-major tensor of 64-bit floats. All trainable state and all
// latent tokens in the project live in these.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel(shape)), 0.0);
  }
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::size_t>(numel(shape)) != data.size())
      throw ContractError("Tensor: shape does not match data length");
  }

  static long numel(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) {
      if (d < 0) throw ContractError("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor scalar(double v) { return Tensor({{1}}, {v}); }
  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = v;
    return t;
  }
  static Tensor randn(std::vector<int> s, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = rand_normal(rng, 0.0, stddev);
    return t;
  }
  static Tensor eye(int n) {
    Tensor t({n, n});
    for (int i = 0; i < n; ++i) t.data[static_cast<std::size_t>(i) * n + i] = 1.0;
    return t;
  }

  int size() const { return static_cast<int>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  bool is_scalar() const { return size() == 1; }

  int rows() const {
    if (ndim() != 2) throw ContractError("Tensor: rows() on non-matrix");
    return shape[0];
  }
  int cols() const {
    if (ndim() != 2) throw ContractError("Tensor: cols() on non-matrix");
    return shape[1];
  }

  double& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
  double operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
  double& operator[](int i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return data[static_cast<std::size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }

  double item() const {
    if (!is_scalar()) throw ContractError("Tensor: item() on non-scalar");
    return data[0];
  }

  std::string shape_str() const;
};

}  // namespace umate::nd
