#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "relsum/common.hpp"
#include "relsum/rng.hpp"

namespace relsum {

// Dense row-major f64 tensor. Scalars use an empty shape.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  }
  Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != static_cast<size_t>(numel_of(shape)))
      fail(Errc::shape_mismatch,
           "tensor data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 0) fail(Errc::bad_argument, "negative dimension in shape " + shape_str(s));
      n *= d;
    }
    return n;
  }

  static Tensor scalar(double v) {
    Tensor t(std::vector<int>{});
    t.data[0] = v;
    return t;
  }
  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor randn(std::vector<int> s, Rng& rng, double std_dev = 1.0) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = rng.next_normal() * std_dev;
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  bool is_scalar() const { return shape.empty(); }
  int rows() const { return ndim() >= 1 ? shape[0] : 1; }
  int cols() const { return ndim() >= 2 ? shape[1] : 1; }

  double& at(int i) { return data[static_cast<size_t>(i)]; }
  double at(int i) const { return data[static_cast<size_t>(i)]; }
  double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }

  double value() const {
    if (numel() != 1) fail(Errc::shape_mismatch, "value() on non-scalar tensor " + shape_str(shape));
    return data[0];
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  uint64_t fingerprint() const {
    uint64_t h = fnv1a(shape.data(), shape.size() * sizeof(int));
    return fnv1a(data.data(), data.size() * sizeof(double), h);
  }
};

inline void check_finite(const Tensor& t, const std::string& where) {
  if (!t.all_finite()) fail(Errc::non_finite, where + ": tensor contains NaN/Inf");
}

// Ordered name -> Tensor map. Iteration order is insertion order, so every
// walk over parameters (updates, serialization, hashing) is deterministic.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor t) {
    if (index_.count(name)) fail(Errc::bad_argument, "duplicate parameter name: " + name);
    check_finite(t, "parameter " + name);
    t.requires_grad = true;
    index_[name] = items_.size();
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) fail(Errc::bad_argument, "unknown parameter: " + name);
    return items_[it->second].second;
  }
  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail(Errc::bad_argument, "unknown parameter: " + name);
    return items_[it->second].second;
  }

  size_t size() const { return items_.size(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& [name, t] : items_) n += t.numel();
    return n;
  }

  // order-sensitive hash over names, shapes and raw values
  uint64_t fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, t] : items_) {
      h = fnv1a(name, h);
      h = fnv1a(t.shape.data(), t.shape.size() * sizeof(int), h);
      h = fnv1a(t.data.data(), t.data.size() * sizeof(double), h);
    }
    return h;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, size_t> index_;
};

using GradMap = std::vector<std::pair<std::string, Tensor>>;

}  // namespace relsum
