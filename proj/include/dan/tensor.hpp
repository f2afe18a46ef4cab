#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dan {

inline std::string shape_to_string(const std::vector<std::size_t>& extents) {
  std::string out = "[";
  for (std::size_t i = 0; i < extents.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(extents[i]);
  }
  out += "]";
  return out;
}

/// Dense row-major n-dimensional array. The extents are fixed at construction
/// and every extent must be positive; a default-constructed tensor is an empty
/// placeholder with no elements.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> extents)
      : extents_(std::move(extents)), data_(checked_count(extents_), T{}) {}

  Tensor(std::vector<std::size_t> extents, std::vector<T> values)
      : extents_(std::move(extents)), data_(std::move(values)) {
    if (data_.size() != checked_count(extents_)) {
      throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                  " does not match extents " + shape_to_string(extents_));
    }
  }

  static Tensor full(std::vector<std::size_t> extents, T value) {
    Tensor t(std::move(extents));
    t.fill(value);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return extents_; }
  std::size_t rank() const { return extents_.size(); }
  std::size_t dim(std::size_t axis) const {
    if (axis >= extents_.size()) {
      throw std::out_of_range("tensor axis " + std::to_string(axis) + " out of range for shape " +
                              shape_to_string(extents_));
    }
    return extents_[axis];
  }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const Tensor& other) const { return extents_ == other.extents_; }

  void fill(T value) {
    for (T& v : data_) v = value;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return Tensor<U>(extents_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.extents_ == b.extents_ && a.data_ == b.data_;
  }

 private:
  static std::size_t checked_count(const std::vector<std::size_t>& extents) {
    if (extents.empty()) return 0;
    std::size_t count = 1;
    for (std::size_t e : extents) {
      if (e == 0) throw std::invalid_argument("tensor extents must be positive: " + shape_to_string(extents));
      count *= e;
    }
    return count;
  }

  std::vector<std::size_t> extents_;
  std::vector<T> data_;
};

}  // namespace dan
