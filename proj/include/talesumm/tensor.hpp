#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace talesumm {

using Dims = std::vector<std::size_t>;

std::size_t dims_product(const Dims& dims);
std::string dims_to_string(const Dims& dims);

/// Dense row-major tensor of floating-point values.
///
/// Matrix accessors treat the last dimension as columns and fold every
/// leading dimension into rows, so a rank-1 tensor of size D behaves as a
/// 1 x D row.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Dims dims, T fill = T{0});
  Tensor(Dims dims, std::vector<T> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, T fill = T{0}) {
    return Tensor(Dims{rows, cols}, fill);
  }
  static Tensor vector(std::vector<T> values) {
    const std::size_t n = values.size();
    return Tensor(Dims{n}, std::move(values));
  }

  const Dims& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t cols() const { return dims_.empty() ? 1 : dims_.back(); }
  std::size_t rows() const {
    const std::size_t c = cols();
    return c == 0 ? 0 : data_.size() / c;
  }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  void fill(T value);

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(dims_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Dims dims_;
  std::vector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace talesumm
