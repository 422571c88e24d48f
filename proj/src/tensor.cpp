#include "talesumm/tensor.hpp"

#include <algorithm>

#include "talesumm/error.hpp"

namespace talesumm {

std::size_t dims_product(const Dims& dims) {
  std::size_t n = 1;
  for (const auto d : dims) n *= d;
  return n;
}

std::string dims_to_string(const Dims& dims) {
  std::string out = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(dims[i]);
  }
  return out + "]";
}

template <typename T>
Tensor<T>::Tensor(Dims dims, T fill) : dims_(std::move(dims)), data_(dims_product(dims_), fill) {}

template <typename T>
Tensor<T>::Tensor(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
  if (dims_product(dims_) != data_.size()) {
    throw invalid_input("tensor dims " + dims_to_string(dims_) + " do not match " +
                        std::to_string(data_.size()) + " values");
  }
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace talesumm
