#include "spoof/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spoof {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_volume(const Shape& shape) {
  std::size_t v = 1;
  for (auto d : shape) v *= d;
  return v;
}

namespace {
void check_extents(const Shape& shape) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
}
}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_volume(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  check_extents(shape_);
  if (shape_volume(shape_) != data_.size())
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + to_string(shape_));
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite value in output");
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
}

template class Tensor<float>;
template class Tensor<double>;
template void require_finite(const Tensor<float>&, const char*);
template void require_finite(const Tensor<double>&, const char*);
template void require_rank(const Tensor<float>&, std::size_t, const char*);
template void require_rank(const Tensor<double>&, std::size_t, const char*);

}  // namespace spoof
