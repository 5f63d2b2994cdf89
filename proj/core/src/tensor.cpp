#include "mssp/tensor.hpp"

#include <sstream>

namespace mssp {

std::string dims_to_string(const Dims& dims) {
  std::ostringstream os;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  return os.str();
}

namespace {

std::size_t checked_volume(const Dims& dims) {
  if (dims.empty() || dims.size() > 4) {
    throw ShapeError("tensor rank must be 1..4, got " + std::to_string(dims.size()));
  }
  std::size_t n = 1;
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("tensor extent must be >= 1: " + dims_to_string(dims));
    n *= d;
  }
  return n;
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Dims dims, T fill) : dims_(std::move(dims)) {
  data_.assign(checked_volume(dims_), fill);
}

template <typename T>
Tensor<T>::Tensor(Dims dims, std::vector<T> data)
    : dims_(std::move(dims)), data_(data.begin(), data.end()) {
  if (checked_volume(dims_) != data_.size()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match dims " +
                     dims_to_string(dims_));
  }
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= dims_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(dims_.size()));
  }
  return dims_[axis];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Dims dims) const {
  if (checked_volume(dims) != data_.size()) {
    throw ShapeError("cannot reshape " + dims_to_string(dims_) + " to " + dims_to_string(dims));
  }
  Tensor out;
  out.dims_ = std::move(dims);
  out.data_ = data_;
  return out;
}

template <typename T>
std::size_t Tensor<T>::offset(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != dims_.size()) {
    throw ShapeError("index arity " + std::to_string(idx.size()) + " != rank " +
                     std::to_string(dims_.size()));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : idx) {
    if (i >= dims_[axis]) {
      throw ShapeError("index " + std::to_string(i) + " out of bounds on axis " +
                       std::to_string(axis) + " (extent " + std::to_string(dims_[axis]) + ")");
    }
    off = off * dims_[axis] + i;
    ++axis;
  }
  return off;
}

template <typename T>
Nhwc as_nhwc(const Tensor<T>& t, const char* what) {
  const Dims& d = t.dims();
  if (d.size() == 3) return {1, d[0], d[1], d[2]};
  if (d.size() == 4) return {d[0], d[1], d[2], d[3]};
  throw ShapeError(std::string(what) + ": expected rank 3 or 4 activation, got " +
                   dims_to_string(d));
}

Dims activation_dims(const Dims& like, std::size_t n, std::size_t h, std::size_t w,
                     std::size_t c) {
  if (like.size() == 3) return {h, w, c};
  return {n, h, w, c};
}

template class Tensor<float>;
template class Tensor<double>;
template Nhwc as_nhwc(const Tensor<float>&, const char*);
template Nhwc as_nhwc(const Tensor<double>&, const char*);

}  // namespace mssp
