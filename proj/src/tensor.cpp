#include "synseg/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace synseg {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

static void check_shape(const std::vector<int>& shape) {
  if (shape.empty()) throw std::invalid_argument("DenseArray: empty shape");
  for (int e : shape) {
    if (e <= 0)
      throw std::invalid_argument("DenseArray: non-positive extent in shape " +
                                  shape_to_string(shape));
  }
}

DenseArray::DenseArray(std::vector<int> shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0f);
}

DenseArray::DenseArray(std::vector<int> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
    throw std::invalid_argument("DenseArray: data size " + std::to_string(data_.size()) +
                                " does not match shape " + shape_to_string(shape_));
}

DenseArray DenseArray::zeros(std::vector<int> shape) { return DenseArray(std::move(shape)); }

DenseArray DenseArray::full(std::vector<int> shape, float v) {
  DenseArray a(std::move(shape));
  for (auto& x : a.data_) x = v;
  return a;
}

DenseArray DenseArray::scalar(float v) { return DenseArray({1}, {v}); }

int DenseArray::rows() const {
  if (shape_.size() != 2) throw std::invalid_argument("DenseArray::rows: not 2-D, shape " + shape_str());
  return shape_[0];
}

int DenseArray::cols() const {
  if (shape_.size() != 2) throw std::invalid_argument("DenseArray::cols: not 2-D, shape " + shape_str());
  return shape_[1];
}

float DenseArray::at(int r, int c) const {
  return data_[static_cast<size_t>(r) * static_cast<size_t>(cols()) + static_cast<size_t>(c)];
}

float& DenseArray::at(int r, int c) {
  return data_[static_cast<size_t>(r) * static_cast<size_t>(cols()) + static_cast<size_t>(c)];
}

bool DenseArray::all_finite() const {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Parameter::Parameter(DenseArray v, bool trainable_flag, bool decay_flag)
    : value(std::move(v)),
      grad(DenseArray::zeros(value.shape())),
      trainable(trainable_flag),
      decay(decay_flag) {}

void Parameter::zero_grad() {
  for (auto& g : grad.data()) g = 0.0f;
}

DenseArray finite_difference_grad(const std::function<double(const DenseArray&)>& f,
                                  const DenseArray& x, double eps) {
  if (eps <= 0) throw std::invalid_argument("finite_difference_grad: eps must be positive");
  DenseArray g = DenseArray::zeros(x.shape());
  DenseArray xp = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const float saved = xp[i];
    xp[i] = static_cast<float>(saved + eps);
    const double fp = f(xp);
    xp[i] = static_cast<float>(saved - eps);
    const double fm = f(xp);
    xp[i] = saved;
    g[i] = static_cast<float>((fp - fm) / (2.0 * eps));
  }
  return g;
}

}  // namespace synseg
