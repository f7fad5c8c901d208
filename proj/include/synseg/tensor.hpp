#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace synseg {

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

// Dense row-major float32 array: the single tensor storage type in the
// project. Extents are strictly positive and the element count always equals
// the product of the extents.
class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(std::vector<int> shape);
  DenseArray(std::vector<int> shape, std::vector<float> data);

  static DenseArray zeros(std::vector<int> shape);
  static DenseArray full(std::vector<int> shape, float v);
  static DenseArray scalar(float v);

  const std::vector<int>& shape() const { return shape_; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  int rows() const;  // 2-D only
  int cols() const;  // 2-D only

  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float at(int r, int c) const;
  float& at(int r, int c);

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  bool same_shape(const DenseArray& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  std::string shape_str() const { return shape_to_string(shape_); }

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

// A tensor with a persistent gradient buffer. Gradients accumulate across
// backward passes until zero_grad(); the optimizer only touches trainable
// parameters, and weight decay skips those with decay == false.
struct Parameter {
  DenseArray value;
  DenseArray grad;
  bool trainable = true;
  bool decay = true;

  Parameter() = default;
  explicit Parameter(DenseArray v, bool trainable_flag = true, bool decay_flag = true);
  void zero_grad();
};

// Central finite differences: g_i = (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
// Verification oracle for reverse-mode gradients; uses forward evaluations
// only, so it stays independent of the backward implementation it checks.
DenseArray finite_difference_grad(const std::function<double(const DenseArray&)>& f,
                                  const DenseArray& x, double eps = 1e-3);

}  // namespace synseg
