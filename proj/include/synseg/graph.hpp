#pragma once

#include <functional>
#include <vector>

#include "synseg/tensor.hpp"

namespace synseg {

// Handle to a node in a Graph. Valid only for the graph that produced it.
struct Value {
  int id = -1;
};

// Reverse-mode automatic differentiation over DenseArray values.
//
// A Graph is a single-use tape: operations compute eagerly on creation and
// record a backward closure. backward(root) walks the tape in reverse and
// accumulates gradients; gradients of bound trainable Parameters are added
// into Parameter::grad, so repeated backward calls accumulate until the
// caller zeroes them.
//
// Numeric policy: node storage is float32 (every node output is rounded to
// float32 in the default precision), while reductions inside a kernel (dot
// products, matmul accumulation, norms, softmax/layer-norm statistics)
// accumulate in double. Precision::f64 skips the per-node rounding; it exists
// for the finite-difference oracle, which needs forward evaluations whose
// noise floor sits well below the gradient tolerances being checked.
//
// Graphs are single-threaded. Distinct graphs may run concurrently as long as
// bound Parameters are not updated meanwhile.
class Graph {
 public:
  enum class Precision { f32, f64 };

  explicit Graph(Precision p = Precision::f32, bool record_grads = true)
      : precision_(p), record_(record_grads) {}

  // Leaves. input() copies a constant; param() binds a Parameter so that
  // backward() accumulates into Parameter::grad when it is trainable.
  Value input(const DenseArray& x);
  Value param(Parameter& p);

  // ---- linear algebra ----
  Value matmul(Value a, Value b);        // [m,k] x [k,n] -> [m,n]
  Value transpose(Value a);              // 2-D
  Value linear(Value x, Value w, Value b) { return add_rowvec(matmul(x, w), b); }

  // ---- elementwise ----
  Value add(Value a, Value b);           // same shape
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value affine(Value a, double s, double c);  // s*a + c
  Value scale(Value a, double s) { return affine(a, s, 0.0); }
  Value sigmoid(Value a);
  Value gelu(Value a);
  Value log(Value a);                    // rejects non-positive inputs
  Value clamp(Value a, double lo, double hi);  // zero gradient where saturated

  // ---- reductions ----
  Value mean(Value a);                   // full mean -> [1]
  Value sum(Value a);                    // full sum  -> [1]
  Value add_scalars(const std::vector<Value>& terms);  // [1] each; one rounding

  // ---- row-structured ops (matrix [r,c] with a length-c vector) ----
  Value add_rowvec(Value m, Value v);
  Value mul_rowvec(Value m, Value v);
  Value softmax_rows(Value a);
  Value layer_norm_rows(Value x, Value gain, Value bias, double eps = 1e-5);

  // ---- shape ops ----
  Value reshape(Value a, std::vector<int> shape);
  Value slice_cols(Value a, int start, int len);
  Value concat_cols(const std::vector<Value>& parts);

  // Cosine similarity of two equally sized values (treated flat), clipped to
  // [lo, hi]. Inputs with norm <= 1e-12 are rejected; the gradient is zero
  // when the raw cosine falls outside the clip range.
  Value clipped_cosine(Value u, Value v, double lo = 0.005, double hi = 0.995);

  // clamp(1 - cosine, lo, hi) fused into one node, so the complement is
  // formed at full precision before the single rounding to storage. Same
  // rejection and saturation rules as clipped_cosine.
  Value clipped_cosine_complement(Value u, Value v, double lo = 0.005, double hi = 0.995);

  // Scalar-root reverse pass. Node gradients are recomputed per call; bound
  // trainable Parameters accumulate across calls.
  void backward(Value root);

  DenseArray value(Value v) const;       // float32 view of a node's value
  double scalar_value(Value v) const;    // [1] nodes; full precision in f64 mode
  DenseArray grad_of(Value v) const;     // node-local gradient after backward()
  const std::vector<int>& shape(Value v) const;
  int node_count() const { return static_cast<int>(nodes_.size()); }
  Precision precision() const { return precision_; }

 private:
  struct Node {
    std::vector<int> shape;
    std::vector<double> val;
    std::vector<double> grad;
    std::function<void()> back;  // empty for leaves
    Parameter* bound = nullptr;
  };

  Value make_node(std::vector<int> shape);
  void store(Value v, std::vector<double> data);
  Node& node(Value v);
  const Node& node(Value v) const;
  void check(Value v) const;

  std::vector<Node> nodes_;
  Precision precision_;
  bool record_;
};

}  // namespace synseg
