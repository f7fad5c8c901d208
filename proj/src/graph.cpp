#include "synseg/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace synseg {

namespace {

constexpr double kSqrt2Pi = 2.5066282746310002;

std::string dims2(const std::vector<int>& a, const std::vector<int>& b) {
  return shape_to_string(a) + ", " + shape_to_string(b);
}

}  // namespace

// ---------------------------------------------------------------------------
// Node plumbing
// ---------------------------------------------------------------------------

Value Graph::make_node(std::vector<int> shape) {
  Node n;
  n.shape = std::move(shape);
  const size_t count = static_cast<size_t>(shape_numel(n.shape));
  n.val.assign(count, 0.0);
  n.grad.assign(count, 0.0);
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

void Graph::store(Value v, std::vector<double> data) {
  Node& n = node(v);
  if (data.size() != n.val.size())
    throw std::logic_error("Graph::store: size mismatch");
  if (precision_ == Precision::f32) {
    for (auto& x : data) x = static_cast<double>(static_cast<float>(x));
  }
  n.val = std::move(data);
}

void Graph::check(Value v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Graph: value handle does not belong to this graph");
}

Graph::Node& Graph::node(Value v) {
  check(v);
  return nodes_[static_cast<size_t>(v.id)];
}

const Graph::Node& Graph::node(Value v) const {
  check(v);
  return nodes_[static_cast<size_t>(v.id)];
}

Value Graph::input(const DenseArray& x) {
  Value v = make_node(x.shape());
  std::vector<double> d(x.data().begin(), x.data().end());
  node(v).val = std::move(d);  // exact widening; no rounding needed
  return v;
}

Value Graph::param(Parameter& p) {
  Value v = input(p.value);
  node(v).bound = &p;
  return v;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Value Graph::matmul(Value a, Value b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.shape.size() != 2 || nb.shape.size() != 2)
    throw std::invalid_argument("matmul: operands must be 2-D, got " + dims2(na.shape, nb.shape));
  const int m = na.shape[0], k = na.shape[1], k2 = nb.shape[0], n = nb.shape[1];
  if (k != k2)
    throw std::invalid_argument("matmul: inner extents differ (" + dims2(na.shape, nb.shape) + ")");

  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  {
    const auto& A = node(a).val;
    const auto& B = node(b).val;
    for (int i = 0; i < m; ++i)
      for (int kk = 0; kk < k; ++kk) {
        const double aik = A[static_cast<size_t>(i) * k + kk];
        const double* brow = &B[static_cast<size_t>(kk) * n];
        double* orow = &out[static_cast<size_t>(i) * n];
        for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
      }
  }
  Value v = make_node({m, n});
  store(v, std::move(out));
  if (record_)
    node(v).back = [this, a, b, v, m, k, n]() {
      const auto& go = node(v).grad;
      const auto& A = node(a).val;
      const auto& B = node(b).val;
      auto& ga = node(a).grad;
      auto& gb = node(b).grad;
      // dA = go * B^T
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double g = go[static_cast<size_t>(i) * n + j];
          if (g == 0.0) continue;
          const double* brow = &B[0];
          for (int kk = 0; kk < k; ++kk)
            ga[static_cast<size_t>(i) * k + kk] += g * brow[static_cast<size_t>(kk) * n + j];
        }
      // dB = A^T * go
      for (int kk = 0; kk < k; ++kk)
        for (int i = 0; i < m; ++i) {
          const double aik = A[static_cast<size_t>(i) * k + kk];
          if (aik == 0.0) continue;
          const double* grow = &go[static_cast<size_t>(i) * n];
          double* gbrow = &gb[static_cast<size_t>(kk) * n];
          for (int j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
        }
    };
  return v;
}

Value Graph::transpose(Value a) {
  const Node& na = node(a);
  if (na.shape.size() != 2)
    throw std::invalid_argument("transpose: operand must be 2-D, got " + shape_to_string(na.shape));
  const int r = na.shape[0], c = na.shape[1];
  std::vector<double> out(static_cast<size_t>(r) * c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<size_t>(j) * r + i] = na.val[static_cast<size_t>(i) * c + j];
  Value v = make_node({c, r});
  store(v, std::move(out));
  if (record_)
    node(v).back = [this, a, v, r, c]() {
      const auto& go = node(v).grad;
      auto& ga = node(a).grad;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          ga[static_cast<size_t>(i) * c + j] += go[static_cast<size_t>(j) * r + i];
    };
  return v;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

static void require_same_shape(const char* op, const std::vector<int>& a,
                               const std::vector<int>& b) {
  if (a != b)
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + dims2(a, b) + ")");
}

Value Graph::add(Value a, Value b) {
  require_same_shape("add", node(a).shape, node(b).shape);
  const auto& A = node(a).val;
  const auto& B = node(b).val;
  std::vector<double> out(A.size());
  for (size_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i];
  Value v = make_node(node(a).shape);
  store(v, std::move(out));
  if (record_)
    node(v).back = [this, a, b, v]() {
      const auto& go = node(v).grad;
      auto& ga = node(a).grad;
      auto& gb = node(b).grad;
      for (size_t i = 0; i < go.size(); ++i) {
        ga[i] += go[i];
        gb[i] += go[i];
      }
    };
  return v;
}

Value Graph::sub(Value a, Value b) {
  require_same_shape("sub", node(a).shape, node(b).shape);
  const auto& A = node(a).val;
  const auto& B = node(b).val;
  std::vector<double> out(A.size());
  for (size_t i = 0; i < A.size(); ++i) out[i] = A[i] - B[i];
  Value v = make_node(node(a).shape);
  store(v, std::move(out));
  if (record_)
    node(v).back = [this, a, b, v]() {
      const auto& go = node(v).grad;
      auto& ga = node(a).grad;
      auto& gb = node(b).grad;
      for (size_t i = 0; i < go.size(); ++i) {
        ga[i] += go[i];
        gb[i] -= go[i];
      }
    };
  return v;
}

Value Graph::mul(Value a, Value b) {
  require_same_shape("mul", node(a).shape, node(b).shape);
  const auto& A = node(a).val;
  const auto& B = node(b).val;
  std::vector<double> out(A.size());
  for (size_t i = 0; i < A.size(); ++i) out[i] = A[i] * B[i];
  Value v = make_node(node(a).shape);
  store(v, std::move(out));
  if (record_)
    node(v).back = [this, a, b, v]() {
      const auto& go = node(v).grad;
      const auto& A = node(a).val;
      const auto& B = node(b).val;
      auto& ga = node(a).grad;
      auto& gb = node(b).grad;
      for (size_t i = 0; i < go.size(); ++i) {
        ga[i] += go[i] * B[i];
        gb[i] += go[i] * A[i];
      }
    };
  return v;
}

Value Graph::affine(Value a, double s, double c) {
  const auto& A = node(a).val;
  std::vector<double> out(A.size());
  for (size_t i = 0; i < A.size(); ++i) out[i] = s * A[i] + c;
  Value v = make_node(node(a).shape);
  store(v, std::move(out));
  if (record_)
    node(v).back = [this, a, v, s]() {
      const auto& go = node(v).grad;
      auto& ga = node(a).grad;
      for (size_t i = 0; i < go.size(); ++i) ga[i] += s * go[i];
    };
  return v;
}

Value Graph::sigmoid(Value a) {
  const auto& A = node(a).val;
  std::vector<double> out(A.size());
  for (size_t i = 0; i < A.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-A[i]));
  Value v = make_node(node(a).shape);
  store(v, std::move(out));
  if (record_)
    node(v).back = [this, a, v]() {
      const auto& go = node(v).grad;
      const auto& s = node(v).val;
      auto& ga = node(a).grad;
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * s[i] * (1.0 - s[i]);
    };
  return v;
}

Value Graph::gelu(Value a) {
  const auto& A = node(a).val;
  std::vector<double> out(A.size());
  for (size_t i = 0; i < A.size(); ++i)
    out[i] = 0.5 * A[i] * (1.0 + std::erf(A[i] * M_SQRT1_2));
  Value v = make_node(node(a).shape);
  store(v, std::move(out));
  if (record_)
    node(v).back = [this, a, v]() {
      const auto& go = node(v).grad;
      const auto& x = node(a).val;
      auto& ga = node(a).grad;
      for (size_t i = 0; i < go.size(); ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(x[i] * M_SQRT1_2));
        const double pdf = std::exp(-0.5 * x[i] * x[i]) / kSqrt2Pi;
        ga[i] += go[i] * (cdf + x[i] * pdf);
      }
    };
  return v;
}

Value Graph::log(Value a) {
  const auto& A = node(a).val;
  std::vector<double> out(A.size());
  for (size_t i = 0; i < A.size(); ++i) {
    if (!(A[i] > 0.0))
      throw std::domain_error("log: input must be strictly positive, got " +
                              std::to_string(A[i]) + " (upstream clipping should prevent this)");
    out[i] = std::log(A[i]);
  }
  Value v = make_node(node(a).shape);
  store(v, std::move(out));
  if (record_)
    node(v).back = [this, a, v]() {
      const auto& go = node(v).grad;
      const auto& x = node(a).val;
      auto& ga = node(a).grad;
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] / x[i];
    };
  return v;
}

Value Graph::clamp(Value a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  const auto& A = node(a).val;
  std::vector<double> out(A.size());
  for (size_t i = 0; i < A.size(); ++i) out[i] = std::min(std::max(A[i], lo), hi);
  Value v = make_node(node(a).shape);
  store(v, std::move(out));
  if (record_)
    node(v).back = [this, a, v, lo, hi]() {
      const auto& go = node(v).grad;
      const auto& x = node(a).val;
      auto& ga = node(a).grad;
      for (size_t i = 0; i < go.size(); ++i)
        if (x[i] >= lo && x[i] <= hi) ga[i] += go[i];
    };
  return v;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Value Graph::sum(Value a) {
  const auto& A = node(a).val;
  double s = 0.0;
  for (double x : A) s += x;
  Value v = make_node({1});
  store(v, {s});
  if (record_)
    node(v).back = [this, a, v]() {
      const double g = node(v).grad[0];
      auto& ga = node(a).grad;
      for (auto& x : ga) x += g;
    };
  return v;
}

Value Graph::add_scalars(const std::vector<Value>& terms) {
  if (terms.empty()) throw std::invalid_argument("add_scalars: empty term list");
  double s = 0.0;
  for (Value t : terms) {
    if (node(t).val.size() != 1) throw std::invalid_argument("add_scalars: non-scalar term");
    s += node(t).val[0];
  }
  Value v = make_node({1});
  store(v, {s});
  if (record_) {
    std::vector<Value> captured = terms;
    node(v).back = [this, captured, v]() {
      const double g = node(v).grad[0];
      for (Value t : captured) node(t).grad[0] += g;
    };
  }
  return v;
}

Value Graph::mean(Value a) {
  const auto& A = node(a).val;
  double s = 0.0;
  for (double x : A) s += x;
  const double n = static_cast<double>(A.size());
  Value v = make_node({1});
  store(v, {s / n});
  if (record_)
    node(v).back = [this, a, v, n]() {
      const double g = node(v).grad[0] / n;
      auto& ga = node(a).grad;
      for (auto& x : ga) x += g;
    };
  return v;
}

// ---------------------------------------------------------------------------
// Row-structured ops
// ---------------------------------------------------------------------------

static void require_matrix_rowvec(const char* op, const std::vector<int>& m, int64_t vlen) {
  if (m.size() != 2)
    throw std::invalid_argument(std::string(op) + ": matrix operand must be 2-D, got " +
                                shape_to_string(m));
  if (vlen != m[1])
    throw std::invalid_argument(std::string(op) + ": vector length " + std::to_string(vlen) +
                                " does not match column count of " + shape_to_string(m));
}

Value Graph::add_rowvec(Value m, Value vvec) {
  const Node& nm = node(m);
  const Node& nv = node(vvec);
  require_matrix_rowvec("add_rowvec", nm.shape, static_cast<int64_t>(nv.val.size()));
  const int r = nm.shape[0], c = nm.shape[1];
  std::vector<double> out(nm.val.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<size_t>(i) * c + j] = nm.val[static_cast<size_t>(i) * c + j] + nv.val[j];
  Value v = make_node(nm.shape);
  store(v, std::move(out));
  if (record_)
    node(v).back = [this, m, vvec, v, r, c]() {
      const auto& go = node(v).grad;
      auto& gm = node(m).grad;
      auto& gv = node(vvec).grad;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
          const double g = go[static_cast<size_t>(i) * c + j];
          gm[static_cast<size_t>(i) * c + j] += g;
          gv[j] += g;
        }
    };
  return v;
}

Value Graph::mul_rowvec(Value m, Value vvec) {
  const Node& nm = node(m);
  const Node& nv = node(vvec);
  require_matrix_rowvec("mul_rowvec", nm.shape, static_cast<int64_t>(nv.val.size()));
  const int r = nm.shape[0], c = nm.shape[1];
  std::vector<double> out(nm.val.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<size_t>(i) * c + j] = nm.val[static_cast<size_t>(i) * c + j] * nv.val[j];
  Value v = make_node(nm.shape);
  store(v, std::move(out));
  if (record_)
    node(v).back = [this, m, vvec, v, r, c]() {
      const auto& go = node(v).grad;
      const auto& M = node(m).val;
      const auto& V = node(vvec).val;
      auto& gm = node(m).grad;
      auto& gv = node(vvec).grad;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
          const double g = go[static_cast<size_t>(i) * c + j];
          gm[static_cast<size_t>(i) * c + j] += g * V[j];
          gv[j] += g * M[static_cast<size_t>(i) * c + j];
        }
    };
  return v;
}

Value Graph::softmax_rows(Value a) {
  const Node& na = node(a);
  if (na.shape.size() != 2)
    throw std::invalid_argument("softmax_rows: operand must be 2-D, got " +
                                shape_to_string(na.shape));
  const int r = na.shape[0], c = na.shape[1];
  std::vector<double> out(na.val.size());
  for (int i = 0; i < r; ++i) {
    const double* row = &na.val[static_cast<size_t>(i) * c];
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < c; ++j) {
      const double e = std::exp(row[j] - mx);
      out[static_cast<size_t>(i) * c + j] = e;
      denom += e;
    }
    for (int j = 0; j < c; ++j) out[static_cast<size_t>(i) * c + j] /= denom;
  }
  Value v = make_node(na.shape);
  store(v, std::move(out));
  if (record_)
    node(v).back = [this, a, v, r, c]() {
      const auto& go = node(v).grad;
      const auto& p = node(v).val;
      auto& ga = node(a).grad;
      for (int i = 0; i < r; ++i) {
        const size_t base = static_cast<size_t>(i) * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += go[base + j] * p[base + j];
        for (int j = 0; j < c; ++j) ga[base + j] += p[base + j] * (go[base + j] - dot);
      }
    };
  return v;
}

Value Graph::layer_norm_rows(Value x, Value gain, Value bias, double eps) {
  const Node& nx = node(x);
  const Node& ng = node(gain);
  const Node& nb = node(bias);
  require_matrix_rowvec("layer_norm_rows", nx.shape, static_cast<int64_t>(ng.val.size()));
  require_matrix_rowvec("layer_norm_rows", nx.shape, static_cast<int64_t>(nb.val.size()));
  const int r = nx.shape[0], c = nx.shape[1];
  std::vector<double> out(nx.val.size());
  for (int i = 0; i < r; ++i) {
    const double* row = &nx.val[static_cast<size_t>(i) * c];
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += row[j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= c;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < c; ++j)
      out[static_cast<size_t>(i) * c + j] = (row[j] - mu) * inv * ng.val[j] + nb.val[j];
  }
  Value v = make_node(nx.shape);
  store(v, std::move(out));
  if (record_)
    node(v).back = [this, x, gain, bias, v, r, c, eps]() {
      const auto& go = node(v).grad;
      const auto& X = node(x).val;
      const auto& G = node(gain).val;
      auto& gx = node(x).grad;
      auto& gg = node(gain).grad;
      auto& gb = node(bias).grad;
      for (int i = 0; i < r; ++i) {
        const size_t base = static_cast<size_t>(i) * c;
        double mu = 0.0;
        for (int j = 0; j < c; ++j) mu += X[base + j];
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) var += (X[base + j] - mu) * (X[base + j] - mu);
        var /= c;
        const double inv = 1.0 / std::sqrt(var + eps);
        // y = normalized row; dy = upstream grad through the gain
        double mean_dy = 0.0, mean_dyy = 0.0;
        for (int j = 0; j < c; ++j) {
          const double y = (X[base + j] - mu) * inv;
          const double dy = go[base + j] * G[j];
          mean_dy += dy;
          mean_dyy += dy * y;
          gg[j] += go[base + j] * y;
          gb[j] += go[base + j];
        }
        mean_dy /= c;
        mean_dyy /= c;
        for (int j = 0; j < c; ++j) {
          const double y = (X[base + j] - mu) * inv;
          const double dy = go[base + j] * G[j];
          gx[base + j] += inv * (dy - mean_dy - y * mean_dyy);
        }
      }
    };
  return v;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

Value Graph::reshape(Value a, std::vector<int> shape) {
  if (shape_numel(shape) != static_cast<int64_t>(node(a).val.size()))
    throw std::invalid_argument("reshape: element count of " + shape_to_string(node(a).shape) +
                                " does not match target " + shape_to_string(shape));
  std::vector<double> copy = node(a).val;  // same elements, same order; no rounding needed
  Value v = make_node(std::move(shape));
  node(v).val = std::move(copy);
  if (record_)
    node(v).back = [this, a, v]() {
      const auto& go = node(v).grad;
      auto& ga = node(a).grad;
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    };
  return v;
}

Value Graph::slice_cols(Value a, int start, int len) {
  const Node& na = node(a);
  if (na.shape.size() != 2)
    throw std::invalid_argument("slice_cols: operand must be 2-D, got " +
                                shape_to_string(na.shape));
  const int r = na.shape[0], c = na.shape[1];
  if (start < 0 || len <= 0 || start + len > c)
    throw std::invalid_argument("slice_cols: range [" + std::to_string(start) + ", " +
                                std::to_string(start + len) + ") out of bounds for " +
                                shape_to_string(na.shape));
  std::vector<double> out(static_cast<size_t>(r) * len);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < len; ++j)
      out[static_cast<size_t>(i) * len + j] = na.val[static_cast<size_t>(i) * c + start + j];
  Value v = make_node({r, len});
  node(v).val = std::move(out);
  if (record_)
    node(v).back = [this, a, v, r, c, start, len]() {
      const auto& go = node(v).grad;
      auto& ga = node(a).grad;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < len; ++j)
          ga[static_cast<size_t>(i) * c + start + j] += go[static_cast<size_t>(i) * len + j];
    };
  return v;
}

Value Graph::concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  const int r = node(parts[0]).shape.size() == 2
                    ? node(parts[0]).shape[0]
                    : throw std::invalid_argument("concat_cols: operands must be 2-D");
  int total = 0;
  for (Value p : parts) {
    const Node& np = node(p);
    if (np.shape.size() != 2 || np.shape[0] != r)
      throw std::invalid_argument("concat_cols: row counts differ");
    total += np.shape[1];
  }
  std::vector<double> out(static_cast<size_t>(r) * total);
  int off = 0;
  for (Value p : parts) {
    const Node& np = node(p);
    const int c = np.shape[1];
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        out[static_cast<size_t>(i) * total + off + j] = np.val[static_cast<size_t>(i) * c + j];
    off += c;
  }
  Value v = make_node({r, total});
  node(v).val = std::move(out);
  if (record_) {
    std::vector<Value> ps = parts;
    node(v).back = [this, ps, v, r, total]() {
      const auto& go = node(v).grad;
      int off2 = 0;
      for (Value p : ps) {
        const int c = node(p).shape[1];
        auto& gp = node(p).grad;
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            gp[static_cast<size_t>(i) * c + j] += go[static_cast<size_t>(i) * total + off2 + j];
        off2 += c;
      }
    };
  }
  return v;
}

// ---------------------------------------------------------------------------
// Clipped cosine
// ---------------------------------------------------------------------------

Value Graph::clipped_cosine(Value u, Value v, double lo, double hi) {
  const Node& nu = node(u);
  const Node& nv = node(v);
  if (nu.val.size() != nv.val.size())
    throw std::invalid_argument("clipped_cosine: element counts differ (" +
                                dims2(nu.shape, nv.shape) + ")");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (size_t i = 0; i < nu.val.size(); ++i) {
    dot += nu.val[i] * nv.val[i];
    uu += nu.val[i] * nu.val[i];
    vv += nv.val[i] * nv.val[i];
  }
  const double un = std::sqrt(uu), vn = std::sqrt(vv);
  if (un <= 1e-12 || vn <= 1e-12)
    throw std::invalid_argument("clipped_cosine: input norm below 1e-12 (" +
                                std::to_string(un) + ", " + std::to_string(vn) + ")");
  const double raw = dot / (un * vn);
  const double clipped = std::min(std::max(raw, lo), hi);
  Value out = make_node({1});
  store(out, {clipped});
  if (record_)
    node(out).back = [this, u, v, out, lo, hi]() {
      const auto& U = node(u).val;
      const auto& V = node(v).val;
      double dot2 = 0.0, uu2 = 0.0, vv2 = 0.0;
      for (size_t i = 0; i < U.size(); ++i) {
        dot2 += U[i] * V[i];
        uu2 += U[i] * U[i];
        vv2 += V[i] * V[i];
      }
      const double un2 = std::sqrt(uu2), vn2 = std::sqrt(vv2);
      const double raw2 = dot2 / (un2 * vn2);
      if (raw2 < lo || raw2 > hi) return;  // clamp saturated: zero gradient
      const double g = node(out).grad[0];
      const double inv = 1.0 / (un2 * vn2);
      auto& gu = node(u).grad;
      auto& gv = node(v).grad;
      for (size_t i = 0; i < U.size(); ++i) {
        gu[i] += g * (V[i] * inv - raw2 * U[i] / uu2);
        gv[i] += g * (U[i] * inv - raw2 * V[i] / vv2);
      }
    };
  return out;
}

Value Graph::clipped_cosine_complement(Value u, Value v, double lo, double hi) {
  const Node& nu = node(u);
  const Node& nv = node(v);
  if (nu.val.size() != nv.val.size())
    throw std::invalid_argument("clipped_cosine_complement: element counts differ (" +
                                dims2(nu.shape, nv.shape) + ")");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (size_t i = 0; i < nu.val.size(); ++i) {
    dot += nu.val[i] * nv.val[i];
    uu += nu.val[i] * nu.val[i];
    vv += nv.val[i] * nv.val[i];
  }
  const double un = std::sqrt(uu), vn = std::sqrt(vv);
  if (un <= 1e-12 || vn <= 1e-12)
    throw std::invalid_argument("clipped_cosine_complement: input norm below 1e-12 (" +
                                std::to_string(un) + ", " + std::to_string(vn) + ")");
  const double raw = 1.0 - dot / (un * vn);
  const double clipped = std::min(std::max(raw, lo), hi);
  Value out = make_node({1});
  store(out, {clipped});
  if (record_)
    node(out).back = [this, u, v, out, lo, hi]() {
      const auto& U = node(u).val;
      const auto& V = node(v).val;
      double dot2 = 0.0, uu2 = 0.0, vv2 = 0.0;
      for (size_t i = 0; i < U.size(); ++i) {
        dot2 += U[i] * V[i];
        uu2 += U[i] * U[i];
        vv2 += V[i] * V[i];
      }
      const double un2 = std::sqrt(uu2), vn2 = std::sqrt(vv2);
      const double cosv = dot2 / (un2 * vn2);
      const double raw2 = 1.0 - cosv;
      if (raw2 < lo || raw2 > hi) return;  // clamp saturated: zero gradient
      const double g = node(out).grad[0];
      const double inv = 1.0 / (un2 * vn2);
      auto& gu = node(u).grad;
      auto& gv = node(v).grad;
      for (size_t i = 0; i < U.size(); ++i) {
        gu[i] -= g * (V[i] * inv - cosv * U[i] / uu2);
        gv[i] -= g * (U[i] * inv - cosv * V[i] / vv2);
      }
    };
  return out;
}

// ---------------------------------------------------------------------------
// Backward and readout
// ---------------------------------------------------------------------------

void Graph::backward(Value root) {
  if (!record_)
    throw std::logic_error("backward: graph was created without gradient recording");
  Node& rn = node(root);
  if (rn.val.size() != 1)
    throw std::invalid_argument("backward: root must be a scalar, got shape " +
                                shape_to_string(rn.shape));
  for (auto& n : nodes_)
    for (auto& g : n.grad) g = 0.0;
  rn.grad[0] = 1.0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.back) n.back();
  }
  // Flush bound parameter gradients (accumulating; float32 storage).
  for (int id = 0; id <= root.id; ++id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.bound && n.bound->trainable) {
      auto& pg = n.bound->grad.data();
      for (size_t i = 0; i < pg.size(); ++i)
        pg[i] = static_cast<float>(static_cast<double>(pg[i]) + n.grad[i]);
    }
  }
}

DenseArray Graph::value(Value v) const {
  const Node& n = node(v);
  std::vector<float> data(n.val.size());
  for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(n.val[i]);
  return DenseArray(n.shape, std::move(data));
}

double Graph::scalar_value(Value v) const {
  const Node& n = node(v);
  if (n.val.size() != 1)
    throw std::invalid_argument("scalar_value: node is not scalar, shape " +
                                shape_to_string(n.shape));
  return n.val[0];
}

DenseArray Graph::grad_of(Value v) const {
  const Node& n = node(v);
  std::vector<float> data(n.grad.size());
  for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(n.grad[i]);
  return DenseArray(n.shape, std::move(data));
}

const std::vector<int>& Graph::shape(Value v) const { return node(v).shape; }

}  // namespace synseg
