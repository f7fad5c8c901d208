#pragma once

// Reference implementations for the test suites: plain scalar loops over
// std::vector<double>, no Graph, no DenseArray math. Anything checked against
// these must not share code with them.

#include <cmath>
#include <cstdint>
#include <vector>

namespace synseg::testing {

inline double clip_cos(double x) { return x < 0.005 ? 0.005 : (x > 0.995 ? 0.995 : x); }

inline double naive_cosine(const std::vector<double>& u, const std::vector<double>& v) {
  double uv = 0, uu = 0, vv = 0;
  for (size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  return uv / (std::sqrt(uu) * std::sqrt(vv));
}

struct NaiveLossTerms {
  double align = 0, cont = 0, back = 0, sep = 0;
};

inline NaiveLossTerms naive_loss_terms(const std::vector<std::vector<double>>& fg,
                                       const std::vector<std::vector<double>>& bg,
                                       const std::vector<std::vector<double>>& text) {
  const size_t n = fg.size();
  NaiveLossTerms out;
  for (size_t i = 0; i < n; ++i) {
    out.align += -std::log(clip_cos(naive_cosine(fg[i], text[i])));
    out.cont += -std::log(1.0 - clip_cos(naive_cosine(fg[i], bg[i])));
  }
  out.align /= static_cast<double>(n);
  out.cont /= static_cast<double>(n);
  for (size_t j = 0; j < n; ++j) {
    for (size_t k = 0; k < n; ++k) {
      out.back += -std::log(clip_cos(naive_cosine(bg[j], bg[k])));
      out.sep += -std::log(1.0 - clip_cos(naive_cosine(fg[j], fg[k])));
    }
  }
  out.back /= static_cast<double>(n * n);
  out.sep /= static_cast<double>(n * n);
  return out;
}

inline double naive_total(const NaiveLossTerms& t, double l1, double l2, double l3, double l4) {
  return l1 * t.align + l2 * t.cont + l3 * t.back + l4 * t.sep;
}

// Row-major [m,k] x [k,n] with the textbook j-inner loop.
inline std::vector<double> naive_matmul(const std::vector<double>& a,
                                        const std::vector<double>& b, int m, int k, int n) {
  std::vector<double> c(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int p = 0; p < k; ++p) {
        s += a[static_cast<size_t>(i) * k + p] * b[static_cast<size_t>(p) * n + j];
      }
      c[static_cast<size_t>(i) * n + j] = s;
    }
  }
  return c;
}

// Per-pixel confusion counting, the slow way: one full pass per class.
inline double brute_force_miou(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& gt,
                               int num_classes, int ignore_label) {
  double sum = 0;
  int present = 0;
  for (int cls = 0; cls < num_classes; ++cls) {
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] == ignore_label) continue;
      const bool in_gt = gt[i] == cls;
      const bool in_pred = pred[i] == cls;
      if (in_gt && in_pred) ++inter;
      if (in_gt || in_pred) ++uni;
    }
    if (uni > 0) {
      sum += static_cast<double>(inter) / static_cast<double>(uni);
      ++present;
    }
  }
  return present == 0 ? 0.0 : sum / present;
}

}  // namespace synseg::testing
