#include "nbm/mat.hpp"

#include <cmath>

namespace nbm {

void matmul_acc(const Mat& a, const Mat& b, Mat& c) {
  // ikj loop order keeps the inner loop contiguous in both b and c.
  const int n = a.rows, k = a.cols, m = b.cols;
  for (int i = 0; i < n; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.row(p);
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt_acc(const Mat& a, const Mat& b, Mat& c) {
  // C[i][j] += dot(a.row(i), b.row(j))
  const int n = a.rows, k = a.cols, m = b.rows;
  for (int i = 0; i < n; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (int j = 0; j < m; ++j) {
      const double* brow = b.row(j);
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

void matmul_tn_acc(const Mat& a, const Mat& b, Mat& c) {
  // C[p][j] += sum_i a[i][p] * b[i][j]
  const int n = a.rows, k = a.cols, m = b.cols;
  for (int i = 0; i < n; ++i) {
    const double* arow = a.row(i);
    const double* brow = b.row(i);
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c.row(p);
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

Mat xavier_uniform(int rows, int cols, std::mt19937_64& rng) {
  Mat m(rows, cols);
  const double limit = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : m.data) v = dist(rng);
  return m;
}

bool all_finite(const Mat& m) {
  for (double v : m.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace nbm
