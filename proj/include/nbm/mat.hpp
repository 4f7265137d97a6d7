#pragma once

#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

namespace nbm {

// Dense row-major matrix of doubles. Small shapes only (the models here top
// out around a few thousand rows by a few hundred columns), so no fancy
// storage or expression templates.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
  size_t size() const { return data.size(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  static Mat zeros(int r, int c) { return Mat(r, c); }
  static Mat filled(int r, int c, double v) {
    Mat m(r, c);
    std::fill(m.data.begin(), m.data.end(), v);
    return m;
  }
};

// C += A * B
void matmul_acc(const Mat& a, const Mat& b, Mat& c);
// C += A * B^T
void matmul_nt_acc(const Mat& a, const Mat& b, Mat& c);
// C += A^T * B
void matmul_tn_acc(const Mat& a, const Mat& b, Mat& c);

inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dims differ");
  Mat c(a.rows, b.cols);
  matmul_acc(a, b, c);
  return c;
}

// Glorot-uniform init, the usual choice for the affine maps here.
Mat xavier_uniform(int rows, int cols, std::mt19937_64& rng);

bool all_finite(const Mat& m);

}  // namespace nbm
