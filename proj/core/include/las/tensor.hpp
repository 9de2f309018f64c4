#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace las {

// Dense row-major tensor of 64-bit floats. All computation is done in
// doubles; 32-bit storage exists only in the checkpoint container.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s);
  Tensor(std::vector<std::int64_t> s, std::vector<double> values);

  static Tensor scalar(double x) { return Tensor({1}, {x}); }
  static Tensor zeros(std::vector<std::int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<std::int64_t> s, double x);

  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  // Rank-2 accessors.
  std::int64_t rows() const { return shape[0]; }
  std::int64_t cols() const { return shape[1]; }
  double& at(std::int64_t r, std::int64_t c) { return v[static_cast<std::size_t>(r * cols() + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return v[static_cast<std::size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

std::int64_t numel_of(const std::vector<std::int64_t>& shape);

// ---- kernels -------------------------------------------------------------
// Pure forward math shared by the autodiff tape and the plain inference
// path, so both produce bit-identical values.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
Tensor tanh_t(const Tensor& a);
Tensor sigmoid_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor relu_t(const Tensor& a);

// W [m x n] * x [n] -> [m]
Tensor matvec(const Tensor& w, const Tensor& x);
// A [m x k] * B^T, B [n x k] -> [m x n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// m [r x c] with q [c] added to every row
Tensor add_rowbcast(const Tensor& m, const Tensor& q);
// m [r x c], w [r] -> sum_j w_j * m[j,:]  (i.e. m^T w)
Tensor matt_vec(const Tensor& m, const Tensor& w);

Tensor concat(const Tensor& a, const Tensor& b);  // rank-1
Tensor slice(const Tensor& a, std::int64_t begin, std::int64_t len);  // rank-1
Tensor stack_rows(const std::vector<Tensor>& rows);
Tensor row(const Tensor& m, std::int64_t r);

double dot(const Tensor& a, const Tensor& b);
double sum(const Tensor& a);
double l2_norm(const Tensor& a);

// Numerically stable softmax / log-softmax over a rank-1 tensor
// (max-subtraction). Non-finite input raises NumericError.
Tensor softmax(const Tensor& v);
Tensor log_softmax(const Tensor& v);

// 1-D convolution with symmetric same-padding (left pad floor((K-1)/2)).
// signal: [U] or [U x C]; filters: [F x K] (C == 1) or [F x C x K].
// Output [U x F], linear in the signal.
Tensor conv1d_same(const Tensor& signal, const Tensor& filters);

}  // namespace las
