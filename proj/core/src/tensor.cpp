#include "las/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "las/errors.hpp"

namespace las {

std::int64_t numel_of(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
  v.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
}

Tensor::Tensor(std::vector<std::int64_t> s, std::vector<double> values) : shape(std::move(s)), v(std::move(values)) {
  if (numel_of(shape) != static_cast<std::int64_t>(v.size())) {
    throw std::invalid_argument("tensor shape/value length mismatch");
  }
}

Tensor Tensor::full(std::vector<std::int64_t> s, double x) {
  Tensor t(std::move(s));
  std::fill(t.v.begin(), t.v.end(), x);
  return t;
}

bool Tensor::all_finite() const {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.v[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.v[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (double& x : out.v) x *= c;
  return out;
}

Tensor tanh_t(const Tensor& a) {
  Tensor out = a;
  for (double& x : out.v) x = std::tanh(x);
  return out;
}

Tensor sigmoid_t(const Tensor& a) {
  Tensor out = a;
  for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
  return out;
}

Tensor exp_t(const Tensor& a) {
  Tensor out = a;
  for (double& x : out.v) x = std::exp(x);
  return out;
}

Tensor relu_t(const Tensor& a) {
  Tensor out = a;
  for (double& x : out.v) x = x > 0.0 ? x : 0.0;
  return out;
}

Tensor matvec(const Tensor& w, const Tensor& x) {
  if (w.rank() != 2 || x.rank() != 1 || w.cols() != x.dim(0)) {
    throw std::invalid_argument("matvec: need [m x n] * [n], got " + w.shape_str() + " * " + x.shape_str());
  }
  Tensor out({w.rows()});
  for (std::int64_t r = 0; r < w.rows(); ++r) {
    double acc = 0.0;
    const double* wr = w.v.data() + r * w.cols();
    for (std::int64_t c = 0; c < w.cols(); ++c) acc += wr[c] * x.v[static_cast<std::size_t>(c)];
    out.v[static_cast<std::size_t>(r)] = acc;
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: need [m x k] * [n x k]^T, got " + a.shape_str() + " * " + b.shape_str());
  }
  Tensor out({a.rows(), b.rows()});
  for (std::int64_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.v.data() + i * a.cols();
    for (std::int64_t j = 0; j < b.rows(); ++j) {
      const double* bj = b.v.data() + j * b.cols();
      double acc = 0.0;
      for (std::int64_t k = 0; k < a.cols(); ++k) acc += ai[k] * bj[k];
      out.at(i, j) = acc;
    }
  }
  return out;
}

Tensor add_rowbcast(const Tensor& m, const Tensor& q) {
  if (m.rank() != 2 || q.rank() != 1 || m.cols() != q.dim(0)) {
    throw std::invalid_argument("add_rowbcast: got " + m.shape_str() + " + " + q.shape_str());
  }
  Tensor out = m;
  for (std::int64_t r = 0; r < m.rows(); ++r) {
    for (std::int64_t c = 0; c < m.cols(); ++c) out.at(r, c) += q.v[static_cast<std::size_t>(c)];
  }
  return out;
}

Tensor matt_vec(const Tensor& m, const Tensor& w) {
  if (m.rank() != 2 || w.rank() != 1 || m.rows() != w.dim(0)) {
    throw std::invalid_argument("matt_vec: got " + m.shape_str() + "^T * " + w.shape_str());
  }
  Tensor out({m.cols()});
  for (std::int64_t r = 0; r < m.rows(); ++r) {
    const double wr = w.v[static_cast<std::size_t>(r)];
    const double* mr = m.v.data() + r * m.cols();
    for (std::int64_t c = 0; c < m.cols(); ++c) out.v[static_cast<std::size_t>(c)] += wr * mr[c];
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1) throw std::invalid_argument("concat: rank-1 only");
  Tensor out({a.dim(0) + b.dim(0)});
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
  return out;
}

Tensor slice(const Tensor& a, std::int64_t begin, std::int64_t len) {
  if (a.rank() != 1 || begin < 0 || len <= 0 || begin + len > a.dim(0)) {
    throw std::invalid_argument("slice: bad range");
  }
  Tensor out({len});
  std::copy(a.v.begin() + begin, a.v.begin() + begin + len, out.v.begin());
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty");
  const std::int64_t c = rows[0].dim(0);
  Tensor out({static_cast<std::int64_t>(rows.size()), c});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].rank() != 1 || rows[r].dim(0) != c) throw std::invalid_argument("stack_rows: ragged rows");
    std::copy(rows[r].v.begin(), rows[r].v.end(), out.v.begin() + static_cast<std::int64_t>(r) * c);
  }
  return out;
}

Tensor row(const Tensor& m, std::int64_t r) {
  if (m.rank() != 2 || r < 0 || r >= m.rows()) throw std::invalid_argument("row: index out of range");
  Tensor out({m.cols()});
  std::copy(m.v.begin() + r * m.cols(), m.v.begin() + (r + 1) * m.cols(), out.v.begin());
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) acc += a.v[i] * b.v[i];
  return acc;
}

double sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.v) acc += x;
  return acc;
}

double l2_norm(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.v) acc += x * x;
  return std::sqrt(acc);
}

Tensor softmax(const Tensor& x) {
  if (x.rank() != 1 || x.numel() == 0) throw std::invalid_argument("softmax: non-empty rank-1 input required");
  if (!x.all_finite()) throw NumericError("softmax: non-finite input");
  double mx = x.v[0];
  for (double e : x.v) mx = std::max(mx, e);
  Tensor out = x;
  double z = 0.0;
  for (double& e : out.v) {
    e = std::exp(e - mx);
    z += e;
  }
  for (double& e : out.v) e /= z;
  return out;
}

Tensor log_softmax(const Tensor& x) {
  if (x.rank() != 1 || x.numel() == 0) throw std::invalid_argument("log_softmax: non-empty rank-1 input required");
  if (!x.all_finite()) throw NumericError("log_softmax: non-finite input");
  double mx = x.v[0];
  for (double e : x.v) mx = std::max(mx, e);
  double z = 0.0;
  for (double e : x.v) z += std::exp(e - mx);
  const double lz = std::log(z) + mx;
  Tensor out = x;
  for (double& e : out.v) e -= lz;
  return out;
}

Tensor conv1d_same(const Tensor& signal, const Tensor& filters) {
  if (signal.numel() == 0) throw std::invalid_argument("conv1d: empty signal");
  const std::int64_t u = signal.dim(0);
  const std::int64_t c = signal.rank() == 2 ? signal.cols() : 1;
  if (signal.rank() > 2) throw std::invalid_argument("conv1d: signal must be [U] or [U x C]");

  std::int64_t f, fc, k;
  if (filters.rank() == 2) {
    f = filters.dim(0);
    fc = 1;
    k = filters.dim(1);
  } else if (filters.rank() == 3) {
    f = filters.dim(0);
    fc = filters.dim(1);
    k = filters.dim(2);
  } else {
    throw std::invalid_argument("conv1d: filters must be [F x K] or [F x C x K]");
  }
  if (fc != c) throw std::invalid_argument("conv1d: channel mismatch");
  if (k < 1) throw std::invalid_argument("conv1d: filter width must be >= 1");

  const std::int64_t lpad = (k - 1) / 2;
  Tensor out({u, f});
  for (std::int64_t i = 0; i < u; ++i) {
    for (std::int64_t fi = 0; fi < f; ++fi) {
      double acc = 0.0;
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const double* flt = filters.v.data() + (fi * c + ch) * k;
        for (std::int64_t t = 0; t < k; ++t) {
          const std::int64_t src = i + t - lpad;
          if (src < 0 || src >= u) continue;  // zero padding
          acc += flt[t] * signal.v[static_cast<std::size_t>(src * c + ch)];
        }
      }
      out.at(i, fi) = acc;
    }
  }
  return out;
}

}  // namespace las
