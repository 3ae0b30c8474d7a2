#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bielab {

inline constexpr int kMaxDim = 8;

/// Small fixed-capacity vector for points in R^n, n <= 8.
/// Dimension is a runtime value; kernels stay allocation-free.
struct Vec {
  std::array<double, kMaxDim> c{};
  int n = 0;

  Vec() = default;
  explicit Vec(int dim) : n(dim) {}
  Vec(std::initializer_list<double> xs) : n(static_cast<int>(xs.size())) {
    int i = 0;
    for (double x : xs) c[i++] = x;
  }

  double& operator[](int i) { return c[i]; }
  double operator[](int i) const { return c[i]; }

  Vec& operator+=(const Vec& o) {
    for (int i = 0; i < n; ++i) c[i] += o.c[i];
    return *this;
  }
  Vec& operator-=(const Vec& o) {
    for (int i = 0; i < n; ++i) c[i] -= o.c[i];
    return *this;
  }
  Vec& operator*=(double a) {
    for (int i = 0; i < n; ++i) c[i] *= a;
    return *this;
  }

  friend Vec operator+(Vec a, const Vec& b) { return a += b; }
  friend Vec operator-(Vec a, const Vec& b) { return a -= b; }
  friend Vec operator*(double s, Vec a) { return a *= s; }

  double dot(const Vec& o) const {
    double s = 0;
    for (int i = 0; i < n; ++i) s += c[i] * o.c[i];
    return s;
  }
  double norm_sq() const { return dot(*this); }
  double norm() const { return std::sqrt(norm_sq()); }

  static Vec zero(int dim) { return Vec(dim); }
  static Vec unit(int dim, int axis) {
    Vec e(dim);
    e[axis] = 1.0;
    return e;
  }
  /// First n-1 coordinates (horizontal part of a boundary/interior point).
  Vec head(int m) const {
    Vec h(m);
    for (int i = 0; i < m; ++i) h[i] = c[i];
    return h;
  }
};

/// Small dense matrix for kernel Hessians (n x n, n <= 8).
struct Mat {
  std::array<double, kMaxDim * kMaxDim> c{};
  int n = 0;

  Mat() = default;
  explicit Mat(int dim) : n(dim) {}
  double& operator()(int i, int j) { return c[i * kMaxDim + j]; }
  double operator()(int i, int j) const { return c[i * kMaxDim + j]; }

  double trace() const {
    double t = 0;
    for (int i = 0; i < n; ++i) t += (*this)(i, i);
    return t;
  }
  Vec apply(const Vec& x) const {
    Vec y(n);
    for (int i = 0; i < n; ++i) {
      double s = 0;
      for (int j = 0; j < n; ++j) s += (*this)(i, j) * x[j];
      y[i] = s;
    }
    return y;
  }
  double frob_norm() const {
    double s = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) s += (*this)(i, j) * (*this)(i, j);
    return std::sqrt(s);
  }
  Mat& operator+=(const Mat& o) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) (*this)(i, j) += o(i, j);
    return *this;
  }
  Mat& operator-=(const Mat& o) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) (*this)(i, j) -= o(i, j);
    return *this;
  }
  Mat& operator*=(double a) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) (*this)(i, j) *= a;
    return *this;
  }
};

/// Deterministic RNG used by all experiments; seed recorded in reports.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0x9e3779b97f4a7c15ULL) : eng_(seed) {}
  double uniform(double a = 0.0, double b = 1.0) {
    return std::uniform_real_distribution<double>(a, b)(eng_);
  }
  double normal(double mu = 0.0, double sigma = 1.0) {
    return std::normal_distribution<double>(mu, sigma)(eng_);
  }
  int uniform_int(int a, int b) {  // inclusive
    return std::uniform_int_distribution<int>(a, b)(eng_);
  }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double residual = 0;  // rms of fit residuals
};

/// Least-squares line through (x_i, y_i).
inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("linear_fit: need >= 2 matching points");
  const double m = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double det = m * sxx - sx * sx;
  if (std::abs(det) < 1e-14) throw std::invalid_argument("linear_fit: degenerate abscissae");
  LinearFit f;
  f.slope = (m * sxy - sx * sy) / det;
  f.intercept = (sy * sxx - sx * sxy) / det;
  double rss = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.slope * x[i] + f.intercept);
    rss += r * r;
  }
  f.residual = std::sqrt(rss / m);
  return f;
}

/// 5-point Gauss-Legendre nodes and weights on [-1, 1].
inline double gauss5_node(int q) {
  constexpr double x[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                           0.5384693101056831, 0.9061798459386640};
  return x[q];
}
inline double gauss5_weight(int q) {
  constexpr double w[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                           0.4786286704993665, 0.2369268850561891};
  return w[q];
}

/// Composite Simpson on [a,b] with m (even) intervals.
inline double simpson(const std::function<double(double)>& f, double a, double b, int m = 64) {
  if (m % 2) ++m;
  const double h = (b - a) / m;
  double s = f(a) + f(b);
  for (int i = 1; i < m; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// Richardson extrapolation to t=0 of samples v(t_k), t_k = t0 * ratio^{-k},
/// assuming v(t) = L + c1 t + c2 t^2 + ...
inline double richardson_limit(std::vector<double> v, double ratio = 2.0) {
  if (v.empty()) throw std::invalid_argument("richardson_limit: empty ladder");
  // column p eliminates the t^p term
  for (size_t p = 1; p < v.size(); ++p) {
    const double w = std::pow(ratio, static_cast<double>(p));
    for (size_t k = 0; k + p < v.size(); ++k) v[k] = (w * v[k + 1] - v[k]) / (w - 1.0);
  }
  return v[0];
}

/// Restarted GMRES for a matrix-free operator; returns the solution.
/// `apply` must be linear; residual/iterations are reported through *info.
struct GmresInfo {
  double residual = 0;
  int iterations = 0;
  bool converged = false;
};

inline Eigen::VectorXd gmres(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply,
                             const Eigen::VectorXd& b, double tol = 1e-10, int max_iter = 400,
                             int restart = 80, GmresInfo* info = nullptr) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const auto m = b.size();
  VectorXd x = VectorXd::Zero(m);
  const double bnorm = b.norm();
  GmresInfo inf;
  if (bnorm == 0.0) {
    if (info) *info = GmresInfo{0.0, 0, true};
    return x;
  }
  int total_it = 0;
  while (total_it < max_iter) {
    VectorXd r = b - apply(x);
    double beta = r.norm();
    if (beta / bnorm < tol) {
      inf = {beta / bnorm, total_it, true};
      if (info) *info = inf;
      return x;
    }
    const int k_max = std::min<int>(restart, max_iter - total_it);
    MatrixXd V(m, k_max + 1);
    MatrixXd H = MatrixXd::Zero(k_max + 1, k_max);
    std::vector<double> cs(k_max), sn(k_max);
    VectorXd g = VectorXd::Zero(k_max + 1);
    V.col(0) = r / beta;
    g(0) = beta;
    int k = 0;
    for (; k < k_max; ++k) {
      VectorXd w = apply(V.col(k));
      for (int i = 0; i <= k; ++i) {
        H(i, k) = w.dot(V.col(i));
        w -= H(i, k) * V.col(i);
      }
      H(k + 1, k) = w.norm();
      if (H(k + 1, k) > 1e-300) V.col(k + 1) = w / H(k + 1, k);
      // apply accumulated Givens rotations
      for (int i = 0; i < k; ++i) {
        const double t = cs[i] * H(i, k) + sn[i] * H(i + 1, k);
        H(i + 1, k) = -sn[i] * H(i, k) + cs[i] * H(i + 1, k);
        H(i, k) = t;
      }
      const double denom = std::hypot(H(k, k), H(k + 1, k));
      cs[k] = H(k, k) / denom;
      sn[k] = H(k + 1, k) / denom;
      H(k, k) = denom;
      H(k + 1, k) = 0;
      g(k + 1) = -sn[k] * g(k);
      g(k) = cs[k] * g(k);
      ++total_it;
      if (std::abs(g(k + 1)) / bnorm < tol) {
        ++k;
        break;
      }
    }
    // back substitution
    VectorXd y(k);
    for (int i = k - 1; i >= 0; --i) {
      double s = g(i);
      for (int j = i + 1; j < k; ++j) s -= H(i, j) * y(j);
      y(i) = s / H(i, i);
    }
    x += V.leftCols(k) * y;
    const double res = (b - apply(x)).norm() / bnorm;
    inf = {res, total_it, res < tol};
    if (inf.converged) break;
  }
  if (info) *info = inf;
  return x;
}

}  // namespace bielab
