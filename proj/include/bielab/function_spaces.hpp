#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <fstream>
#include <numeric>
#include <optional>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "bielab/core.hpp"
#include "bielab/kernels.hpp"

namespace bielab {

// --- exact rational arithmetic (exponent algebra, critical exponents) -----

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Rational() = default;
  Rational(std::int64_t n) : num(n), den(1) {}
  Rational(std::int64_t n, std::int64_t d) : num(n), den(d) { reduce(); }

  void reduce() {
    if (den == 0) throw std::domain_error("Rational: zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const std::int64_t g = std::gcd(std::abs(num), den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }
  static Rational make(__int128 n, __int128 d) {
    if (d < 0) {
      n = -n;
      d = -d;
    }
    __int128 a = n < 0 ? -n : n, b = d;
    while (b) {
      const __int128 t = a % b;
      a = b;
      b = t;
    }
    if (a > 1) {
      n /= a;
      d /= a;
    }
    if (n > INT64_MAX || n < INT64_MIN || d > INT64_MAX)
      throw std::overflow_error("Rational overflow");
    return Rational{static_cast<std::int64_t>(n), static_cast<std::int64_t>(d)};
  }

  friend Rational operator+(const Rational& a, const Rational& b) {
    return make(static_cast<__int128>(a.num) * b.den + static_cast<__int128>(b.num) * a.den,
                static_cast<__int128>(a.den) * b.den);
  }
  friend Rational operator-(const Rational& a, const Rational& b) {
    return make(static_cast<__int128>(a.num) * b.den - static_cast<__int128>(b.num) * a.den,
                static_cast<__int128>(a.den) * b.den);
  }
  friend Rational operator*(const Rational& a, const Rational& b) {
    return make(static_cast<__int128>(a.num) * b.num, static_cast<__int128>(a.den) * b.den);
  }
  friend Rational operator/(const Rational& a, const Rational& b) {
    if (b.num == 0) throw std::domain_error("Rational: division by zero");
    return make(static_cast<__int128>(a.num) * b.den, static_cast<__int128>(a.den) * b.num);
  }
  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num == b.num && a.den == b.den;
  }
  friend bool operator<(const Rational& a, const Rational& b) {
    return static_cast<__int128>(a.num) * b.den < static_cast<__int128>(b.num) * a.den;
  }
  double value() const { return static_cast<double>(num) / den; }

 private:
  Rational(std::int64_t n, std::int64_t d, int) : num(n), den(d) {}
  friend struct RationalRaw;
};

/// Conjugate exponent p' with 1/p + 1/p' = 1.
inline Rational conjugate_exponent(const Rational& p) {
  return p / (p - Rational(1));
}

/// Interpolation exponent algebra: 1/p = (1-th)/p1 + th/p2 and
/// sigma = (1-th) sigma1 + th sigma2, exact in rational arithmetic.
inline std::pair<Rational, Rational> exponent_algebra(const Rational& p1, const Rational& s1,
                                                      const Rational& p2, const Rational& s2,
                                                      const Rational& theta) {
  if (!(Rational(0) < theta) || !(theta < Rational(1)))
    throw std::invalid_argument("exponent_algebra: theta in (0,1) required");
  const Rational one(1);
  const Rational inv_p = (one - theta) / p1 + theta / p2;
  return {one / inv_p, (one - theta) * s1 + theta * s2};
}

// --- grid functions ---------------------------------------------------------

/// Compactly supported function sampled on a uniform grid over a box in R^d.
struct GridFunction {
  int d = 1;
  std::array<int, 4> shape{1, 1, 1, 1};
  Vec origin;  // coordinates of grid point (0,...,0)
  double spacing = 1.0;
  std::vector<double> values;

  static GridFunction zeros(int d, int cells_per_axis, double half_width) {
    if (d < 1 || d > 4) throw std::invalid_argument("GridFunction: 1 <= d <= 4");
    GridFunction g;
    g.d = d;
    g.shape.fill(1);
    for (int j = 0; j < d; ++j) g.shape[j] = cells_per_axis;
    g.spacing = 2.0 * half_width / cells_per_axis;
    g.origin = Vec(d);
    for (int j = 0; j < d; ++j) g.origin[j] = -half_width + 0.5 * g.spacing;
    g.values.assign(g.size(), 0.0);
    return g;
  }

  int size() const {
    int s = 1;
    for (int j = 0; j < d; ++j) s *= shape[j];
    return s;
  }
  double cell_measure() const { return std::pow(spacing, d); }

  Vec point(int flat) const {
    Vec x(d);
    for (int j = 0; j < d; ++j) {
      x[j] = origin[j] + (flat % shape[j]) * spacing;
      flat /= shape[j];
    }
    return x;
  }

  template <class F>
  void fill(F&& f) {
    for (int i = 0; i < size(); ++i) values[i] = f(point(i));
  }

  double integral() const {
    return std::accumulate(values.begin(), values.end(), 0.0) * cell_measure();
  }
  double max_abs() const {
    double m = 0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
  double lp(double p) const {
    double s = 0;
    for (double v : values) s += std::pow(std::abs(v), p);
    return std::pow(s * cell_measure(), 1.0 / p);
  }

  GridFunction& operator+=(const GridFunction& o) {
    for (int i = 0; i < size(); ++i) values[i] += o.values[i];
    return *this;
  }
  GridFunction& operator*=(double a) {
    for (double& v : values) v *= a;
    return *this;
  }
};

inline void grid_to_csv(const GridFunction& g, std::ostream& out) {
  for (int j = 0; j < g.d; ++j) out << "x" << j << ",";
  out << "value\n";
  for (int i = 0; i < g.size(); ++i) {
    const Vec x = g.point(i);
    for (int j = 0; j < g.d; ++j) out << x[j] << ",";
    out << g.values[i] << "\n";
  }
}

/// Compact binary snapshot: int32 d, int32 shape[4], double origin[4],
/// double spacing, then raw values.
inline void grid_to_binary(const GridFunction& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("grid_to_binary: cannot open " + path);
  const std::int32_t d = g.d;
  out.write(reinterpret_cast<const char*>(&d), 4);
  for (int j = 0; j < 4; ++j) {
    const std::int32_t s = g.shape[j];
    out.write(reinterpret_cast<const char*>(&s), 4);
  }
  double o[4] = {0, 0, 0, 0};
  for (int j = 0; j < g.d; ++j) o[j] = g.origin[j];
  out.write(reinterpret_cast<const char*>(o), sizeof(o));
  out.write(reinterpret_cast<const char*>(&g.spacing), 8);
  out.write(reinterpret_cast<const char*>(g.values.data()), 8 * g.values.size());
}

inline GridFunction grid_from_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("grid_from_binary: cannot open " + path);
  GridFunction g;
  std::int32_t d;
  in.read(reinterpret_cast<char*>(&d), 4);
  g.d = d;
  for (int j = 0; j < 4; ++j) {
    std::int32_t s;
    in.read(reinterpret_cast<char*>(&s), 4);
    g.shape[j] = s;
  }
  double o[4];
  in.read(reinterpret_cast<char*>(o), sizeof(o));
  g.origin = Vec(g.d);
  for (int j = 0; j < g.d; ++j) g.origin[j] = o[j];
  in.read(reinterpret_cast<char*>(&g.spacing), 8);
  g.values.assign(g.size(), 0.0);
  in.read(reinterpret_cast<char*>(g.values.data()), 8 * g.values.size());
  return g;
}

// --- Littlewood-Paley partition and projections ------------------------------

/// Radial dyadic partition built from a C^2 cutoff psi0 (1 on [-1/2,1/2],
/// support (-1,1)): band j >= 1 is psi0(2^{-j-1} r) - psi0(2^{-j} r),
/// supported in 2^{j-1} <= r <= 2^{j+1}; band 0 is psi0(r/2). Partial sums
/// telescope: sum_{j<=J} psi_j = psi0(2^{-J-1} r) = 1 for r <= 2^J.
struct LPPartition {
  static double psi0(double r) {
    r = std::abs(r);
    if (r <= 0.5) return 1.0;
    if (r >= 1.0) return 0.0;
    const double u = 2.0 * (r - 0.5);
    return 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
  }
  static double band(int j, double r) {
    if (j < 0) throw std::invalid_argument("LPPartition: band index >= 0");
    if (j == 0) return psi0(0.5 * r);
    return psi0(std::ldexp(r, -j - 1)) - psi0(std::ldexp(r, -j));
  }
};

namespace detail {

/// In-place complex FFT of a d-dimensional array along every axis.
inline void fftn(std::vector<std::complex<double>>& a, const std::array<int, 4>& shape, int d,
                 bool inverse) {
  Eigen::FFT<double> fft;
  int size = 1;
  for (int j = 0; j < d; ++j) size *= shape[j];
  std::vector<std::complex<double>> line, out;
  int stride = 1;
  for (int axis = 0; axis < d; ++axis) {
    const int n = shape[axis];
    line.resize(n);
    out.resize(n);
    const int blocks = size / n;
    for (int b = 0; b < blocks; ++b) {
      // index arithmetic: decompose b into (inner, outer) around `axis`
      const int inner = b % stride;
      const int outer = b / stride;
      const int base = outer * stride * n + inner;
      for (int k = 0; k < n; ++k) line[k] = a[base + k * stride];
      if (inverse)
        fft.inv(out, line);
      else
        fft.fwd(out, line);
      for (int k = 0; k < n; ++k) a[base + k * stride] = out[k];
    }
    stride *= n;
  }
}

inline double freq_norm(int flat, const GridFunction& g) {
  double s = 0;
  for (int j = 0; j < g.d; ++j) {
    int k = flat % g.shape[j];
    flat /= g.shape[j];
    if (k > g.shape[j] / 2) k -= g.shape[j];
    const double xi = 2.0 * std::numbers::pi * k / (g.shape[j] * g.spacing);
    s += xi * xi;
  }
  return std::sqrt(s);
}

}  // namespace detail

/// Largest grid frequency magnitude (corner of the spectral box).
inline double grid_spectral_max(const GridFunction& g) {
  return std::sqrt(static_cast<double>(g.d)) * std::numbers::pi / g.spacing;
}

/// A band is resolvable while its support meets the grid spectrum; the
/// resolvable bands telescope to the identity on grid functions.
inline int max_resolvable_band(const GridFunction& g) {
  const double xi_max = grid_spectral_max(g);
  int j = 0;
  while (std::ldexp(1.0, j - 1) <= xi_max) ++j;
  return j - 1;
}

/// Littlewood-Paley projection S_j f: radial frequency-window multiplier
/// psi_j(|xi|) applied on the grid spectrum.
inline GridFunction lp_project(const GridFunction& f, int j) {
  if (j < 0 || j > max_resolvable_band(f))
    throw std::invalid_argument("lp_project: band " + std::to_string(j) +
                                " not resolvable on this grid");
  std::vector<std::complex<double>> a(f.values.begin(), f.values.end());
  detail::fftn(a, f.shape, f.d, false);
  for (int i = 0; i < f.size(); ++i) a[i] *= LPPartition::band(j, detail::freq_norm(i, f));
  detail::fftn(a, f.shape, f.d, true);
  GridFunction out = f;
  for (int i = 0; i < f.size(); ++i) out.values[i] = a[i].real();
  return out;
}

// --- Lorentz and Triebel-Lizorkin norms --------------------------------------

/// L^{p,r} from the decreasing rearrangement of grid values with cell
/// weights; exact on step functions. L^{p,p} = L^p identically; r = inf
/// (pass r = infinity) gives weak-L^p.
inline double lorentz_norm(const GridFunction& f, double p, double r) {
  if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("lorentz_norm: p in (1,inf)");
  if (!(r >= 1.0)) throw std::invalid_argument("lorentz_norm: r in [1,inf]");
  std::vector<double> v;
  v.reserve(f.values.size());
  for (double x : f.values)
    if (x != 0.0) v.push_back(std::abs(x));
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end(), std::greater<double>());
  const double m = f.cell_measure();
  if (std::isinf(r)) {
    double best = 0;
    for (size_t k = 0; k < v.size(); ++k)
      best = std::max(best, v[k] * std::pow((k + 1) * m, 1.0 / p));
    return best;
  }
  // int_0^inf (t^{1/p} f*(t))^r dt/t over the step rearrangement
  double s = 0;
  for (size_t k = 0; k < v.size(); ++k) {
    const double t0 = k * m, t1 = (k + 1) * m;
    s += std::pow(v[k], r) * (p / r) * (std::pow(t1, r / p) - std::pow(t0, r / p));
  }
  return std::pow(s, 1.0 / r);
}

/// Triebel-Lizorkin norm F^s_{p,q}, optionally with a Lorentz outer norm
/// L^{p,r} (the F^s_{p,q,(r)} variant from real interpolation).
inline double triebel_norm(const GridFunction& f, double s, double p, double q,
                           std::optional<double> lorentz_r = std::nullopt) {
  if (!(p >= 1.0) || !std::isfinite(p) || !(q >= 1.0) || !std::isfinite(q))
    throw std::invalid_argument("triebel_norm: p, q in [1, inf)");
  if (s < -2.0 || s > 2.0) throw std::invalid_argument("triebel_norm: s in [-2, 2]");
  const int J = max_resolvable_band(f);
  GridFunction acc = f;
  std::fill(acc.values.begin(), acc.values.end(), 0.0);
  for (int j = 0; j <= J; ++j) {
    const GridFunction Sj = lp_project(f, j);
    const double w = std::pow(2.0, j * s * q);
    for (int i = 0; i < f.size(); ++i) acc.values[i] += w * std::pow(std::abs(Sj.values[i]), q);
  }
  for (int i = 0; i < f.size(); ++i) acc.values[i] = std::pow(acc.values[i], 1.0 / q);
  if (lorentz_r) return lorentz_norm(acc, p, *lorentz_r);
  return acc.lp(p);
}

// --- H^1 atoms ----------------------------------------------------------------

/// L^inf-normalized H^1 atom: supp b in B(z, r), mean zero, |b| <= |B|^{-1}.
struct Atom {
  double lambda = 0;
  Vec center;
  double radius = 0;
  GridFunction values;  // the atom b itself (normalized)
};

struct AtomicDecomposition {
  std::vector<Atom> atoms;
  double residual_norm = 0;
  double coefficient_sum = 0;  // sum |lambda_m|, reported against the H1-type norm
};

inline double ball_volume(int d, double r) {
  return unit_sphere_area(d) / d * std::pow(r, d);
}

/// Machine check of the three atom conditions.
inline bool atom_is_valid(const Atom& a, double tol = 1e-8) {
  const GridFunction& g = a.values;
  const double bound = 1.0 / ball_volume(g.d, a.radius);
  if (g.max_abs() > bound * (1.0 + tol)) return false;
  if (std::abs(g.integral()) > tol * (g.max_abs() + 1.0) * g.cell_measure() * g.size()) return false;
  for (int i = 0; i < g.size(); ++i)
    if (g.values[i] != 0.0 && (g.point(i) - a.center).norm() > a.radius * (1.0 + 1e-12))
      return false;
  return true;
}

namespace detail {

inline std::pair<Vec, double> support_ball(const GridFunction& f) {
  Vec lo(f.d), hi(f.d);
  bool any = false;
  for (int i = 0; i < f.size(); ++i) {
    if (f.values[i] == 0.0) continue;
    const Vec x = f.point(i);
    if (!any) {
      lo = x;
      hi = x;
      any = true;
      continue;
    }
    for (int j = 0; j < f.d; ++j) {
      lo[j] = std::min(lo[j], x[j]);
      hi[j] = std::max(hi[j], x[j]);
    }
  }
  if (!any) return {Vec::zero(f.d), 0.0};
  Vec c(f.d);
  for (int j = 0; j < f.d; ++j) c[j] = 0.5 * (lo[j] + hi[j]);
  return {c, 0.5 * (hi - lo).norm() + 0.75 * f.spacing};
}

}  // namespace detail

/// Dyadic martingale-difference decomposition into L^inf-normalized atoms.
/// Differences of conditional averages over dyadic cubes are atoms up to
/// normalization; reconstruction is exact up to roundoff. Rejects data with
/// nonzero mean.
inline AtomicDecomposition atomic_decompose(const GridFunction& f, double mean_tol = 1e-10) {
  const double scale = f.lp(2.0) + 1e-300;
  if (std::abs(f.integral()) > mean_tol * std::max(1.0, scale))
    throw std::invalid_argument("atomic_decompose: nonzero mean, not decomposable into atoms");

  AtomicDecomposition dec;

  // fast path: the input already satisfies the atom conditions for its
  // support ball under its natural normalization
  {
    auto [c, r] = detail::support_ball(f);
    if (r > 0) {
      const double lam = f.max_abs() * ball_volume(f.d, r);
      if (lam <= 1.0 + 1e-12) {
        Atom a{lam, c, r, f};
        a.values *= 1.0 / lam;
        dec.atoms.push_back(std::move(a));
        dec.residual_norm = 0.0;
        dec.coefficient_sum = lam;
        return dec;
      }
    }
  }

  int levels = 0;
  while ((1 << levels) < f.shape[0]) ++levels;
  if ((1 << levels) != f.shape[0])
    throw std::invalid_argument("atomic_decompose: grid axis must be a power of two");

  GridFunction recon = f;
  std::fill(recon.values.begin(), recon.values.end(), 0.0);

  // conditional average over the level-l cube containing each cell
  auto cube_of = [&](int flat, int l) {
    std::array<int, 4> c{0, 0, 0, 0};
    const int cube_cells = 1 << (levels - l);
    for (int j = 0; j < f.d; ++j) {
      c[j] = (flat % f.shape[j]) / cube_cells;
      flat /= f.shape[j];
    }
    return c;
  };

  for (int l = 0; l < levels; ++l) {
    const int cubes_per_axis = 1 << l;
    const int cube_cells = 1 << (levels - l);
    // E_{l+1} f - E_l f per level-l cube
    std::map<std::array<int, 4>, std::vector<int>> cube_cells_map;
    for (int i = 0; i < f.size(); ++i) cube_cells_map[cube_of(i, l)].push_back(i);
    (void)cubes_per_axis;
    for (auto& [cube, cells] : cube_cells_map) {
      double mean_l = 0;
      for (int i : cells) mean_l += f.values[i];
      mean_l /= cells.size();
      // fine means at level l+1 within this cube
      std::map<std::array<int, 4>, std::pair<double, int>> fine;
      for (int i : cells) {
        auto& acc = fine[cube_of(i, l + 1)];
        acc.first += f.values[i];
        acc.second += 1;
      }
      GridFunction diff = f;
      std::fill(diff.values.begin(), diff.values.end(), 0.0);
      double dmax = 0;
      for (int i : cells) {
        const auto& acc = fine[cube_of(i, l + 1)];
        const double v = acc.first / acc.second - mean_l;
        diff.values[i] = v;
        dmax = std::max(dmax, std::abs(v));
      }
      if (dmax == 0.0) continue;
      // enclosing ball of the cube
      Vec c(f.d);
      for (int j = 0; j < f.d; ++j)
        c[j] = f.origin[j] + (cube[j] * cube_cells + 0.5 * cube_cells - 0.5) * f.spacing;
      const double r = 0.5 * std::sqrt(static_cast<double>(f.d)) * cube_cells * f.spacing +
                       0.75 * f.spacing;
      const double lam = dmax * ball_volume(f.d, r);
      Atom a{lam, c, r, diff};
      a.values *= 1.0 / lam;
      for (int i : cells) recon.values[i] += diff.values[i];
      dec.coefficient_sum += std::abs(lam);
      dec.atoms.push_back(std::move(a));
    }
  }
  // residual: f minus sum of differences (the level-`levels` averages are the
  // cell values themselves, so the telescoping is exact)
  double rss = 0;
  for (int i = 0; i < f.size(); ++i) {
    const double r = f.values[i] - recon.values[i];
    rss += r * r;
  }
  dec.residual_norm = std::sqrt(rss * f.cell_measure());
  return dec;
}

// --- the weighted X^p_sigma / Y^p_sigma machinery -----------------------------

/// Deterministic dense center sequence: dyadic rationals of the ball
/// |a| <= 2 in increasing denominator order (lexicographic within a level).
inline std::vector<Vec> enumerate_centers(int d, int levels) {
  std::vector<Vec> out;
  for (int q = 0; q <= levels; ++q) {
    const int den = 1 << q;
    const int M = 2 * den;
    std::vector<int> idx(d, -M);
    while (true) {
      bool is_new = (q == 0);
      for (int j = 0; j < d && !is_new; ++j) is_new = (idx[j] % 2 != 0);
      if (is_new || q == 0) {
        Vec a(d);
        for (int j = 0; j < d; ++j) a[j] = static_cast<double>(idx[j]) / den;
        if (a.norm() <= 2.0 + 1e-12) out.push_back(a);
      }
      int j = 0;
      for (; j < d; ++j) {
        if (++idx[j] <= M) break;
        idx[j] = -M;
      }
      if (j == d) break;
    }
  }
  return out;
}

/// Parameters of the weighted norm. J = (-(n-3)/2, 1] plus slack is the
/// validated sigma range; sigma outside it throws.
struct XNormSpec {
  double sigma = 0;
  double p = 2;
  int n = 5;            // ambient dimension (boundary functions live in R^{n-1})
  int center_levels = 2;
  double slack = 0.25;

  void validate() const {
    const double lo = -(n - 3) / 2.0 - slack;
    const double hi = 1.0 + slack;
    if (sigma <= lo || sigma > hi)
      throw std::invalid_argument("XNormSpec: sigma outside the weight range J");
    if (p < 1.0) throw std::invalid_argument("XNormSpec: p >= 1 required");
  }
};

/// One piece of a Y-decomposition: scale index l <= 0 and center index m.
struct XPiece {
  int l = 0;
  int m = 0;
  GridFunction f;
};

/// Exact Y^p_sigma sum for a GIVEN decomposition:
///   sum_{l,m} || sum_j f_{l,m}(x) psi_j(2^{-l} |x - a_m|) 2^{j sigma} ||_p.
/// This is an upper bound for the X^p_sigma quotient norm (the infimum over
/// decompositions is never computed).
inline double y_norm_sum(const std::vector<XPiece>& parts, const XNormSpec& spec) {
  spec.validate();
  if (parts.empty()) return 0.0;
  const auto centers = enumerate_centers(parts.front().f.d, spec.center_levels);
  double total = 0;
  for (const auto& piece : parts) {
    if (piece.l > 0) throw std::invalid_argument("y_norm_sum: scale indices l <= 0 required");
    if (piece.m < 0 || piece.m >= static_cast<int>(centers.size()))
      throw std::invalid_argument("y_norm_sum: center index outside the enumeration");
    const Vec& a = centers[piece.m];
    const double inv_scale = std::ldexp(1.0, -piece.l);
    GridFunction weighted = piece.f;
    for (int i = 0; i < weighted.size(); ++i) {
      if (weighted.values[i] == 0.0) continue;
      const double rr = inv_scale * (weighted.point(i) - a).norm();
      // only bands with 2^{j-1} <= rr <= 2^{j+1} contribute (plus band 0)
      double w = LPPartition::band(0, rr);
      const int j_lo = std::max(1, static_cast<int>(std::floor(std::log2(rr + 1e-300))) - 1);
      for (int j = j_lo; j <= j_lo + 2; ++j)
        w += LPPartition::band(j, rr) * std::pow(2.0, j * spec.sigma);
      weighted.values[i] *= w;
    }
    total += weighted.lp(spec.p);
  }
  return total;
}

/// Canonical single-piece upper bound for f itself: l = 0 (or the given
/// scale) and the enumerated center nearest to the support centroid.
inline double x_norm_upper(const GridFunction& f, const XNormSpec& spec, int l = 0,
                           std::optional<Vec> center_hint = std::nullopt) {
  const auto centers = enumerate_centers(f.d, spec.center_levels);
  Vec target = Vec::zero(f.d);
  if (center_hint) {
    target = *center_hint;
  } else {
    double mass = 0;
    for (int i = 0; i < f.size(); ++i) {
      const double w = std::abs(f.values[i]);
      target += w * f.point(i);
      mass += w;
    }
    if (mass > 0) target *= 1.0 / mass;
  }
  int best = 0;
  double best_d = (centers[0] - target).norm();
  for (size_t m = 1; m < centers.size(); ++m) {
    const double dd = (centers[m] - target).norm();
    if (dd < best_d) {
      best_d = dd;
      best = static_cast<int>(m);
    }
  }
  std::vector<XPiece> parts;
  parts.push_back(XPiece{l, best, f});
  return y_norm_sum(parts, spec);
}

}  // namespace bielab
