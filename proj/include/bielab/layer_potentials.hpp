#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bielab/core.hpp"
#include "bielab/geometry.hpp"
#include "bielab/kernels.hpp"

namespace bielab {

/// Boundary densities are plain vectors indexed by mesh node; the mesh is
/// carried alongside. All pairings use the dsigma weights.
using Density = Eigen::VectorXd;

inline double lp_norm(const BoundaryMesh& mesh, const Density& v, double p) {
  if (v.size() != mesh.size()) throw std::invalid_argument("lp_norm: size mismatch");
  double s = 0;
  for (int i = 0; i < mesh.size(); ++i) s += std::pow(std::abs(v[i]), p) * mesh.weights[i];
  return std::pow(s, 1.0 / p);
}

inline double dsigma_inner(const BoundaryMesh& mesh, const Density& f, const Density& g) {
  double s = 0;
  for (int i = 0; i < mesh.size(); ++i) s += f[i] * g[i] * mesh.weights[i];
  return s;
}

// --- singular-cell curvature correction -----------------------------------

/// Quadrature nodes and weights on the unit sphere S^{d-1} in R^d, built
/// recursively from dS^{d-1} = sin^{d-2}(theta) dtheta dS^{d-2}.
inline std::vector<std::pair<Vec, double>> sphere_quadrature(int d, int res = 12) {
  std::vector<std::pair<Vec, double>> out;
  if (d == 1) {
    Vec p(1), m(1);
    p[0] = 1.0;
    m[0] = -1.0;
    out.push_back({p, 1.0});
    out.push_back({m, 1.0});
    return out;
  }
  const auto sub = sphere_quadrature(d - 1, res);
  // Gauss-Legendre nodes on theta in [0, pi] via 5-point panels
  const int panels = std::max(2, res / 4);
  const double width = std::numbers::pi / panels;
  for (int pnl = 0; pnl < panels; ++pnl)
    for (int q = 0; q < 5; ++q) {
      const double theta = (pnl + 0.5) * width + 0.5 * width * gauss5_node(q);
      const double wq = 0.5 * width * gauss5_weight(q) * std::pow(std::sin(theta), d - 2);
      for (const auto& [u, wu] : sub) {
        Vec dir(d);
        for (int j = 0; j < d - 1; ++j) dir[j] = std::sin(theta) * u[j];
        dir[d - 1] = std::cos(theta);
        out.push_back({dir, wq * wu});
      }
    }
  return out;
}

namespace detail {
inline const std::vector<std::pair<Vec, double>>& cached_sphere(int d) {
  static std::vector<std::pair<Vec, double>> cache[8];
  if (cache[d].empty()) cache[d] = sphere_quadrature(d);
  return cache[d];
}
}  // namespace detail

/// First-order local correction for the punctured-cell principal value of
/// the double-layer kernel: over the equivalent disk of the self cell the
/// kernel's even part is (1/(2 omega_n)) (u' Hphi u) |D|^{2-n} / (1 + (g.u)^2)^{n/2},
/// which integrates to r_eq times its angular average. Zero on flat meshes.
inline double curvature_diagonal(const BoundaryMesh& mesh, int i) {
  const int d = mesh.n - 1;
  const Mat H = mesh.phi_hessian(i);
  double hnorm = 0;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) hnorm += std::abs(H(a, b));
  if (hnorm == 0.0) return 0.0;
  const Vec& g = mesh.grad_phi[i];
  const double cell = std::pow(mesh.h, d);
  const double r_eq = std::pow(d * cell / unit_sphere_area(d), 1.0 / d);
  double acc = 0;
  for (const auto& [u, w] : detail::cached_sphere(d)) {
    double uhu = 0, gu = 0;
    for (int a = 0; a < d; ++a) {
      gu += g[a] * u[a];
      for (int b = 0; b < d; ++b) uhu += u[a] * H(a, b) * u[b];
    }
    acc += w * uhu / std::pow(1.0 + gu * gu, 0.5 * mesh.n);
  }
  return r_eq * acc / (2.0 * unit_sphere_area(mesh.n));
}

// --- dense boundary operators -------------------------------------------

/// Single layer boundary matrix S_ij = G(Q_i - Q_j) w_j. The self cell uses
/// the equivalent-disk correction: the patch of measure w_i integrates the
/// kernel to omega_{n-1} r_eq / ((n-2) omega_n) over a disk of equal area.
inline Eigen::MatrixXd assemble_single_layer(const BoundaryMesh& mesh) {
  const int N = mesh.size();
  const int n = mesh.n;
  Eigen::MatrixXd A(N, N);
  const double wn1 = unit_sphere_area(n - 1);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      A(i, j) = laplace_G(mesh.nodes[i] - mesh.nodes[j], n) * mesh.weights[j];
    }
    if (n >= 3) {
      const double r_eq = std::pow((n - 1) * mesh.weights[i] / wn1, 1.0 / (n - 1));
      A(i, i) = wn1 * r_eq / ((n - 2) * unit_sphere_area(n));
    } else {  // n = 2 log kernel: int_{-r}^{r} -log|s|/(2 pi) ds
      const double r = mesh.weights[i] / 2.0;
      A(i, i) = r * (1.0 - std::log(r)) / std::numbers::pi;
    }
  }
  return A;
}

/// Principal-value double layer: K_ij = <grad G(Q_i - Q_j), N_j> w_j; the
/// self cell is punctured (odd part cancels) and re-entered through the
/// curvature diagonal.
inline Eigen::MatrixXd assemble_double_layer(const BoundaryMesh& mesh) {
  const int N = mesh.size();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      A(i, j) = grad_G(mesh.nodes[i] - mesh.nodes[j], mesh.n).dot(mesh.normals[j]) *
                mesh.weights[j];
    }
    A(i, i) = curvature_diagonal(mesh, i);
  }
  return A;
}

/// Adjoint double layer: Kstar_ij = <grad G(Q_j - Q_i), N_i> w_j; the exact
/// dsigma-transpose of assemble_double_layer on the same mesh.
inline Eigen::MatrixXd assemble_adjoint_double_layer(const BoundaryMesh& mesh) {
  const int N = mesh.size();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      A(i, j) = grad_G(mesh.nodes[j] - mesh.nodes[i], mesh.n).dot(mesh.normals[i]) *
                mesh.weights[j];
    }
    A(i, i) = curvature_diagonal(mesh, i);  // same leading even part as K
  }
  return A;
}

enum class LayerKind { S, K, Kstar, DnS, gradS };

/// Assembled boundary operator with its trace side (+1 from D, -1 from the
/// complement, 0 for principal-value / side-free kinds).
struct LayerOperator {
  LayerKind kind;
  int side = 0;
  Eigen::MatrixXd A;
};

/// Jump-relation traces:
///   K_pm      = pm f/2 + K f
///   dN S_pm   = pm f/2 - Kstar f        (normal derivative of S)
///   Dn S_pm   = pm (N^n/2) f + pv Dn S  (vertical derivative of S)
/// The pm f/2 orientations are pinned by the flat-domain Poisson computation
/// and re-verified by the extrapolated boundary-limit tests.
inline LayerOperator make_layer_operator(const BoundaryMesh& mesh, LayerKind kind,
                                         int side = 0) {
  const int N = mesh.size();
  LayerOperator op{kind, side, Eigen::MatrixXd()};
  switch (kind) {
    case LayerKind::S:
      op.A = assemble_single_layer(mesh);
      break;
    case LayerKind::K:
      op.A = assemble_double_layer(mesh);
      if (side) op.A += side * 0.5 * Eigen::MatrixXd::Identity(N, N);
      break;
    case LayerKind::Kstar:
      op.A = assemble_adjoint_double_layer(mesh);
      if (side) op.A += side * 0.5 * Eigen::MatrixXd::Identity(N, N);
      break;
    case LayerKind::DnS: {
      Eigen::MatrixXd pv = Eigen::MatrixXd::Zero(N, N);
#pragma omp parallel for schedule(static)
      for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
          if (i == j) continue;
          pv(i, j) =
              grad_G(mesh.nodes[i] - mesh.nodes[j], mesh.n)[mesh.n - 1] * mesh.weights[j];
        }
        const double slant = std::sqrt(1.0 + mesh.grad_phi[i].norm_sq());
        pv(i, i) = slant * curvature_diagonal(mesh, i);
        if (side) pv(i, i) += side * 0.5 * mesh.normals[i][mesh.n - 1];
      }
      op.A = std::move(pv);
      break;
    }
    case LayerKind::gradS:
      throw std::invalid_argument("make_layer_operator: gradS has no square assembly");
  }
  return op;
}

/// Normal-derivative trace of the single layer, side = +1 (from D) or -1.
inline Eigen::MatrixXd normal_deriv_S_trace(const BoundaryMesh& mesh, int side) {
  const int N = mesh.size();
  return side * 0.5 * Eigen::MatrixXd::Identity(N, N) - assemble_adjoint_double_layer(mesh);
}

// --- off-boundary evaluation --------------------------------------------

namespace detail {
inline void check_offboundary(const BoundaryMesh& mesh, const Vec& X) {
  if (mesh.dist_to_boundary(X) <= 2.0 * mesh.h)
    throw std::runtime_error(
        "evaluation point within 2h of the boundary; use the boundary-trace operator");
}
}  // namespace detail

inline double eval_single_layer(const BoundaryMesh& mesh, const Density& f, const Vec& X) {
  detail::check_offboundary(mesh, X);
  double s = 0;
  for (int j = 0; j < mesh.size(); ++j)
    s += laplace_G(X - mesh.nodes[j], mesh.n) * f[j] * mesh.weights[j];
  return s;
}

inline Vec eval_grad_single_layer(const BoundaryMesh& mesh, const Density& f, const Vec& X) {
  detail::check_offboundary(mesh, X);
  Vec g = Vec::zero(mesh.n);
  for (int j = 0; j < mesh.size(); ++j)
    g += (f[j] * mesh.weights[j]) * grad_G(X - mesh.nodes[j], mesh.n);
  return g;
}

inline double eval_double_layer(const BoundaryMesh& mesh, const Density& f, const Vec& X) {
  detail::check_offboundary(mesh, X);
  double s = 0;
  for (int j = 0; j < mesh.size(); ++j)
    s += grad_G(X - mesh.nodes[j], mesh.n).dot(mesh.normals[j]) * f[j] * mesh.weights[j];
  return s;
}

inline Vec eval_grad_double_layer(const BoundaryMesh& mesh, const Density& f, const Vec& X) {
  detail::check_offboundary(mesh, X);
  Vec g = Vec::zero(mesh.n);
  for (int j = 0; j < mesh.size(); ++j) {
    const Mat H = hess_G(X - mesh.nodes[j], mesh.n);
    g += (f[j] * mesh.weights[j]) * H.apply(mesh.normals[j]);
  }
  return g;
}

// --- interior quadrature of D and the Eq.-18-corrected volume potential ---

/// Tensor quadrature grid above the graph: per horizontal lattice column,
/// vertically graded layers (thin near the boundary, growing geometrically)
/// up to `height`. Used by the corrected volume potential and the biharmonic
/// trace operators, whose per-cell kernels integrate the vertical direction
/// in closed form.
class VolumeGrid {
 public:
  int n = 0;
  double h_xy = 0, radius = 0, height = 0;
  double h_t = 0;  // maximal layer thickness
  std::vector<double> layer_bot, layer_top;  // offsets above phi(x)
  std::vector<Vec> cells;                    // cell centers
  std::vector<double> cell_vol;              // per-cell volume
  GraphDomain domain;

  int size() const { return static_cast<int>(cells.size()); }
  int layers() const { return static_cast<int>(layer_bot.size()); }
  int columns() const { return layers() ? size() / layers() : 0; }

  /// Horizontal center of the column holding cell c.
  Vec column_of(int c) const { return cells[c].head(n - 1); }

  /// Index of the cell containing X, or -1.
  int find_cell(const Vec& X) const {
    const int d = n - 1;
    std::array<std::int32_t, kMaxDim - 1> cc{};
    for (int j = 0; j < d; ++j) {
      const double u = X[j] / h_xy;
      cc[j] = static_cast<std::int32_t>(std::lround(u));
      if (std::abs(u - cc[j]) > 0.5 + 1e-9) return -1;
    }
    const auto it = columns_.find(pack(cc));
    if (it == columns_.end()) return -1;
    const double off = X[n - 1] - domain.phi(X.head(d));
    for (int m = 0; m < layers(); ++m)
      if (off >= layer_bot[m] && off < layer_top[m]) return it->second + m;
    return -1;
  }

  friend VolumeGrid build_volume_grid(const GraphDomain&, double, double, double, double,
                                      double);

 private:
  std::unordered_map<std::int64_t, int> columns_;
  std::int64_t stride_ = 0;

  std::int64_t pack(const std::array<std::int32_t, kMaxDim - 1>& c) const {
    std::int64_t key = 0;
    for (int j = 0; j < n - 1; ++j) key = key * stride_ + (c[j] + stride_ / 2);
    return key;
  }
};

/// Build the graded grid: layer thicknesses start at t0 (default h_xy / 2)
/// and grow by 1.6x up to h_t.
inline VolumeGrid build_volume_grid(const GraphDomain& domain, double h_xy, double h_t,
                                    double radius, double height, double t0 = 0) {
  if (h_xy <= 0 || h_t <= 0 || radius <= 0 || height <= 0)
    throw std::invalid_argument("build_volume_grid: positive parameters required");
  VolumeGrid g;
  g.n = domain.n;
  g.h_xy = h_xy;
  g.h_t = h_t;
  g.radius = radius;
  g.height = height;
  g.domain = domain;
  const int d = domain.n - 1;
  if (t0 <= 0) t0 = 0.5 * h_xy;
  {
    double bot = 0, w = std::min(t0, h_t);
    while (bot < height - 1e-12) {
      const double top = std::min(bot + w, height);
      g.layer_bot.push_back(bot);
      g.layer_top.push_back(top);
      bot = top;
      w = std::min(w * 1.6, h_t);
    }
  }
  const int M = static_cast<int>(std::floor(radius / h_xy + 1e-12));
  g.stride_ = 2 * static_cast<std::int64_t>(M) + 4;
  const double base_area = std::pow(h_xy, d);

  std::vector<int> idx(d, -M);
  std::array<std::int32_t, kMaxDim - 1> c{};
  while (true) {
    Vec x(d);
    for (int j = 0; j < d; ++j) x[j] = idx[j] * h_xy;
    if (x.norm() <= radius + 1e-12) {
      for (int j = 0; j < d; ++j) c[j] = idx[j];
      g.columns_[g.pack(c)] = g.size();
      const double base = domain.phi(x);
      for (int m = 0; m < g.layers(); ++m) {
        Vec y(domain.n);
        for (int j = 0; j < d; ++j) y[j] = x[j];
        y[d] = base + 0.5 * (g.layer_bot[m] + g.layer_top[m]);
        g.cells.push_back(y);
        g.cell_vol.push_back(base_area * (g.layer_top[m] - g.layer_bot[m]));
      }
    }
    int j = 0;
    for (; j < d; ++j) {
      if (++idx[j] <= M) break;
      idx[j] = -M;
    }
    if (j == d) break;
  }
  return g;
}

/// Evaluate a scalar field at every volume cell.
template <class F>
Eigen::VectorXd sample_field(const VolumeGrid& grid, F&& field) {
  Eigen::VectorXd v(grid.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < grid.size(); ++i) v[i] = field(grid.cells[i]);
  return v;
}

/// Corrected volume potential over the truncated interior:
///   V(field)(X) = int_D (G(X-Y) - G(X0-Y)) field(Y) dY,
/// the anchor X0 outside closure(D) making the truncated integral converge.
/// X landing inside a quadrature cell punctures that cell.
inline double volume_potential_corrected(const VolumeGrid& grid,
                                         const Eigen::VectorXd& field_vals, const Vec& X,
                                         const Vec& X0) {
  const int d = grid.n - 1;
  if (X0[d] >= grid.domain.phi(X0.head(d)))
    throw std::invalid_argument("volume_potential_corrected: anchor X0 must lie below the graph");
  const int self = grid.find_cell(X);
  double s = 0;
#pragma omp parallel for reduction(+ : s) schedule(static)
  for (int i = 0; i < grid.size(); ++i) {
    if (i == self || field_vals[i] == 0.0) continue;
    const Vec dx = X - grid.cells[i];
    const double g = (dx.norm_sq() == 0.0) ? 0.0 : laplace_G(dx, grid.n);
    s += (g - laplace_G(X0 - grid.cells[i], grid.n)) * field_vals[i] * grid.cell_vol[i];
  }
  return s;
}

/// Gradient of the volume potential (anchor term is constant, drops out).
inline Vec grad_volume_potential(const VolumeGrid& grid, const Eigen::VectorXd& field_vals,
                                 const Vec& X) {
  const int self = grid.find_cell(X);
  Vec g = Vec::zero(grid.n);
  for (int i = 0; i < grid.size(); ++i) {
    if (i == self || field_vals[i] == 0.0) continue;
    g += (field_vals[i] * grid.cell_vol[i]) * grad_G(X - grid.cells[i], grid.n);
  }
  return g;
}

/// Hessian of the volume potential: principal value over punctured cells
/// plus the classical -field(X)/n * I local term (present only when X sits
/// inside the quadrature region; field_at_X supplies the density there).
inline Mat hess_volume_potential(const VolumeGrid& grid, const Eigen::VectorXd& field_vals,
                                 const Vec& X, double field_at_X) {
  const int self = grid.find_cell(X);
  Mat H(grid.n);
  for (int i = 0; i < grid.size(); ++i) {
    if (i == self || field_vals[i] == 0.0) continue;
    Mat h = hess_G(X - grid.cells[i], grid.n);
    h *= field_vals[i] * grid.cell_vol[i];
    H += h;
  }
  if (self >= 0)
    for (int i = 0; i < grid.n; ++i) H(i, i) -= field_at_X / grid.n;
  return H;
}

// --- binary snapshot of assembled operators -------------------------------

/// Flat binary layout: int32 n, int32 node count, int32 kind, int32 side,
/// then row-major doubles.
inline void write_operator_binary(const LayerOperator& op, int n, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_operator_binary: cannot open " + path);
  const std::int32_t hdr[4] = {static_cast<std::int32_t>(n),
                               static_cast<std::int32_t>(op.A.rows()),
                               static_cast<std::int32_t>(op.kind),
                               static_cast<std::int32_t>(op.side)};
  out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  for (Eigen::Index i = 0; i < op.A.rows(); ++i)
    out.write(reinterpret_cast<const char*>(op.A.row(i).eval().data()),
              sizeof(double) * op.A.cols());
}

inline LayerOperator read_operator_binary(const std::string& path, int* n_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_operator_binary: cannot open " + path);
  std::int32_t hdr[4];
  in.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  LayerOperator op{static_cast<LayerKind>(hdr[2]), hdr[3],
                   Eigen::MatrixXd(hdr[1], hdr[1])};
  for (std::int32_t i = 0; i < hdr[1]; ++i) {
    Eigen::VectorXd row(hdr[1]);
    in.read(reinterpret_cast<char*>(row.data()), sizeof(double) * hdr[1]);
    op.A.row(i) = row;
  }
  if (n_out) *n_out = hdr[0];
  return op;
}

}  // namespace bielab
