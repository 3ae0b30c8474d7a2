#pragma once

#include <cmath>
#include <functional>
#include <iostream>
#include <ostream>
#include <vector>

#include "bielab/core.hpp"
#include "bielab/geometry.hpp"

namespace bielab {

using ScalarField = std::function<double(const Vec&)>;

/// Sample ladder for the nontangential cone
///   Gamma(Q) = { Y : |Y - Q| <= (1 + L/10) dist(Y, boundary) }.
/// Rays start at the inner normal and the vertical and fan out by the
/// aperture angle; every sample is re-checked for cone membership against
/// the mesh. Heights are geometric between t_min and t_max.
struct ConeSpec {
  double aperture = 1.0;  // 1 + L/10
  double t_min = 0;
  double t_max = 0;
  int heights = 10;
  int tilts = 2;  // tangential tilt steps per axis (0 = axis rays only)

  static ConeSpec make(const BoundaryMesh& mesh, double t_max = 0, double t_min = 0,
                       int heights = 10, int tilts = 2) {
    ConeSpec s;
    s.aperture = 1.0 + mesh.domain.lipschitz_L / 10.0;
    s.t_max = (t_max > 0) ? t_max : 16.0 * mesh.domain.support_radius;
    s.t_min = (t_min > 0) ? t_min : 0.75 * mesh.h;
    s.heights = heights;
    s.tilts = tilts;
    return s;
  }
};

namespace detail {

/// Ray directions for the cone at node i: inner normal, vertical, their mix,
/// plus tangential tilts of the vertical limited by the aperture angle.
/// Flat domains (L = 0) degenerate to the vertical ray alone.
inline std::vector<Vec> cone_directions(const BoundaryMesh& mesh, int i, const ConeSpec& spec) {
  const int n = mesh.n;
  std::vector<Vec> dirs;
  Vec up = Vec::unit(n, n - 1);
  if (mesh.domain.lipschitz_L == 0.0 || spec.aperture <= 1.0) {
    dirs.push_back(up);
    return dirs;
  }
  Vec nu = mesh.normals[i];
  nu *= -1.0;  // inner normal
  dirs.push_back(nu);
  dirs.push_back(up);
  Vec mix = nu + up;
  mix *= 1.0 / mix.norm();
  dirs.push_back(mix);
  const double theta_max = std::acos(1.0 / spec.aperture);
  for (int axis = 0; axis < n - 1 && spec.tilts > 0; ++axis)
    for (int s = -spec.tilts; s <= spec.tilts; ++s) {
      if (s == 0) continue;
      const double th = theta_max * s / spec.tilts;
      Vec d = Vec::zero(n);
      d[axis] = std::sin(th);
      d[n - 1] = std::cos(th);
      dirs.push_back(d);
    }
  return dirs;
}

inline std::vector<double> cone_heights(const ConeSpec& spec) {
  if (spec.heights < 1) throw std::invalid_argument("cone sample ladder is empty");
  std::vector<double> ts(spec.heights);
  const double ratio = (spec.heights == 1)
                           ? 1.0
                           : std::pow(spec.t_max / spec.t_min, 1.0 / (spec.heights - 1));
  double t = spec.t_min;
  for (int k = 0; k < spec.heights; ++k, t *= ratio) ts[k] = t;
  return ts;
}

}  // namespace detail

/// Cone samples at node i that pass the membership re-check.
inline std::vector<Vec> cone_samples(const BoundaryMesh& mesh, int i, const ConeSpec& spec) {
  const auto dirs = detail::cone_directions(mesh, i, spec);
  const auto ts = detail::cone_heights(spec);
  const Vec& Q = mesh.nodes[i];
  std::vector<Vec> out;
  out.reserve(dirs.size() * ts.size());
  for (const auto& d : dirs)
    for (double t : ts) {
      Vec Y = Q + t * d;
      const double dist = mesh.dist_to_boundary(Y);
      if (t <= spec.aperture * (dist + 0.5 * mesh.h)) out.push_back(Y);
    }
  return out;
}

/// Nontangential maximal function M(field)(Q_i) over the sample ladder,
/// for the listed nodes. Empty-after-culling cones contribute 0.
inline std::vector<double> nt_max(const ScalarField& field, const BoundaryMesh& mesh,
                                  const ConeSpec& spec, const std::vector<int>& nodes) {
  detail::cone_heights(spec);  // validates the ladder outside the parallel region
  std::vector<double> M(nodes.size(), 0.0);
#pragma omp parallel for schedule(dynamic)
  for (size_t k = 0; k < nodes.size(); ++k) {
    double m = 0;
    for (const auto& Y : cone_samples(mesh, nodes[k], spec))
      m = std::max(m, std::abs(field(Y)));
    M[k] = m;
  }
  return M;
}

inline std::vector<double> nt_max(const ScalarField& field, const BoundaryMesh& mesh,
                                  const ConeSpec& spec) {
  std::vector<int> all(mesh.size());
  for (int i = 0; i < mesh.size(); ++i) all[i] = i;
  return nt_max(field, mesh, spec, all);
}

/// Membership in the global upward cone Gamma_0 = { X_n >= slope |x| }.
inline bool in_gamma0(const Vec& X, double slope) {
  return X[X.n - 1] >= slope * X.head(X.n - 1).norm();
}

/// Near/far split of the maximal function: samples inside Gamma_0 feed M1,
/// the rest feed M2; max(M1, M2) = M by construction. The slope floor
/// 100 max(L, 1) keeps the cone nondegenerate on flat test domains.
inline std::pair<std::vector<double>, std::vector<double>> nt_max_split(
    const ScalarField& field, const BoundaryMesh& mesh, const ConeSpec& spec,
    double gamma0_slope, const std::vector<int>& nodes) {
  if (gamma0_slope < 100.0 * std::max(mesh.domain.lipschitz_L, 1.0))
    throw std::invalid_argument("nt_max_split: gamma0 slope below 100 max(L,1)");
  detail::cone_heights(spec);
  std::vector<double> M1(nodes.size(), 0.0), M2(nodes.size(), 0.0);
#pragma omp parallel for schedule(dynamic)
  for (size_t k = 0; k < nodes.size(); ++k) {
    double m1 = 0, m2 = 0;
    for (const auto& Y : cone_samples(mesh, nodes[k], spec)) {
      const double v = std::abs(field(Y));
      double& slot = in_gamma0(Y, gamma0_slope) ? m1 : m2;
      slot = std::max(slot, v);
    }
    M1[k] = m1;
    M2[k] = m2;
  }
  return {M1, M2};
}

/// L^p norm over a node subset: (sum_k |v_k|^p w_{region_k})^{1/p}, with v
/// aligned with region (the shape nt_max produces). p in (0,1) is accepted
/// as a quasi-norm; an empty region yields 0 with a warning on stderr.
inline double region_Lp_norm(const BoundaryMesh& mesh, const std::vector<double>& v, double p,
                             const std::vector<int>& region) {
  if (p <= 0) throw std::invalid_argument("region_Lp_norm: p > 0 required");
  if (v.size() != region.size())
    throw std::invalid_argument("region_Lp_norm: values must align with region");
  if (region.empty()) {
    std::cerr << "region_Lp_norm: empty region, returning 0\n";
    return 0.0;
  }
  double s = 0;
  for (size_t k = 0; k < region.size(); ++k)
    s += std::pow(std::abs(v[k]), p) * mesh.weights[region[k]];
  return std::pow(s, 1.0 / p);
}

/// Variant where v is indexed by mesh node (v.size() == mesh.size()).
inline double region_Lp_norm_by_node(const BoundaryMesh& mesh, const std::vector<double>& v,
                                     double p, const std::vector<int>& region) {
  if (p <= 0) throw std::invalid_argument("region_Lp_norm: p > 0 required");
  if (region.empty()) {
    std::cerr << "region_Lp_norm: empty region, returning 0\n";
    return 0.0;
  }
  double s = 0;
  for (int i : region) s += std::pow(std::abs(v[i]), p) * mesh.weights[i];
  return std::pow(s, 1.0 / p);
}

/// Maximal-function profile with its CSV dump (node x, M, M1, M2).
struct MaximalProfile {
  std::vector<int> nodes;
  std::vector<double> M, M1, M2;
  double gamma0_slope = 0;

  void to_csv(const BoundaryMesh& mesh, std::ostream& out) const {
    const int d = mesh.n - 1;
    for (int j = 0; j < d; ++j) out << "x" << j << ",";
    out << "M,M1,M2\n";
    for (size_t k = 0; k < nodes.size(); ++k) {
      for (int j = 0; j < d; ++j) out << mesh.nodes[nodes[k]][j] << ",";
      out << M[k] << "," << (k < M1.size() ? M1[k] : 0.0) << ","
          << (k < M2.size() ? M2[k] : 0.0) << "\n";
    }
  }
};

inline MaximalProfile maximal_profile(const ScalarField& field, const BoundaryMesh& mesh,
                                      const ConeSpec& spec, double gamma0_slope,
                                      const std::vector<int>& nodes) {
  MaximalProfile p;
  p.nodes = nodes;
  p.gamma0_slope = gamma0_slope;
  auto [m1, m2] = nt_max_split(field, mesh, spec, gamma0_slope, nodes);
  p.M1 = std::move(m1);
  p.M2 = std::move(m2);
  p.M.resize(nodes.size());
  for (size_t k = 0; k < nodes.size(); ++k) p.M[k] = std::max(p.M1[k], p.M2[k]);
  return p;
}

}  // namespace bielab
