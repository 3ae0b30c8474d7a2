#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "bielab/core.hpp"

namespace bielab {

/// Radial boundary profiles shipped with the library. "bump" is a C^2
/// compactly supported cone smoothing; "tent" is piecewise linear with a
/// genuine Lipschitz corner at the apex and at the support edge.
enum class Profile { flat, bump, tent };

inline Profile profile_from_string(const std::string& s) {
  if (s == "flat") return Profile::flat;
  if (s == "bump") return Profile::bump;
  if (s == "tent") return Profile::tent;
  throw std::invalid_argument("unknown profile name: " + s);
}

inline std::string to_string(Profile p) {
  switch (p) {
    case Profile::flat: return "flat";
    case Profile::bump: return "bump";
    default: return "tent";
  }
}

/// The Lipschitz graph domain D = {(x, y) : y > phi(x)}, phi compactly
/// supported in |x| <= rho. phi is radial: flat 0, bump c (1-(r/rho)^2)^3,
/// tent c (1 - r/rho)_+.
struct GraphDomain {
  int n = 3;                    // ambient dimension
  Profile profile = Profile::flat;
  double amplitude = 0.0;       // c
  double support_radius = 1.0;  // rho
  double lipschitz_L = 0.0;     // ess-sup |grad phi|

  static GraphDomain make(int n, Profile profile, double amplitude, double rho) {
    if (n < 2) throw std::invalid_argument("GraphDomain: n >= 2 required");
    if (rho <= 0) throw std::invalid_argument("GraphDomain: rho > 0 required");
    GraphDomain d;
    d.n = n;
    d.profile = profile;
    d.amplitude = (profile == Profile::flat) ? 0.0 : amplitude;
    d.support_radius = rho;
    switch (d.profile) {
      case Profile::flat: d.lipschitz_L = 0.0; break;
      case Profile::bump:
        // max_u |d/du (1-u^2)^3| = 6 * 16/(25 sqrt 5) at u = 1/sqrt(5)
        d.lipschitz_L = 6.0 * 16.0 / (25.0 * std::sqrt(5.0)) * std::abs(amplitude) / rho;
        break;
      case Profile::tent: d.lipschitz_L = std::abs(amplitude) / rho; break;
    }
    return d;
  }

  /// phi at a horizontal point x in R^{n-1}; exactly zero for |x| >= rho.
  double phi(const Vec& x) const {
    const double r = x.norm();
    if (r >= support_radius || profile == Profile::flat) return 0.0;
    const double u = r / support_radius;
    if (profile == Profile::bump) {
      const double w = 1.0 - u * u;
      return amplitude * w * w * w;
    }
    return amplitude * (1.0 - u);
  }

  double phi_max() const { return std::max(amplitude, 0.0); }
  double phi_min() const { return std::min(amplitude, 0.0); }

  /// Radii where the profile fails to be C^1 (tent apex and support edge);
  /// pointwise jump-relation statements hold away from these.
  std::vector<double> corner_radii() const {
    if (profile == Profile::tent && amplitude != 0.0) return {0.0, support_radius};
    return {};
  }

  /// Lift a horizontal point to the boundary.
  Vec lift(const Vec& x) const {
    Vec q(n);
    for (int i = 0; i < n - 1; ++i) q[i] = x[i];
    q[n - 1] = phi(x);
    return q;
  }
};

/// Discretized boundary: uniform horizontal lattice of spacing h restricted
/// to |x| <= R_trunc, lifted to the graph. Weights approximate
/// dsigma = sqrt(1 + |grad phi|^2) dx over the node cell; normals point away
/// from D (downward component negative). Immutable after construction.
class BoundaryMesh {
 public:
  int n = 0;
  double h = 0;
  double R_trunc = 0;
  GraphDomain domain;

  std::vector<Vec> nodes;       // (x_i, phi(x_i)) in R^n
  std::vector<double> weights;  // quadrature weights
  std::vector<Vec> normals;     // unit outward normals
  std::vector<Vec> grad_phi;    // centered-difference gradient, (n-1)-dim

  /// Centered second differences of phi at node i (used by the singular-cell
  /// curvature correction; computed on demand to keep large meshes lean).
  Mat phi_hessian(int i) const {
    const int d = n - 1;
    const Vec x = x_of(i);
    Mat hp(d);
    const double p0 = domain.phi(x);
    for (int j = 0; j < d; ++j) {
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fp = domain.phi(xp), fm = domain.phi(xm);
      hp(j, j) = (fp - 2.0 * p0 + fm) / (h * h);
      for (int k = j + 1; k < d; ++k) {
        Vec xpp = x, xpm = x, xmp = x, xmm = x;
        xpp[j] += h; xpp[k] += h;
        xpm[j] += h; xpm[k] -= h;
        xmp[j] -= h; xmp[k] += h;
        xmm[j] -= h; xmm[k] -= h;
        const double v = (domain.phi(xpp) - domain.phi(xpm) - domain.phi(xmp) +
                          domain.phi(xmm)) / (4.0 * h * h);
        hp(j, k) = v;
        hp(k, j) = v;
      }
    }
    return hp;
  }

  int size() const { return static_cast<int>(nodes.size()); }
  int boundary_dim() const { return n - 1; }

  /// Horizontal coordinates of node i.
  Vec x_of(int i) const { return nodes[i].head(n - 1); }

  /// Tangent vector T_j = e_j + (d phi / d x_j) e_n at node i (not unit).
  Vec tangent(int i, int j) const {
    Vec t = Vec::zero(n);
    t[j] = 1.0;
    t[n - 1] = grad_phi[i][j];
    return t;
  }

  /// Node index at lattice offset `delta` from node i, or -1.
  int neighbor(int i, int axis, int step) const {
    auto key = lattice_[i];
    key[axis] += step;
    const auto it = index_.find(pack(key));
    return it == index_.end() ? -1 : it->second;
  }

  double total_weight() const {
    double s = 0;
    for (double w : weights) s += w;
    return s;
  }

  /// Approximate dist(X, boundary): node distances plus the exactly flat
  /// far field beyond the support radius.
  double dist_to_boundary(const Vec& X) const {
    const double rho = domain.support_radius;
    const Vec xh = X.head(n - 1);
    const double rx = xh.norm();
    const double t = X[n - 1];
    double d;
    if (domain.amplitude == 0.0) {
      d = std::abs(t);
    } else {
      d = (rx >= rho) ? std::abs(t) : std::hypot(rho - rx, t);
      for (const auto& q : nodes) d = std::min(d, (X - q).norm());
    }
    return d;
  }

  friend BoundaryMesh build_mesh(const GraphDomain& domain, double h, double R_trunc);

 private:
  std::vector<std::array<std::int32_t, kMaxDim - 1>> lattice_;
  std::unordered_map<std::int64_t, int> index_;
  std::int64_t stride_ = 0;

  std::int64_t pack(const std::array<std::int32_t, kMaxDim - 1>& c) const {
    std::int64_t key = 0;
    for (int j = 0; j < n - 1; ++j) key = key * stride_ + (c[j] + stride_ / 2);
    return key;
  }
};

/// Build the boundary mesh. Requires h > 0 and R_trunc >= 4 rho so the
/// truncation keeps a flat collar around the nontrivial graph.
inline BoundaryMesh build_mesh(const GraphDomain& domain, double h, double R_trunc) {
  if (h <= 0) throw std::invalid_argument("build_mesh: h > 0 required");
  if (R_trunc < 4.0 * domain.support_radius)
    throw std::invalid_argument("build_mesh: R_trunc >= 4 rho required (R_trunc=" +
                                std::to_string(R_trunc) + ", rho=" +
                                std::to_string(domain.support_radius) + ")");
  BoundaryMesh m;
  m.n = domain.n;
  m.h = h;
  m.R_trunc = R_trunc;
  m.domain = domain;
  const int d = domain.n - 1;
  const int M = static_cast<int>(std::floor(R_trunc / h + 1e-12));
  m.stride_ = 2 * static_cast<std::int64_t>(M) + 4;

  std::array<std::int32_t, kMaxDim - 1> c{};
  std::vector<int> idx(d, -M);
  const double cell = std::pow(h, d);
  while (true) {
    Vec x(d);
    for (int j = 0; j < d; ++j) x[j] = idx[j] * h;
    if (x.norm() <= R_trunc + 1e-12) {
      Vec g(d);
      for (int j = 0; j < d; ++j) {
        Vec xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        g[j] = (domain.phi(xp) - domain.phi(xm)) / (2.0 * h);
      }
      const double slant = std::sqrt(1.0 + g.norm_sq());
      Vec nrm(domain.n);
      for (int j = 0; j < d; ++j) nrm[j] = g[j] / slant;
      nrm[d] = -1.0 / slant;

      for (int j = 0; j < d; ++j) c[j] = idx[j];
      m.index_[m.pack(c)] = m.size();
      m.lattice_.push_back(c);
      m.nodes.push_back(domain.lift(x));
      m.weights.push_back(cell * slant);
      m.normals.push_back(nrm);
      m.grad_phi.push_back(g);
    }
    int j = 0;
    for (; j < d; ++j) {
      if (++idx[j] <= M) break;
      idx[j] = -M;
    }
    if (j == d) break;
  }
  return m;
}

/// Discrete tangential derivative along T_dir of the pullback f(x, phi(x)),
/// centered differences in the x_dir lattice direction (one-sided at the
/// truncation rim). dir is 0-based, 0 <= dir < n-1.
inline std::vector<double> tangential_derivative(const BoundaryMesh& mesh,
                                                 const std::vector<double>& f, int dir) {
  if (dir < 0 || dir >= mesh.n - 1)
    throw std::out_of_range("tangential_derivative: direction index out of range");
  if (static_cast<int>(f.size()) != mesh.size())
    throw std::invalid_argument("tangential_derivative: density/mesh size mismatch");
  std::vector<double> out(f.size(), 0.0);
  for (int i = 0; i < mesh.size(); ++i) {
    const int ip = mesh.neighbor(i, dir, +1);
    const int im = mesh.neighbor(i, dir, -1);
    if (ip >= 0 && im >= 0)
      out[i] = (f[ip] - f[im]) / (2.0 * mesh.h);
    else if (ip >= 0)
      out[i] = (f[ip] - f[i]) / mesh.h;
    else if (im >= 0)
      out[i] = (f[i] - f[im]) / mesh.h;
  }
  return out;
}

/// Nodes in the dyadic annulus 2^{j-1} < |x| <= 2^{j+1}.
inline std::vector<int> annulus_nodes(const BoundaryMesh& mesh, int j) {
  const double outer = std::pow(2.0, j + 1);
  if (outer > mesh.R_trunc + 1e-12)
    throw std::invalid_argument("annulus_nodes: annulus j=" + std::to_string(j) +
                                " needs R_trunc >= " + std::to_string(outer));
  const double inner = std::pow(2.0, j - 1);
  std::vector<int> out;
  for (int i = 0; i < mesh.size(); ++i) {
    const double r = mesh.x_of(i).norm();
    if (r > inner && r <= outer) out.push_back(i);
  }
  return out;
}

// --- external interfaces -----------------------------------------------

struct DomainConfig {
  GraphDomain domain;
  double h = 0.25;
  double R_trunc = 4.0;
};

/// Key-value text config: one `key = value` per line, '#' comments.
/// Keys: dim, profile, amplitude, rho, h, rtrunc.
inline DomainConfig parse_domain_config(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  DomainConfig cfg;
  const int dim = kv.count("dim") ? std::stoi(kv["dim"]) : 3;
  const Profile prof = profile_from_string(kv.count("profile") ? kv["profile"] : "flat");
  const double amp = kv.count("amplitude") ? std::stod(kv["amplitude"]) : 0.0;
  const double rho = kv.count("rho") ? std::stod(kv["rho"]) : 1.0;
  cfg.domain = GraphDomain::make(dim, prof, amp, rho);
  if (kv.count("h")) cfg.h = std::stod(kv["h"]);
  if (kv.count("rtrunc")) cfg.R_trunc = std::stod(kv["rtrunc"]);
  return cfg;
}

inline DomainConfig parse_domain_config(const std::string& text) {
  std::istringstream in(text);
  return parse_domain_config(in);
}

inline void mesh_to_csv(const BoundaryMesh& mesh, std::ostream& out) {
  const int d = mesh.n - 1;
  for (int j = 0; j < d; ++j) out << "x" << j << ",";
  out << "phi,weight";
  for (int j = 0; j < mesh.n; ++j) out << ",n" << j;
  out << "\n";
  for (int i = 0; i < mesh.size(); ++i) {
    for (int j = 0; j < d; ++j) out << mesh.nodes[i][j] << ",";
    out << mesh.nodes[i][d] << "," << mesh.weights[i];
    for (int j = 0; j < mesh.n; ++j) out << "," << mesh.normals[i][j];
    out << "\n";
  }
}

}  // namespace bielab
